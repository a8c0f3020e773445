#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fgbp/error.hpp"
#include "fgbp/rng.hpp"

namespace fgbp {

// ---------------------------------------------------------------------------
// Tensor: dense row-major double storage. The last axis varies fastest.
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), values_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (count(shape_) != values_.size())
      throw DimensionError("Tensor: shape " + shape_str() + " needs " +
                           std::to_string(count(shape_)) + " values, got " +
                           std::to_string(values_.size()));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }
  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.values_.begin(), t.values_.end(), v);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  std::size_t rows() const {
    check_rank(2, "rows");
    return shape_[0];
  }
  std::size_t cols() const {
    check_rank(2, "cols");
    return shape_[1];
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) {
    check_rank(2, "at");
    return values_[r * shape_[1] + c];
  }
  double at(std::size_t r, std::size_t c) const {
    check_rank(2, "at");
    return values_[r * shape_[1] + c];
  }

  std::vector<double>& data() { return values_; }
  const std::vector<double>& data() const { return values_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

 private:
  void check_rank(std::size_t r, const char* op) const {
    if (shape_.size() != r)
      throw DimensionError(std::string("Tensor::") + op + ": rank-" +
                           std::to_string(r) + " required, shape is " +
                           shape_str());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Reverse-mode autodiff. Nodes are created in topological order (operands
// before results); backward() walks the reachable set in reverse creation
// order, visiting each node exactly once.
// ---------------------------------------------------------------------------

struct GraphNode;
using Var = std::shared_ptr<GraphNode>;

struct GraphNode {
  Tensor value;
  Tensor grad;  // allocated on first accumulation during backward
  bool requires_grad = false;
  bool grad_ready = false;
  std::uint64_t order = 0;
  std::vector<Var> parents;
  std::function<void(GraphNode&)> backprop;  // reads this->grad, feeds parents
};

namespace detail {
inline std::uint64_t next_order() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(GraphNode&)> backprop) {
  auto node = std::make_shared<GraphNode>();
  node->value = std::move(value);
  node->order = next_order();
  node->requires_grad = false;
  for (const Var& p : parents)
    if (p && p->requires_grad) node->requires_grad = true;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
  }
  return node;
}

inline void accumulate(GraphNode& node, const Tensor& g) {
  if (!node.requires_grad) return;
  if (!node.grad_ready) {
    node.grad = Tensor::zeros(node.value.shape());
    node.grad_ready = true;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}
}  // namespace detail

inline Var constant(Tensor value) {
  return detail::make_node(std::move(value), {}, nullptr);
}

inline Var leaf(Tensor value, bool requires_grad = true) {
  auto node = std::make_shared<GraphNode>();
  node->value = std::move(value);
  node->order = detail::next_order();
  node->requires_grad = requires_grad;
  return node;
}

// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node that
// requires gradients.
inline void backward(const Var& loss) {
  if (!loss) throw ValidationError("backward: null node");
  if (loss->value.size() != 1)
    throw ValidationError("backward: loss must be scalar, shape is " +
                          loss->value.shape_str());
  if (!loss->requires_grad) return;

  std::vector<GraphNode*> reachable;
  std::unordered_set<GraphNode*> seen;
  std::vector<GraphNode*> stack{loss.get()};
  seen.insert(loss.get());
  while (!stack.empty()) {
    GraphNode* n = stack.back();
    stack.pop_back();
    reachable.push_back(n);
    for (const Var& p : n->parents) {
      if (p && p->requires_grad && seen.insert(p.get()).second)
        stack.push_back(p.get());
    }
  }
  std::sort(reachable.begin(), reachable.end(),
            [](const GraphNode* a, const GraphNode* b) {
              return a->order > b->order;
            });

  detail::accumulate(*loss, Tensor::full(loss->value.shape(), 1.0));
  for (GraphNode* n : reachable) {
    if (n->backprop && n->grad_ready) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw DimensionError("add: shapes " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return detail::make_node(std::move(out), {a, b}, [a, b](GraphNode& n) {
    detail::accumulate(*a, n.grad);
    detail::accumulate(*b, n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value))
    throw DimensionError("sub: shapes " + a->value.shape_str() + " vs " +
                         b->value.shape_str());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return detail::make_node(std::move(out), {a, b}, [a, b](GraphNode& n) {
    detail::accumulate(*a, n.grad);
    Tensor neg = n.grad;
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
    detail::accumulate(*b, neg);
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return detail::make_node(std::move(out), {a}, [a, c](GraphNode& n) {
    Tensor g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= c;
    detail::accumulate(*a, g);
  });
}

inline Var relu(const Var& a) {
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return detail::make_node(std::move(out), {a}, [a](GraphNode& n) {
    Tensor g = n.grad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a->value[i] <= 0.0) g[i] = 0.0;
    detail::accumulate(*a, g);
  });
}

inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
  if (Tensor::count(shape) != a->value.size())
    throw DimensionError("reshape: cannot view " + a->value.shape_str() +
                         " as " + Tensor(shape).shape_str());
  Tensor out(std::move(shape), a->value.data());
  return detail::make_node(std::move(out), {a}, [a](GraphNode& n) {
    detail::accumulate(*a, Tensor(a->value.shape(), n.grad.data()));
  });
}

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw DimensionError("matmul: incompatible shapes " + A.shape_str() +
                         " x " + B.shape_str());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j)
        out[i * n + j] += av * B[p * n + j];
    }
  return detail::make_node(std::move(out), {a, b}, [a, b, m, k, n](GraphNode& node) {
    const Tensor& G = node.grad;
    if (a->requires_grad) {
      Tensor ga({m, k});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          if (g == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p)
            ga[i * k + p] += g * b->value[p * n + j];
        }
      detail::accumulate(*a, ga);
    }
    if (b->requires_grad) {
      Tensor gb({k, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a->value[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j)
            gb[p * n + j] += av * G[i * n + j];
        }
      detail::accumulate(*b, gb);
    }
  });
}

// X[m x n] + row vector b[n], broadcast over rows.
inline Var add_rowvec(const Var& x, const Var& b) {
  const Tensor& X = x->value;
  const Tensor& B = b->value;
  if (X.rank() != 2 || B.rank() != 1 || X.cols() != B.size())
    throw DimensionError("add_rowvec: shapes " + X.shape_str() + " vs " +
                         B.shape_str());
  const std::size_t m = X.rows(), n = X.cols();
  Tensor out = X;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += B[j];
  return detail::make_node(std::move(out), {x, b}, [x, b, m, n](GraphNode& node) {
    detail::accumulate(*x, node.grad);
    if (b->requires_grad) {
      Tensor gb({n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += node.grad[i * n + j];
      detail::accumulate(*b, gb);
    }
  });
}

// Concatenate two rank-2 tensors along columns (or two rank-1 tensors).
inline Var concat_cols(const Var& a, const Var& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (A.rank() == 1 && B.rank() == 1) {
    Tensor out({A.size() + B.size()});
    std::copy(A.data().begin(), A.data().end(), out.data().begin());
    std::copy(B.data().begin(), B.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(A.size()));
    const std::size_t na = A.size();
    return detail::make_node(std::move(out), {a, b}, [a, b, na](GraphNode& n) {
      if (a->requires_grad) {
        Tensor ga({na});
        std::copy(n.grad.data().begin(),
                  n.grad.data().begin() + static_cast<std::ptrdiff_t>(na),
                  ga.data().begin());
        detail::accumulate(*a, ga);
      }
      if (b->requires_grad) {
        Tensor gb({n.grad.size() - na});
        std::copy(n.grad.data().begin() + static_cast<std::ptrdiff_t>(na),
                  n.grad.data().end(), gb.data().begin());
        detail::accumulate(*b, gb);
      }
    });
  }
  if (A.rank() != 2 || B.rank() != 2 || A.rows() != B.rows())
    throw DimensionError("concat_cols: shapes " + A.shape_str() + " vs " +
                         B.shape_str());
  const std::size_t m = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor out({m, ca + cb});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = A[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j)
      out[i * (ca + cb) + ca + j] = B[i * cb + j];
  }
  return detail::make_node(std::move(out), {a, b}, [a, b, m, ca, cb](GraphNode& n) {
    if (a->requires_grad) {
      Tensor ga({m, ca});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ca; ++j)
          ga[i * ca + j] = n.grad[i * (ca + cb) + j];
      detail::accumulate(*a, ga);
    }
    if (b->requires_grad) {
      Tensor gb({m, cb});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cb; ++j)
          gb[i * cb + j] = n.grad[i * (ca + cb) + ca + j];
      detail::accumulate(*b, gb);
    }
  });
}

// Select rows of X by index; duplicates allowed. Backward scatter-adds.
inline Var gather_rows(const Var& x, std::vector<std::size_t> idx) {
  const Tensor& X = x->value;
  if (X.rank() != 2)
    throw DimensionError("gather_rows: rank-2 required, got " + X.shape_str());
  const std::size_t n = X.cols();
  for (std::size_t r : idx)
    if (r >= X.rows())
      throw IndexError("gather_rows: row " + std::to_string(r) +
                       " out of range " + std::to_string(X.rows()));
  Tensor out({idx.size(), n});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = X[idx[i] * n + j];
  auto indices = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  return detail::make_node(std::move(out), {x}, [x, indices, n](GraphNode& node) {
    Tensor gx(x->value.shape());
    for (std::size_t i = 0; i < indices->size(); ++i)
      for (std::size_t j = 0; j < n; ++j)
        gx[(*indices)[i] * n + j] += node.grad[i * n + j];
    detail::accumulate(*x, gx);
  });
}

enum class ReduceMode { Mean, Max, Sum };

inline const char* to_string(ReduceMode m) {
  switch (m) {
    case ReduceMode::Mean: return "mean";
    case ReduceMode::Max: return "max";
    case ReduceMode::Sum: return "sum";
  }
  return "?";
}

// Element-wise reduction of a non-empty list of same-shaped tensors.
// Max ties route the subgradient to the lowest list index.
inline Var reduce(const std::vector<Var>& xs, ReduceMode mode) {
  if (xs.empty()) throw AggregationError("reduce: empty list");
  const Tensor& first = xs[0]->value;
  for (const Var& x : xs)
    if (!x->value.same_shape(first))
      throw DimensionError("reduce: mixed shapes " + first.shape_str() +
                           " vs " + x->value.shape_str());
  const std::size_t n = first.size();
  const std::size_t k = xs.size();
  Tensor out = first;
  std::vector<std::size_t> argmax(mode == ReduceMode::Max ? n : 0, 0);
  if (mode == ReduceMode::Max) {
    for (std::size_t i = 1; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (xs[i]->value[j] > out[j]) {
          out[j] = xs[i]->value[j];
          argmax[j] = i;
        }
  } else {
    for (std::size_t i = 1; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += xs[i]->value[j];
    if (mode == ReduceMode::Mean)
      for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(k);
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  auto arg = std::make_shared<std::vector<std::size_t>>(std::move(argmax));
  return detail::make_node(
      std::move(out), std::move(parents), [xs, arg, mode, k](GraphNode& node) {
        if (mode == ReduceMode::Max) {
          for (std::size_t i = 0; i < k; ++i) {
            if (!xs[i]->requires_grad) continue;
            Tensor g(xs[i]->value.shape());
            for (std::size_t j = 0; j < g.size(); ++j)
              if ((*arg)[j] == i) g[j] = node.grad[j];
            detail::accumulate(*xs[i], g);
          }
        } else {
          const double s =
              mode == ReduceMode::Mean ? 1.0 / static_cast<double>(k) : 1.0;
          Tensor g = node.grad;
          for (std::size_t j = 0; j < g.size(); ++j) g[j] *= s;
          for (std::size_t i = 0; i < k; ++i) detail::accumulate(*xs[i], g);
        }
      });
}

// Group rows of X by `groups` (one id per row) into n_groups output rows.
// Mean over each group; empty groups yield zero rows. Max ties route to the
// lowest row index.
inline Var scatter_reduce(const Var& x, const std::vector<std::size_t>& groups,
                          std::size_t n_groups, ReduceMode mode) {
  const Tensor& X = x->value;
  if (X.rank() != 2)
    throw DimensionError("scatter_reduce: rank-2 required, got " +
                         X.shape_str());
  if (groups.size() != X.rows())
    throw DimensionError("scatter_reduce: " + std::to_string(groups.size()) +
                         " group ids for " + std::to_string(X.rows()) +
                         " rows");
  for (std::size_t g : groups)
    if (g >= n_groups)
      throw IndexError("scatter_reduce: group " + std::to_string(g) +
                       " out of range " + std::to_string(n_groups));
  const std::size_t n = X.cols();
  Tensor out({n_groups, n});
  std::vector<std::size_t> counts(n_groups, 0);
  std::vector<std::size_t> argmax;
  if (mode == ReduceMode::Max) {
    argmax.assign(n_groups * n, std::numeric_limits<std::size_t>::max());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const std::size_t g = groups[r];
      for (std::size_t j = 0; j < n; ++j) {
        const double v = X[r * n + j];
        if (counts[g] == 0 || v > out[g * n + j]) {
          out[g * n + j] = v;
          argmax[g * n + j] = r;
        }
      }
      counts[g]++;
    }
  } else {
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const std::size_t g = groups[r];
      counts[g]++;
      for (std::size_t j = 0; j < n; ++j) out[g * n + j] += X[r * n + j];
    }
    if (mode == ReduceMode::Mean)
      for (std::size_t g = 0; g < n_groups; ++g)
        if (counts[g] > 0)
          for (std::size_t j = 0; j < n; ++j)
            out[g * n + j] /= static_cast<double>(counts[g]);
  }
  auto grp = std::make_shared<std::vector<std::size_t>>(groups);
  auto cnt = std::make_shared<std::vector<std::size_t>>(std::move(counts));
  auto arg = std::make_shared<std::vector<std::size_t>>(std::move(argmax));
  return detail::make_node(
      std::move(out), {x}, [x, grp, cnt, arg, mode, n](GraphNode& node) {
        Tensor gx(x->value.shape());
        if (mode == ReduceMode::Max) {
          for (std::size_t g = 0; g < cnt->size(); ++g)
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t r = (*arg)[g * n + j];
              if (r != std::numeric_limits<std::size_t>::max())
                gx[r * n + j] += node.grad[g * n + j];
            }
        } else {
          for (std::size_t r = 0; r < grp->size(); ++r) {
            const std::size_t g = (*grp)[r];
            const double s = mode == ReduceMode::Mean
                                 ? 1.0 / static_cast<double>((*cnt)[g])
                                 : 1.0;
            for (std::size_t j = 0; j < n; ++j)
              gx[r * n + j] += s * node.grad[g * n + j];
          }
        }
        detail::accumulate(*x, gx);
      });
}

// Batched matrix-vector product: row e of q is an (m x n) matrix flattened
// row-major, row e of v is a length-n vector; output row e = Q_e * v_e.
inline Var edge_matvec(const Var& q, const Var& v, std::size_t m,
                       std::size_t n) {
  const Tensor& Q = q->value;
  const Tensor& V = v->value;
  if (Q.rank() != 2 || V.rank() != 2 || Q.rows() != V.rows() ||
      Q.cols() != m * n || V.cols() != n)
    throw DimensionError("edge_matvec: shapes " + Q.shape_str() + ", " +
                         V.shape_str() + " for m=" + std::to_string(m) +
                         " n=" + std::to_string(n));
  const std::size_t e_count = Q.rows();
  Tensor out({e_count, m});
  for (std::size_t e = 0; e < e_count; ++e)
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        acc += Q[e * m * n + i * n + j] * V[e * n + j];
      out[e * m + i] = acc;
    }
  return detail::make_node(std::move(out), {q, v}, [q, v, m, n, e_count](GraphNode& node) {
    if (q->requires_grad) {
      Tensor gq({e_count, m * n});
      for (std::size_t e = 0; e < e_count; ++e)
        for (std::size_t i = 0; i < m; ++i) {
          const double g = node.grad[e * m + i];
          if (g == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j)
            gq[e * m * n + i * n + j] += g * v->value[e * n + j];
        }
      detail::accumulate(*q, gq);
    }
    if (v->requires_grad) {
      Tensor gv({e_count, n});
      for (std::size_t e = 0; e < e_count; ++e)
        for (std::size_t i = 0; i < m; ++i) {
          const double g = node.grad[e * m + i];
          if (g == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j)
            gv[e * n + j] += g * q->value[e * m * n + i * n + j];
        }
      detail::accumulate(*v, gv);
    }
  });
}

// Column means over rows: X[m x n] -> [1 x n].
inline Var mean_rows(const Var& x) {
  const Tensor& X = x->value;
  if (X.rank() != 2)
    throw DimensionError("mean_rows: rank-2 required, got " + X.shape_str());
  const std::size_t m = X.rows(), n = X.cols();
  if (m == 0) throw AggregationError("mean_rows: no rows");
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += X[i * n + j];
  for (std::size_t j = 0; j < n; ++j) out[j] /= static_cast<double>(m);
  return detail::make_node(std::move(out), {x}, [x, m, n](GraphNode& node) {
    Tensor g({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] = node.grad[j] / static_cast<double>(m);
    detail::accumulate(*x, g);
  });
}

inline Var sum_all(const Var& x) {
  double total = 0.0;
  for (std::size_t i = 0; i < x->value.size(); ++i) total += x->value[i];
  return detail::make_node(Tensor::scalar(total), {x}, [x](GraphNode& node) {
    detail::accumulate(*x, Tensor::full(x->value.shape(), node.grad[0]));
  });
}

// -log softmax(logits)[target], max-subtracted for stability.
inline Var softmax_cross_entropy(const Var& logits, std::size_t target) {
  const Tensor& L = logits->value;
  if (L.rank() != 1)
    throw DimensionError("softmax_cross_entropy: rank-1 logits required, got " +
                         L.shape_str());
  if (target >= L.size())
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) +
                     " out of range " + std::to_string(L.size()));
  const std::size_t c = L.size();
  double mx = L[0];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, L[i]);
  double lse = 0.0;
  for (std::size_t i = 0; i < c; ++i) lse += std::exp(L[i] - mx);
  lse = mx + std::log(lse);
  return detail::make_node(
      Tensor::scalar(lse - L[target]), {logits},
      [logits, target, lse, c](GraphNode& node) {
        const double g = node.grad[0];
        Tensor gl({c});
        for (std::size_t i = 0; i < c; ++i) {
          const double p = std::exp(logits->value[i] - lse);
          gl[i] = g * (p - (i == target ? 1.0 : 0.0));
        }
        detail::accumulate(*logits, gl);
      });
}

// Weighted mean cross entropy over the active rows of a [batch x classes]
// logit matrix: sum_r w_r CE_r / sum_r w_r. `active` and `weights` may be
// empty (all rows active, unit weights).
inline Var softmax_cross_entropy_rows(const Var& logits,
                                      const std::vector<std::size_t>& targets,
                                      const std::vector<bool>& active = {},
                                      const std::vector<double>& weights = {}) {
  const Tensor& L = logits->value;
  if (L.rank() != 2)
    throw DimensionError("softmax_cross_entropy_rows: rank-2 required, got " +
                         L.shape_str());
  if (targets.size() != L.rows())
    throw DimensionError("softmax_cross_entropy_rows: " +
                         std::to_string(targets.size()) + " targets for " +
                         std::to_string(L.rows()) + " rows");
  if (!active.empty() && active.size() != L.rows())
    throw DimensionError("softmax_cross_entropy_rows: bad mask length");
  if (!weights.empty() && weights.size() != L.rows())
    throw DimensionError("softmax_cross_entropy_rows: bad weight length");
  const std::size_t c = L.cols();
  double weight_total = 0.0;
  double total = 0.0;
  std::vector<double> lses(L.rows());
  for (std::size_t r = 0; r < L.rows(); ++r) {
    if (!active.empty() && !active[r]) continue;
    if (targets[r] >= c)
      throw IndexError("softmax_cross_entropy_rows: target " +
                       std::to_string(targets[r]) + " out of range " +
                       std::to_string(c));
    const double w = weights.empty() ? 1.0 : weights[r];
    if (w < 0.0)
      throw ValidationError("softmax_cross_entropy_rows: negative weight");
    double mx = L[r * c];
    for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, L[r * c + i]);
    double lse = 0.0;
    for (std::size_t i = 0; i < c; ++i) lse += std::exp(L[r * c + i] - mx);
    lse = mx + std::log(lse);
    lses[r] = lse;
    total += w * (lse - L[r * c + targets[r]]);
    weight_total += w;
  }
  if (weight_total <= 0.0)
    throw AggregationError("softmax_cross_entropy_rows: no active rows");
  const double mean = total / weight_total;
  auto tgt = std::make_shared<std::vector<std::size_t>>(targets);
  auto act = std::make_shared<std::vector<bool>>(active);
  auto wts = std::make_shared<std::vector<double>>(weights);
  auto lse_cache = std::make_shared<std::vector<double>>(std::move(lses));
  return detail::make_node(
      Tensor::scalar(mean), {logits},
      [logits, tgt, act, wts, lse_cache, c, weight_total](GraphNode& node) {
        const double g = node.grad[0] / weight_total;
        const Tensor& L = logits->value;
        Tensor gl(L.shape());
        for (std::size_t r = 0; r < L.rows(); ++r) {
          if (!act->empty() && !(*act)[r]) continue;
          const double w = wts->empty() ? 1.0 : (*wts)[r];
          for (std::size_t i = 0; i < c; ++i) {
            const double p = std::exp(L[r * c + i] - (*lse_cache)[r]);
            gl[r * c + i] = g * w * (p - (i == (*tgt)[r] ? 1.0 : 0.0));
          }
        }
        detail::accumulate(*logits, gl);
      });
}

// ---------------------------------------------------------------------------
// MLP: alternating affine + ReLU, final layer affine only.
// ---------------------------------------------------------------------------

struct AffineParams {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
};

struct MlpParams {
  std::vector<AffineParams> layers;

  std::size_t input_width() const {
    if (layers.empty()) throw ValidationError("MlpParams: no layers");
    return layers.front().w.rows();
  }
  std::size_t output_width() const {
    if (layers.empty()) throw ValidationError("MlpParams: no layers");
    return layers.back().w.cols();
  }
};

// Scaled-uniform fan-in init: w ~ U(-s, s) with s = scale * sqrt(6/fan_in),
// b = 0. scale <= 1 keeps magnitudes inside the sqrt(6/fan_in) bound.
inline MlpParams make_mlp(const std::vector<std::size_t>& widths, Rng& rng,
                          double scale = 1.0) {
  if (widths.size() < 2) throw ValidationError("make_mlp: need >= 2 widths");
  if (scale <= 0.0 || scale > 1.0)
    throw ValidationError("make_mlp: scale must be in (0, 1]");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    if (in == 0 || out == 0) throw ValidationError("make_mlp: zero width");
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(in));
    Tensor w({in, out});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    p.layers.push_back({std::move(w), Tensor({out})});
  }
  return p;
}

// Lifted parameter handles for one MLP so gradients can be read back.
struct MlpVars {
  std::vector<std::pair<Var, Var>> layers;  // (w, b)
};

inline MlpVars lift(const MlpParams& p, bool requires_grad) {
  MlpVars v;
  for (const AffineParams& l : p.layers)
    v.layers.push_back({leaf(l.w, requires_grad), leaf(l.b, requires_grad)});
  return v;
}

// Row-wise forward: x is [batch x in] (or rank-1, treated as one row).
inline Var mlp_forward(const MlpVars& p, const Var& x) {
  if (p.layers.empty()) throw ValidationError("mlp_forward: no layers");
  const bool vec = x->value.rank() == 1;
  Var h = vec ? reshape(x, {1, x->value.size()}) : x;
  if (h->value.rank() != 2)
    throw DimensionError("mlp_forward: rank-1 or rank-2 input required, got " +
                         x->value.shape_str());
  if (h->value.cols() != p.layers.front().first->value.rows())
    throw DimensionError("mlp_forward: input width " +
                         std::to_string(h->value.cols()) + " vs fan-in " +
                         std::to_string(p.layers.front().first->value.rows()));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    h = add_rowvec(matmul(h, p.layers[l].first), p.layers[l].second);
    if (l + 1 < p.layers.size()) h = relu(h);
  }
  return vec ? reshape(h, {h->value.cols()}) : h;
}

// Value-level convenience (no gradient tracking).
inline Tensor mlp_forward(const MlpParams& p, const Tensor& x) {
  return mlp_forward(lift(p, false), constant(x))->value;
}

}  // namespace fgbp
