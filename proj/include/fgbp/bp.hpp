#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fgbp/error.hpp"
#include "fgbp/factor_graph.hpp"
#include "fgbp/json_out.hpp"

namespace fgbp {

struct BpResult;
inline double bethe_free_energy(const FactorGraph& g, const BpResult& result);

enum class Semiring { SumProduct, MaxProduct };
enum class Schedule { Synchronous, Sequential };

inline const char* to_string(Semiring s) {
  return s == Semiring::SumProduct ? "sum_product" : "max_product";
}
inline const char* to_string(Schedule s) {
  return s == Schedule::Synchronous ? "synchronous" : "sequential";
}

struct BpConfig {
  Semiring semiring = Semiring::SumProduct;
  Schedule schedule = Schedule::Synchronous;
  double damping = 0.0;
  int max_iterations = 500;
  double tolerance = 1e-8;
  // Exact tabular marginalization is refused above this factor arity; such
  // graphs belong to the neural path.
  std::size_t max_factor_arity = 8;

  void validate() const {
    if (damping < 0.0 || damping >= 1.0)
      throw ValidationError("BpConfig: damping must be in [0, 1)");
    if (tolerance <= 0.0) throw ValidationError("BpConfig: tolerance must be > 0");
    if (max_iterations <= 0)
      throw ValidationError("BpConfig: max_iterations must be positive");
  }
};

// One directed message. log_values is indexed by the variable endpoint's
// states and normalized so logsumexp == 0.
struct Message {
  int variable = 0;
  int factor = 0;
  bool to_factor = true;
  std::vector<double> log_values;
};

struct BpResult {
  std::vector<std::vector<double>> variable_beliefs;
  std::vector<std::vector<double>> factor_beliefs;  // flat row-major joints
  bool converged = false;
  int iterations_used = 0;
  double final_delta = 0.0;
  // present when beliefs are locally consistent (tree fixed points, converged
  // sum-product runs); absent otherwise
  std::optional<double> bethe_free_energy;
};

namespace detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double logsumexp(const std::vector<double>& xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline void log_normalize(std::vector<double>& xs) {
  const double lse = logsumexp(xs);
  if (lse == kNegInf)
    throw ValidationError("message has no support (all states impossible)");
  for (double& x : xs) x -= lse;
}

inline std::vector<double> to_distribution(std::vector<double> log_values) {
  log_normalize(log_values);
  std::vector<double> p(log_values.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_values[i]);
  return p;
}

// max |a - b| treating matching -inf entries as equal
inline double log_delta(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == kNegInf && b[i] == kNegInf) continue;
    const double diff = std::abs(a[i] - b[i]);
    d = std::max(d, std::isfinite(diff) ? diff
                                        : std::numeric_limits<double>::infinity());
  }
  return d;
}

}  // namespace detail

// Eq. 5 message: product (log-sum) of all incoming factor messages except the
// recipient. An empty set (leaf variable) yields the uniform message.
inline Message variable_to_factor(const FactorGraph& g, int variable,
                                  int factor,
                                  const std::vector<Message>& incoming) {
  const std::size_t card = static_cast<std::size_t>(g.cardinality(variable));
  std::vector<double> lv(card, 0.0);
  for (const Message& m : incoming) {
    if (m.log_values.size() != card)
      throw DimensionError("variable_to_factor: message length " +
                           std::to_string(m.log_values.size()) +
                           " vs cardinality " + std::to_string(card));
    for (std::size_t s = 0; s < card; ++s) lv[s] += m.log_values[s];
  }
  detail::log_normalize(lv);
  return {variable, factor, true, std::move(lv)};
}

// Eq. 6 message: factor table combined with all other incoming variable
// messages, marginalized (sum or max) onto the target variable.
inline Message factor_to_variable(const FactorGraph& g, int factor, int target,
                                  const std::vector<Message>& incoming,
                                  Semiring semiring,
                                  std::size_t max_arity = 8) {
  const FactorNode& f = g.factors()[static_cast<std::size_t>(factor)];
  if (!f.table)
    throw UnsupportedOperationError("factor_to_variable: factor " +
                                    std::to_string(factor) + " has no table");
  if (f.scope.size() > max_arity)
    throw CapacityError("factor_to_variable: arity " +
                        std::to_string(f.scope.size()) + " exceeds guard " +
                        std::to_string(max_arity));
  const std::vector<double>& lt = g.log_table(factor);
  std::size_t target_pos = f.scope.size();
  std::vector<const std::vector<double>*> msg_at(f.scope.size(), nullptr);
  for (std::size_t k = 0; k < f.scope.size(); ++k)
    if (f.scope[k] == target) target_pos = k;
  if (target_pos == f.scope.size())
    throw ValidationError("factor_to_variable: variable " +
                          std::to_string(target) + " not in scope of factor " +
                          std::to_string(factor));
  for (const Message& m : incoming) {
    bool found = false;
    for (std::size_t k = 0; k < f.scope.size(); ++k)
      if (f.scope[k] == m.variable && k != target_pos) {
        msg_at[k] = &m.log_values;
        found = true;
      }
    if (!found)
      throw ValidationError("factor_to_variable: unexpected message from " +
                            std::to_string(m.variable));
  }
  for (std::size_t k = 0; k < f.scope.size(); ++k)
    if (k != target_pos && msg_at[k] == nullptr)
      throw ValidationError("factor_to_variable: missing message from " +
                            std::to_string(f.scope[k]));

  const std::size_t card =
      static_cast<std::size_t>(g.cardinality(target));
  std::vector<double> lv(card, detail::kNegInf);
  std::vector<int> state(f.scope.size(), 0);
  std::size_t idx = 0;
  bool done = false;
  while (!done) {
    double v = lt[idx];
    if (v != detail::kNegInf)
      for (std::size_t k = 0; k < f.scope.size(); ++k) {
        if (k == target_pos) continue;
        v += (*msg_at[k])[static_cast<std::size_t>(state[k])];
        if (v == detail::kNegInf) break;
      }
    double& slot = lv[static_cast<std::size_t>(state[target_pos])];
    slot = semiring == Semiring::SumProduct ? detail::logaddexp(slot, v)
                                            : std::max(slot, v);
    ++idx;
    done = true;
    for (std::size_t k = state.size(); k-- > 0;) {
      if (++state[k] < g.cardinality(f.scope[k])) {
        done = false;
        break;
      }
      state[k] = 0;
    }
  }
  detail::log_normalize(lv);
  return {target, factor, false, std::move(lv)};
}

namespace detail {

struct BpState {
  // one slot per graph edge, canonical order (factor asc, variable asc)
  std::vector<std::vector<double>> vf, fv;
  std::vector<std::vector<std::size_t>> edges_of_var, edges_of_factor;
  std::vector<std::size_t> scope_pos;  // position of the edge's variable in
                                       // the factor's scope list
};

inline BpState init_state(const FactorGraph& g) {
  BpState st;
  const auto& edges = g.edges();
  st.vf.resize(edges.size());
  st.fv.resize(edges.size());
  st.edges_of_var.resize(g.num_variables());
  st.edges_of_factor.resize(g.num_factors());
  st.scope_pos.resize(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::size_t card =
        static_cast<std::size_t>(g.cardinality(edges[e].variable));
    st.vf[e].assign(card, -std::log(static_cast<double>(card)));
    st.fv[e] = st.vf[e];
    st.edges_of_var[static_cast<std::size_t>(edges[e].variable)].push_back(e);
    st.edges_of_factor[static_cast<std::size_t>(edges[e].factor)].push_back(e);
    const auto& scope = g.factors()[static_cast<std::size_t>(edges[e].factor)].scope;
    st.scope_pos[e] = static_cast<std::size_t>(
        std::find(scope.begin(), scope.end(), edges[e].variable) -
        scope.begin());
  }
  return st;
}

// damped, normalized write; returns the post-update delta
inline double store_message(std::vector<double>& slot,
                            std::vector<double> fresh, double damping) {
  log_normalize(fresh);
  if (damping > 0.0) {
    for (std::size_t s = 0; s < fresh.size(); ++s)
      fresh[s] = (1.0 - damping) * fresh[s] + damping * slot[s];
    log_normalize(fresh);
  }
  const double d = log_delta(fresh, slot);
  slot = std::move(fresh);
  return d;
}

inline std::vector<double> compute_vf(const FactorGraph& g, const BpState& st,
                                      std::size_t e) {
  const FactorEdge& edge = g.edges()[e];
  const std::size_t card =
      static_cast<std::size_t>(g.cardinality(edge.variable));
  std::vector<double> lv(card, 0.0);
  for (std::size_t other : st.edges_of_var[static_cast<std::size_t>(edge.variable)]) {
    if (other == e) continue;
    for (std::size_t s = 0; s < card; ++s) lv[s] += st.fv[other][s];
  }
  return lv;
}

inline std::vector<double> compute_fv(const FactorGraph& g, const BpState& st,
                                      std::size_t e, Semiring semiring) {
  const FactorEdge& edge = g.edges()[e];
  const FactorNode& f = g.factors()[static_cast<std::size_t>(edge.factor)];
  const std::vector<double>& lt = g.log_table(edge.factor);
  const std::size_t target_pos = st.scope_pos[e];
  const auto& fedges = st.edges_of_factor[static_cast<std::size_t>(edge.factor)];
  // map scope position -> incoming vf message
  std::vector<const std::vector<double>*> msg_at(f.scope.size(), nullptr);
  for (std::size_t fe : fedges)
    if (fe != e) msg_at[st.scope_pos[fe]] = &st.vf[fe];

  const std::size_t card =
      static_cast<std::size_t>(g.cardinality(edge.variable));
  std::vector<double> lv(card, kNegInf);
  std::vector<int> state(f.scope.size(), 0);
  std::size_t idx = 0;
  bool done = false;
  while (!done) {
    double v = lt[idx];
    if (v != kNegInf)
      for (std::size_t k = 0; k < f.scope.size(); ++k) {
        if (k == target_pos) continue;
        v += (*msg_at[k])[static_cast<std::size_t>(state[k])];
        if (v == kNegInf) break;
      }
    double& slot = lv[static_cast<std::size_t>(state[target_pos])];
    slot = semiring == Semiring::SumProduct ? logaddexp(slot, v)
                                            : std::max(slot, v);
    ++idx;
    done = true;
    for (std::size_t k = state.size(); k-- > 0;) {
      if (++state[k] < g.cardinality(f.scope[k])) {
        done = false;
        break;
      }
      state[k] = 0;
    }
  }
  return lv;
}

}  // namespace detail

inline BpResult run_bp(const FactorGraph& g, const BpConfig& cfg) {
  cfg.validate();
  if (!g.all_tabular())
    throw UnsupportedOperationError("run_bp: all factors need tables");
  for (const FactorNode& f : g.factors())
    if (f.scope.size() > cfg.max_factor_arity)
      throw CapacityError("run_bp: factor " + std::to_string(f.id) +
                          " arity " + std::to_string(f.scope.size()) +
                          " exceeds guard " +
                          std::to_string(cfg.max_factor_arity) +
                          "; use the neural path");

  detail::BpState st = detail::init_state(g);
  const std::size_t n_edges = g.edges().size();

  BpResult res;
  double delta = 0.0;
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    delta = 0.0;
    if (cfg.schedule == Schedule::Synchronous) {
      std::vector<std::vector<double>> fresh(n_edges);
      for (std::size_t e = 0; e < n_edges; ++e)
        fresh[e] = detail::compute_vf(g, st, e);
      for (std::size_t e = 0; e < n_edges; ++e)
        delta = std::max(delta,
                         detail::store_message(st.vf[e], std::move(fresh[e]),
                                               cfg.damping));
      for (std::size_t e = 0; e < n_edges; ++e)
        fresh[e] = detail::compute_fv(g, st, e, cfg.semiring);
      for (std::size_t e = 0; e < n_edges; ++e)
        delta = std::max(delta,
                         detail::store_message(st.fv[e], std::move(fresh[e]),
                                               cfg.damping));
    } else {
      // factor-at-a-time sweep; each update sees the latest messages
      for (std::size_t fid = 0; fid < g.num_factors(); ++fid) {
        for (std::size_t e : st.edges_of_factor[fid])
          delta = std::max(
              delta, detail::store_message(st.vf[e], detail::compute_vf(g, st, e),
                                           cfg.damping));
        for (std::size_t e : st.edges_of_factor[fid])
          delta = std::max(delta, detail::store_message(
                                      st.fv[e],
                                      detail::compute_fv(g, st, e, cfg.semiring),
                                      cfg.damping));
      }
    }
    res.iterations_used = iter;
    if (delta < cfg.tolerance) {
      res.converged = true;
      break;
    }
  }
  res.final_delta = delta;

  // Eq. 7 readout
  res.variable_beliefs.resize(g.num_variables());
  for (std::size_t v = 0; v < g.num_variables(); ++v) {
    const std::size_t card =
        static_cast<std::size_t>(g.cardinality(static_cast<int>(v)));
    std::vector<double> lv(card, 0.0);
    for (std::size_t e : st.edges_of_var[v])
      for (std::size_t s = 0; s < card; ++s) lv[s] += st.fv[e][s];
    res.variable_beliefs[v] = detail::to_distribution(std::move(lv));
  }
  res.factor_beliefs.resize(g.num_factors());
  for (std::size_t fid = 0; fid < g.num_factors(); ++fid) {
    const FactorNode& f = g.factors()[fid];
    const std::vector<double>& lt = g.log_table(static_cast<int>(fid));
    std::vector<double> lv(lt.size());
    std::vector<int> state(f.scope.size(), 0);
    std::size_t idx = 0;
    bool done = false;
    std::vector<const std::vector<double>*> msg_at(f.scope.size(), nullptr);
    for (std::size_t e : st.edges_of_factor[fid])
      msg_at[st.scope_pos[e]] = &st.vf[e];
    while (!done) {
      double v = lt[idx];
      if (v != detail::kNegInf)
        for (std::size_t k = 0; k < f.scope.size(); ++k)
          v += (*msg_at[k])[static_cast<std::size_t>(state[k])];
      lv[idx] = v;
      ++idx;
      done = true;
      for (std::size_t k = state.size(); k-- > 0;) {
        if (++state[k] < g.cardinality(f.scope[k])) {
          done = false;
          break;
        }
        state[k] = 0;
      }
    }
    res.factor_beliefs[fid] = detail::to_distribution(std::move(lv));
  }

  // Bethe free energy is only meaningful at locally consistent fixed points.
  try {
    res.bethe_free_energy = bethe_free_energy(g, res);
  } catch (const ValidationError&) {
    res.bethe_free_energy.reset();
  }
  return res;
}

// Per-variable argmax of beliefs; ties resolve to the lowest state index.
inline std::vector<int> map_decode(const BpResult& result) {
  std::vector<int> x;
  for (const auto& b : result.variable_beliefs) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < b.size(); ++s)
      if (b[s] > b[best]) best = s;
    x.push_back(static_cast<int>(best));
  }
  return x;
}

// F = sum_f sum_x b_f(x) (ln b_f(x) - ln f(x))
//     - sum_v (deg(v) - 1) sum_s b_v(s) ln b_v(s)
inline double bethe_free_energy(const FactorGraph& g, const BpResult& result) {
  if (result.variable_beliefs.size() != g.num_variables() ||
      result.factor_beliefs.size() != g.num_factors())
    throw ValidationError("bethe_free_energy: result does not match graph");
  constexpr double tiny = 1e-15;
  // local consistency within 1e-6
  for (const FactorNode& f : g.factors()) {
    const auto& joint = result.factor_beliefs[static_cast<std::size_t>(f.id)];
    for (std::size_t k = 0; k < f.scope.size(); ++k) {
      const int v = f.scope[k];
      std::vector<double> marg(static_cast<std::size_t>(g.cardinality(v)), 0.0);
      std::vector<int> state(f.scope.size(), 0);
      std::size_t idx = 0;
      bool done = false;
      while (!done) {
        marg[static_cast<std::size_t>(state[k])] += joint[idx];
        ++idx;
        done = true;
        for (std::size_t j = state.size(); j-- > 0;) {
          if (++state[j] < g.cardinality(f.scope[j])) {
            done = false;
            break;
          }
          state[j] = 0;
        }
      }
      for (std::size_t s = 0; s < marg.size(); ++s)
        if (std::abs(marg[s] -
                     result.variable_beliefs[static_cast<std::size_t>(v)][s]) >
            1e-6)
          throw ValidationError(
              "bethe_free_energy: beliefs locally inconsistent at factor " +
              std::to_string(f.id));
    }
  }
  double f_term = 0.0;
  for (const FactorNode& f : g.factors()) {
    const auto& joint = result.factor_beliefs[static_cast<std::size_t>(f.id)];
    const std::vector<double>& lt = g.log_table(f.id);
    for (std::size_t i = 0; i < joint.size(); ++i) {
      if (joint[i] <= tiny) continue;
      f_term += joint[i] * (std::log(joint[i]) - lt[i]);
    }
  }
  double v_term = 0.0;
  for (std::size_t v = 0; v < g.num_variables(); ++v) {
    const double deg = static_cast<double>(g.factors_of(static_cast<int>(v)).size());
    double h = 0.0;
    for (double b : result.variable_beliefs[v])
      if (b > tiny) h += b * std::log(b);
    v_term += (deg - 1.0) * h;
  }
  return f_term - v_term;
}

struct MeanFieldResult {
  std::vector<std::vector<double>> beliefs;
  bool converged = false;
  int iterations_used = 0;
};

// Naive mean field: coordinate ascent on the fully factorized family,
// variables updated in id order.
inline MeanFieldResult mean_field(const FactorGraph& g, int max_iterations = 500,
                                  double tolerance = 1e-8,
                                  std::size_t max_arity = 8) {
  if (!g.all_tabular())
    throw UnsupportedOperationError("mean_field: all factors need tables");
  for (const FactorNode& f : g.factors())
    if (f.scope.size() > max_arity)
      throw CapacityError("mean_field: factor arity " +
                          std::to_string(f.scope.size()) + " exceeds guard " +
                          std::to_string(max_arity));
  MeanFieldResult res;
  res.beliefs.resize(g.num_variables());
  for (std::size_t v = 0; v < g.num_variables(); ++v)
    res.beliefs[v].assign(
        static_cast<std::size_t>(g.cardinality(static_cast<int>(v))),
        1.0 / static_cast<double>(g.cardinality(static_cast<int>(v))));

  constexpr double clip = -1e9;  // stand-in for log 0
  for (int iter = 1; iter <= max_iterations; ++iter) {
    double delta = 0.0;
    for (std::size_t v = 0; v < g.num_variables(); ++v) {
      const std::size_t card =
          static_cast<std::size_t>(g.cardinality(static_cast<int>(v)));
      std::vector<double> score(card, 0.0);
      for (int fid : g.factors_of(static_cast<int>(v))) {
        const FactorNode& f = g.factors()[static_cast<std::size_t>(fid)];
        const std::vector<double>& lt = g.log_table(fid);
        std::size_t vpos = static_cast<std::size_t>(
            std::find(f.scope.begin(), f.scope.end(), static_cast<int>(v)) -
            f.scope.begin());
        std::vector<int> state(f.scope.size(), 0);
        std::size_t idx = 0;
        bool done = false;
        while (!done) {
          double w = 1.0;
          for (std::size_t k = 0; k < f.scope.size(); ++k) {
            if (k == vpos) continue;
            w *= res.beliefs[static_cast<std::size_t>(f.scope[k])]
                            [static_cast<std::size_t>(state[k])];
          }
          if (w > 0.0)
            score[static_cast<std::size_t>(state[vpos])] +=
                w * std::max(lt[idx], clip);
          ++idx;
          done = true;
          for (std::size_t k = state.size(); k-- > 0;) {
            if (++state[k] < g.cardinality(f.scope[k])) {
              done = false;
              break;
            }
            state[k] = 0;
          }
        }
      }
      // softmax update
      double mx = score[0];
      for (double s : score) mx = std::max(mx, s);
      double z = 0.0;
      for (double s : score) z += std::exp(s - mx);
      for (std::size_t s = 0; s < card; ++s) {
        const double fresh = std::exp(score[s] - mx) / z;
        delta = std::max(delta, std::abs(fresh - res.beliefs[v][s]));
        res.beliefs[v][s] = fresh;
      }
    }
    res.iterations_used = iter;
    if (delta < tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

inline Json bp_result_to_json(const BpResult& r) {
  Json doc = Json::object();
  Json vb = Json::array();
  for (const auto& b : r.variable_beliefs) vb.push(Json::number_array(b));
  doc.set("variable_beliefs", std::move(vb));
  Json fb = Json::array();
  for (const auto& b : r.factor_beliefs) fb.push(Json::number_array(b));
  doc.set("factor_beliefs", std::move(fb));
  doc.set("converged", Json::boolean(r.converged));
  doc.set("iterations_used", Json::integer(r.iterations_used));
  doc.set("final_delta", Json::number(r.final_delta));
  doc.set("bethe_free_energy", r.bethe_free_energy
                                   ? Json::number(*r.bethe_free_energy)
                                   : Json::null());
  Json decoded = Json::integer_array(map_decode(r));
  doc.set("map_decode", std::move(decoded));
  return doc;
}

}  // namespace fgbp
