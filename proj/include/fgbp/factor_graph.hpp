#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fgbp/error.hpp"
#include "fgbp/json_out.hpp"
#include "fgbp/tensor.hpp"

namespace fgbp {

enum class FactorKind { Unary, Pairwise, MultiVertex };

inline const char* to_string(FactorKind k) {
  switch (k) {
    case FactorKind::Unary: return "unary";
    case FactorKind::Pairwise: return "pairwise";
    case FactorKind::MultiVertex: return "multi_vertex";
  }
  return "?";
}

inline FactorKind factor_kind_for_arity(std::size_t arity) {
  if (arity == 0) throw ConstructionError("factor with empty scope");
  if (arity == 1) return FactorKind::Unary;
  if (arity == 2) return FactorKind::Pairwise;
  return FactorKind::MultiVertex;
}

struct VariableNode {
  int id = 0;
  int cardinality = 1;
  std::optional<Tensor> feature;
};

// Tables are stored in the linear domain exactly as authored (entries >= 0);
// the graph caches a log-domain copy for scoring, with -inf marking zeros.
// Table layout is row-major over the scope: the LAST scope variable's index
// varies fastest.
struct FactorNode {
  int id = 0;
  std::vector<int> scope;
  std::optional<Tensor> table;
  std::optional<Tensor> feature;
  FactorKind kind = FactorKind::Unary;
};

struct FactorEdge {
  int variable = 0;
  int factor = 0;
};

class FactorGraph {
 public:
  // build_graph: validates everything, derives adjacency, then the graph is
  // immutable (modulo optional feature slots, which carry no structure).
  FactorGraph(std::vector<VariableNode> variables,
              std::vector<FactorNode> factors)
      : variables_(std::move(variables)), factors_(std::move(factors)) {
    validate();
    build_adjacency();
    build_log_tables();
  }

  const std::vector<VariableNode>& variables() const { return variables_; }
  const std::vector<FactorNode>& factors() const { return factors_; }
  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_factors() const { return factors_.size(); }

  int cardinality(int var_id) const { return variables_[check_var(var_id)].cardinality; }

  // N(x_i): incident factor ids, sorted ascending.
  const std::vector<int>& factors_of(int var_id) const {
    return var_neighbors_[check_var(var_id)];
  }
  // N(f_j): scope variable ids, sorted ascending.
  const std::vector<int>& variables_of(int factor_id) const {
    return factor_neighbors_[check_factor(factor_id)];
  }

  // Canonical edge order: factor id ascending, then variable id ascending.
  const std::vector<FactorEdge>& edges() const { return edges_; }
  std::vector<std::optional<Tensor>>& edge_features() { return edge_features_; }
  const std::vector<std::optional<Tensor>>& edge_features() const {
    return edge_features_;
  }

  const std::vector<double>& log_table(int factor_id) const {
    check_factor(factor_id);
    if (!factors_[factor_id].table)
      throw UnsupportedOperationError("factor " + std::to_string(factor_id) +
                                      " has no table");
    return log_tables_[factor_id];
  }

  bool all_tabular() const {
    for (const auto& f : factors_)
      if (!f.table) return false;
    return true;
  }

  // Flat row-major index of a scope state (last scope variable fastest).
  std::size_t table_index(const FactorNode& f,
                          const std::vector<int>& state) const {
    std::size_t idx = 0;
    for (std::size_t k = 0; k < f.scope.size(); ++k) {
      const int card = variables_[f.scope[k]].cardinality;
      if (state[k] < 0 || state[k] >= card)
        throw IndexError("state " + std::to_string(state[k]) +
                         " out of range for variable " +
                         std::to_string(f.scope[k]));
      idx = idx * static_cast<std::size_t>(card) +
            static_cast<std::size_t>(state[k]);
    }
    return idx;
  }

  std::size_t table_size(const FactorNode& f) const {
    std::size_t n = 1;
    for (int v : f.scope)
      n *= static_cast<std::size_t>(variables_[v].cardinality);
    return n;
  }

  // log of prod_r f_r(x_r); -inf when any factor entry is zero.
  double log_score(const std::vector<int>& assignment) const {
    if (assignment.size() != variables_.size())
      throw DimensionError("assignment length " +
                           std::to_string(assignment.size()) + " vs " +
                           std::to_string(variables_.size()) + " variables");
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] < 0 || assignment[i] >= variables_[i].cardinality)
        throw IndexError("assignment state " + std::to_string(assignment[i]) +
                         " out of range for variable " + std::to_string(i));
    double total = 0.0;
    std::vector<int> state;
    for (const FactorNode& f : factors_) {
      if (!f.table)
        throw UnsupportedOperationError("factor " + std::to_string(f.id) +
                                        " has no table");
      state.clear();
      for (int v : f.scope) state.push_back(assignment[v]);
      total += log_tables_[static_cast<std::size_t>(f.id)][table_index(f, state)];
    }
    return total;
  }

  double score(const std::vector<int>& assignment) const {
    return std::exp(log_score(assignment));
  }

  // True iff the bipartite graph is acyclic (every component is a tree).
  bool is_tree() const {
    const std::size_t n = variables_.size() + factors_.size();
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
      while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
      }
      return x;
    };
    for (const FactorEdge& e : edges_) {
      const std::size_t a = static_cast<std::size_t>(e.variable);
      const std::size_t b = variables_.size() + static_cast<std::size_t>(e.factor);
      const std::size_t ra = find(a), rb = find(b);
      if (ra == rb) return false;
      parent[ra] = rb;
    }
    return true;
  }

  // ------------------------------------------------------------------
  // File format: {"variables":[{"cardinality","id"}],
  //               "factors":[{"id","kind","log_space","scope","table"?}]}
  // Tables are written flat row-major (last scope variable fastest) in the
  // linear domain with log_space=false; parsing accepts log_space=true and
  // exponentiates. Doubles are printed with 17 significant digits so
  // serialize/parse round-trips bit-exactly.
  // ------------------------------------------------------------------

  std::string serialize() const {
    Json doc = Json::object();
    Json vars = Json::array();
    for (const VariableNode& v : variables_) {
      Json jv = Json::object();
      jv.set("cardinality", Json::integer(v.cardinality));
      jv.set("id", Json::integer(v.id));
      vars.push(std::move(jv));
    }
    Json facs = Json::array();
    for (const FactorNode& f : factors_) {
      Json jf = Json::object();
      jf.set("id", Json::integer(f.id));
      jf.set("kind", Json::string(to_string(f.kind)));
      jf.set("scope", Json::integer_array(f.scope));
      if (f.table) {
        jf.set("log_space", Json::boolean(false));
        jf.set("table", Json::number_array(f.table->data()));
      }
      facs.push(std::move(jf));
    }
    doc.set("variables", std::move(vars));
    doc.set("factors", std::move(facs));
    return doc.dump(2) + "\n";
  }

  static FactorGraph parse(const std::string& text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("factor graph parse: ") + e.what());
    }
    std::vector<VariableNode> vars;
    std::vector<FactorNode> facs;
    try {
      for (const auto& jv : doc.at("variables")) {
        VariableNode v;
        v.id = jv.at("id").get<int>();
        v.cardinality = jv.at("cardinality").get<int>();
        vars.push_back(std::move(v));
      }
      for (const auto& jf : doc.at("factors")) {
        FactorNode f;
        f.id = jf.at("id").get<int>();
        f.scope = jf.at("scope").get<std::vector<int>>();
        const std::string kind = jf.at("kind").get<std::string>();
        if (kind == "unary") f.kind = FactorKind::Unary;
        else if (kind == "pairwise") f.kind = FactorKind::Pairwise;
        else if (kind == "multi_vertex") f.kind = FactorKind::MultiVertex;
        else throw ValidationError("unknown factor kind \"" + kind + "\"");
        if (jf.contains("table")) {
          std::vector<double> values = jf.at("table").get<std::vector<double>>();
          const bool log_space =
              jf.contains("log_space") && jf.at("log_space").get<bool>();
          if (log_space)
            for (double& x : values) x = std::exp(x);
          const std::size_t n_values = values.size();
          f.table = Tensor({n_values}, std::move(values));
        }
        facs.push_back(std::move(f));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("factor graph parse: ") + e.what());
    }
    // Reshape tables to the scope axes once cardinalities are known.
    std::map<int, int> card;
    for (const auto& v : vars) card[v.id] = v.cardinality;
    for (auto& f : facs) {
      if (!f.table) continue;
      std::vector<std::size_t> shape;
      for (int v : f.scope) {
        auto it = card.find(v);
        if (it == card.end())
          throw ConstructionError("factor " + std::to_string(f.id) +
                                  ": scope references unknown variable " +
                                  std::to_string(v));
        shape.push_back(static_cast<std::size_t>(it->second));
      }
      if (Tensor::count(shape) != f.table->size())
        throw ConstructionError(
            "factor " + std::to_string(f.id) + ": table length " +
            std::to_string(f.table->size()) + " != scope state count " +
            std::to_string(Tensor::count(shape)));
      f.table = Tensor(std::move(shape), std::move(f.table->data()));
    }
    return FactorGraph(std::move(vars), std::move(facs));
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << serialize();
  }

  static FactorGraph load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse(text);
  }

 private:
  int check_var(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= variables_.size())
      throw IndexError("variable id " + std::to_string(id) + " out of range");
    return id;
  }
  int check_factor(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= factors_.size())
      throw IndexError("factor id " + std::to_string(id) + " out of range");
    return id;
  }

  void validate() const {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
      const VariableNode& v = variables_[i];
      if (v.id != static_cast<int>(i))
        throw ConstructionError("variable ids must be dense 0..n-1; slot " +
                                std::to_string(i) + " holds id " +
                                std::to_string(v.id));
      if (v.cardinality < 1)
        throw ConstructionError("variable " + std::to_string(v.id) +
                                ": cardinality must be >= 1");
    }
    for (std::size_t j = 0; j < factors_.size(); ++j) {
      const FactorNode& f = factors_[j];
      if (f.id != static_cast<int>(j))
        throw ConstructionError("factor ids must be dense 0..m-1; slot " +
                                std::to_string(j) + " holds id " +
                                std::to_string(f.id));
      if (f.scope.empty())
        throw ConstructionError("factor " + std::to_string(f.id) +
                                " has empty scope");
      std::vector<int> seen;
      for (int v : f.scope) {
        if (v < 0 || static_cast<std::size_t>(v) >= variables_.size())
          throw ConstructionError("factor " + std::to_string(f.id) +
                                  ": scope references unknown variable " +
                                  std::to_string(v));
        if (std::find(seen.begin(), seen.end(), v) != seen.end())
          throw ConstructionError("factor " + std::to_string(f.id) +
                                  ": duplicate variable " + std::to_string(v) +
                                  " in scope");
        seen.push_back(v);
      }
      if (f.kind != factor_kind_for_arity(f.scope.size()))
        throw ConstructionError("factor " + std::to_string(f.id) + ": kind " +
                                to_string(f.kind) + " does not match arity " +
                                std::to_string(f.scope.size()));
      if (f.table) {
        std::size_t expect = 1;
        for (int v : f.scope)
          expect *= static_cast<std::size_t>(variables_[v].cardinality);
        if (f.table->size() != expect)
          throw ConstructionError("factor " + std::to_string(f.id) +
                                  ": table length " +
                                  std::to_string(f.table->size()) +
                                  " != scope state count " +
                                  std::to_string(expect));
        for (double x : f.table->data())
          if (!(x >= 0.0) || !std::isfinite(x))
            throw ConstructionError("factor " + std::to_string(f.id) +
                                    ": table entries must be finite and >= 0");
      }
    }
  }

  void build_adjacency() {
    var_neighbors_.assign(variables_.size(), {});
    factor_neighbors_.assign(factors_.size(), {});
    for (const FactorNode& f : factors_) {
      std::vector<int> sorted_scope = f.scope;
      std::sort(sorted_scope.begin(), sorted_scope.end());
      factor_neighbors_[static_cast<std::size_t>(f.id)] = sorted_scope;
      for (int v : sorted_scope) {
        var_neighbors_[static_cast<std::size_t>(v)].push_back(f.id);
        edges_.push_back({v, f.id});
      }
    }
    for (auto& ns : var_neighbors_) std::sort(ns.begin(), ns.end());
    std::sort(edges_.begin(), edges_.end(),
              [](const FactorEdge& a, const FactorEdge& b) {
                return a.factor != b.factor ? a.factor < b.factor
                                            : a.variable < b.variable;
              });
    edge_features_.assign(edges_.size(), std::nullopt);
  }

  void build_log_tables() {
    log_tables_.resize(factors_.size());
    for (const FactorNode& f : factors_) {
      if (!f.table) continue;
      std::vector<double>& lt = log_tables_[static_cast<std::size_t>(f.id)];
      lt.resize(f.table->size());
      for (std::size_t i = 0; i < lt.size(); ++i) {
        const double x = (*f.table)[i];
        lt[i] = x > 0.0 ? std::log(x)
                        : -std::numeric_limits<double>::infinity();
      }
    }
  }

  std::vector<VariableNode> variables_;
  std::vector<FactorNode> factors_;
  std::vector<std::vector<int>> var_neighbors_;
  std::vector<std::vector<int>> factor_neighbors_;
  std::vector<FactorEdge> edges_;
  std::vector<std::optional<Tensor>> edge_features_;
  std::vector<std::vector<double>> log_tables_;
};

inline FactorGraph build_graph(std::vector<VariableNode> variables,
                               std::vector<FactorNode> factors) {
  return FactorGraph(std::move(variables), std::move(factors));
}

}  // namespace fgbp
