#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fgbp/error.hpp"
#include "fgbp/factor_graph.hpp"
#include "fgbp/json_out.hpp"

namespace fgbp {

struct ExactResult {
  double log_partition = 0.0;
  std::vector<std::vector<double>> variable_marginals;
  // one flat row-major joint per factor, normalized
  std::vector<std::vector<double>> factor_marginals;
  std::vector<int> map_assignment;
  double map_score = 0.0;      // linear domain
  double log_map_score = 0.0;
};

struct EnumerationOptions {
  std::size_t max_states = 10'000'000;
};

namespace detail {
inline bool advance_assignment(std::vector<int>& x, const FactorGraph& g) {
  // lexicographic order with the last variable fastest
  for (std::size_t i = x.size(); i-- > 0;) {
    if (++x[i] < g.variables()[i].cardinality) return true;
    x[i] = 0;
  }
  return false;
}
}  // namespace detail

// Brute-force enumeration of the full assignment space. Exact log Z via a
// running-max log-sum-exp, exact marginals, and the MAP assignment with
// lowest-lexicographic tie-breaking.
inline ExactResult enumerate_all(const FactorGraph& g,
                                 const EnumerationOptions& opt = {}) {
  if (!g.all_tabular())
    throw UnsupportedOperationError("enumerate_all: all factors need tables");
  const std::size_t n = g.num_variables();
  double state_count = 1.0;
  for (const VariableNode& v : g.variables())
    state_count *= static_cast<double>(v.cardinality);
  if (state_count > static_cast<double>(opt.max_states))
    throw CapacityError("enumerate_all: state space " +
                        std::to_string(state_count) + " exceeds guard " +
                        std::to_string(opt.max_states));

  // pass 1: max log score (first maximum in lexicographic order wins)
  const double neg_inf = -std::numeric_limits<double>::infinity();
  double max_log = neg_inf;
  std::vector<int> x(n, 0), argmax(n, 0);
  do {
    const double ls = g.log_score(x);
    if (ls > max_log) {
      max_log = ls;
      argmax = x;
    }
  } while (detail::advance_assignment(x, g));
  if (max_log == neg_inf)
    throw ValidationError("enumerate_all: every assignment has zero score");

  // pass 2: weights relative to the max
  ExactResult res;
  res.variable_marginals.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    res.variable_marginals[i].assign(
        static_cast<std::size_t>(g.variables()[i].cardinality), 0.0);
  res.factor_marginals.resize(g.num_factors());
  for (const FactorNode& f : g.factors())
    res.factor_marginals[static_cast<std::size_t>(f.id)].assign(g.table_size(f),
                                                                0.0);
  double total = 0.0;
  std::fill(x.begin(), x.end(), 0);
  std::vector<int> state;
  do {
    const double w = std::exp(g.log_score(x) - max_log);
    total += w;
    for (std::size_t i = 0; i < n; ++i)
      res.variable_marginals[i][static_cast<std::size_t>(x[i])] += w;
    for (const FactorNode& f : g.factors()) {
      state.clear();
      for (int v : f.scope) state.push_back(x[static_cast<std::size_t>(v)]);
      res.factor_marginals[static_cast<std::size_t>(f.id)][g.table_index(f, state)] += w;
    }
  } while (detail::advance_assignment(x, g));

  res.log_partition = max_log + std::log(total);
  for (auto& m : res.variable_marginals)
    for (double& p : m) p /= total;
  for (auto& m : res.factor_marginals)
    for (double& p : m) p /= total;
  res.map_assignment = argmax;
  res.log_map_score = max_log;
  res.map_score = std::exp(max_log);
  return res;
}

// E_q[log S] + T * H(q) for a fully factorized q (Eq. 9 objective form).
// The expectation is computed exactly per factor against q's product form.
inline double variational_objective(const FactorGraph& g,
                                    const std::vector<std::vector<double>>& q,
                                    double temperature) {
  if (!g.all_tabular())
    throw UnsupportedOperationError(
        "variational_objective: all factors need tables");
  if (q.size() != g.num_variables())
    throw ValidationError("variational_objective: q has " +
                          std::to_string(q.size()) + " distributions for " +
                          std::to_string(g.num_variables()) + " variables");
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i].size() != static_cast<std::size_t>(g.variables()[i].cardinality))
      throw ValidationError("variational_objective: q[" + std::to_string(i) +
                            "] has wrong support size");
    double sum = 0.0;
    for (double p : q[i]) {
      if (p < 0.0 || !std::isfinite(p))
        throw ValidationError("variational_objective: q[" + std::to_string(i) +
                              "] has negative or non-finite mass");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError("variational_objective: q[" + std::to_string(i) +
                            "] sums to " + std::to_string(sum));
  }

  double expect = 0.0;
  for (const FactorNode& f : g.factors()) {
    const std::vector<double>& lt = g.log_table(f.id);
    std::vector<int> state(f.scope.size(), 0);
    bool done = false;
    while (!done) {
      double w = 1.0;
      for (std::size_t k = 0; k < f.scope.size(); ++k)
        w *= q[static_cast<std::size_t>(f.scope[k])][static_cast<std::size_t>(state[k])];
      if (w > 0.0) expect += w * lt[g.table_index(f, state)];
      done = true;
      for (std::size_t k = state.size(); k-- > 0;) {
        if (++state[k] < g.variables()[f.scope[k]].cardinality) {
          done = false;
          break;
        }
        state[k] = 0;
      }
    }
  }

  double entropy = 0.0;
  for (const auto& qi : q)
    for (double p : qi)
      if (p > 0.0) entropy -= p * std::log(p);

  return expect + temperature * entropy;
}

inline Json exact_result_to_json(const ExactResult& r) {
  Json doc = Json::object();
  doc.set("log_partition", Json::number(r.log_partition));
  Json vm = Json::array();
  for (const auto& m : r.variable_marginals) vm.push(Json::number_array(m));
  doc.set("variable_marginals", std::move(vm));
  Json fm = Json::array();
  for (const auto& m : r.factor_marginals) fm.push(Json::number_array(m));
  doc.set("factor_marginals", std::move(fm));
  doc.set("map_assignment", Json::integer_array(r.map_assignment));
  doc.set("map_score", Json::number(r.map_score));
  doc.set("log_map_score", Json::number(r.log_map_score));
  return doc;
}

}  // namespace fgbp
