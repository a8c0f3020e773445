#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fgbp/error.hpp"
#include "fgbp/exact.hpp"
#include "fgbp/factor_graph.hpp"

namespace fgbp {

enum class ScoringFamily { UnaryOnly, UnaryPairwise, UnaryPairwiseHigherOrder };

inline const char* to_string(ScoringFamily f) {
  switch (f) {
    case ScoringFamily::UnaryOnly: return "unary_only";
    case ScoringFamily::UnaryPairwise: return "unary_pairwise";
    case ScoringFamily::UnaryPairwiseHigherOrder:
      return "unary_pairwise_higher_order";
  }
  return "?";
}

enum class HigherOrderScope { GlobalAllVariables };

struct ScoringSpec {
  ScoringFamily family = ScoringFamily::UnaryPairwise;
  // undirected neighborhood, one entry per unordered pair
  std::vector<std::pair<int, int>> neighborhood;
  HigherOrderScope higher_order_scope = HigherOrderScope::GlobalAllVariables;

  void validate(std::size_t n_variables) const {
    std::vector<std::pair<int, int>> seen;
    for (auto [a, b] : neighborhood) {
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n_variables ||
          static_cast<std::size_t>(b) >= n_variables)
        throw ValidationError("ScoringSpec: neighborhood edge (" +
                              std::to_string(a) + "," + std::to_string(b) +
                              ") references unknown variable");
      if (a == b)
        throw ValidationError("ScoringSpec: self edge on variable " +
                              std::to_string(a));
      std::pair<int, int> key = a < b ? std::pair{a, b} : std::pair{b, a};
      if (std::find(seen.begin(), seen.end(), key) != seen.end())
        throw ValidationError("ScoringSpec: pair (" + std::to_string(key.first) +
                              "," + std::to_string(key.second) +
                              ") listed twice");
      seen.push_back(key);
    }
  }
};

// Eq. 11 structure: one unary factor per variable plus one pairwise factor
// per neighborhood edge. Factor ids: unaries 0..n-1, then pairwise factors in
// neighborhood order. Pairwise tables are indexed [first endpoint state x
// second endpoint state] as the edge is written in the spec.
inline FactorGraph build_pairwise_graph(const std::vector<Tensor>& unaries,
                                        const std::vector<Tensor>& pairwise,
                                        const ScoringSpec& spec) {
  if (spec.family != ScoringFamily::UnaryPairwise)
    throw ValidationError(
        std::string("build_pairwise_graph: family must be unary_pairwise, got ") +
        to_string(spec.family));
  const std::size_t n = unaries.size();
  spec.validate(n);
  if (pairwise.size() != spec.neighborhood.size())
    throw ConstructionError("build_pairwise_graph: " +
                            std::to_string(spec.neighborhood.size()) +
                            " edges but " + std::to_string(pairwise.size()) +
                            " pairwise tables");
  std::vector<VariableNode> vars;
  std::vector<FactorNode> facs;
  for (std::size_t i = 0; i < n; ++i) {
    if (unaries[i].rank() != 1 || unaries[i].size() == 0)
      throw ConstructionError("build_pairwise_graph: unary table " +
                              std::to_string(i) + " must be a non-empty vector");
    vars.push_back({static_cast<int>(i), static_cast<int>(unaries[i].size()), {}});
    facs.push_back({static_cast<int>(i), {static_cast<int>(i)}, unaries[i], {},
                    FactorKind::Unary});
  }
  int fid = static_cast<int>(n);
  for (std::size_t e = 0; e < spec.neighborhood.size(); ++e) {
    const auto [a, b] = spec.neighborhood[e];
    facs.push_back({fid++, {a, b}, pairwise[e], {}, FactorKind::Pairwise});
  }
  return FactorGraph(std::move(vars), std::move(facs));
}

// Eq. 12 structure: the Eq. 11 graph plus one global factor whose scope is
// every variable. A tabular global factor is only accepted while the joint
// state count stays within `table_capacity`; larger cliques must arrive
// feature-only and belong to the neural path.
inline FactorGraph build_higher_order_graph(
    const std::vector<Tensor>& unaries, const std::vector<Tensor>& pairwise,
    FactorNode higher_order, const ScoringSpec& spec,
    std::size_t table_capacity = 1'000'000) {
  if (spec.family != ScoringFamily::UnaryPairwiseHigherOrder)
    throw ValidationError(
        std::string(
            "build_higher_order_graph: family must be unary_pairwise_higher_order, got ") +
        to_string(spec.family));
  ScoringSpec pairwise_spec = spec;
  pairwise_spec.family = ScoringFamily::UnaryPairwise;
  FactorGraph base = build_pairwise_graph(unaries, pairwise, pairwise_spec);

  const std::size_t n = unaries.size();
  std::vector<int> full_scope(n);
  for (std::size_t i = 0; i < n; ++i) full_scope[i] = static_cast<int>(i);
  if (higher_order.scope != full_scope)
    throw ConstructionError(
        "build_higher_order_graph: higher-order scope must cover all variables");
  if (higher_order.table) {
    std::size_t states = 1;
    for (const Tensor& u : unaries) states *= u.size();
    if (states > table_capacity)
      throw CapacityError("build_higher_order_graph: global table with " +
                          std::to_string(states) + " states exceeds guard " +
                          std::to_string(table_capacity));
  }
  std::vector<VariableNode> vars = base.variables();
  std::vector<FactorNode> facs = base.factors();
  higher_order.id = static_cast<int>(facs.size());
  higher_order.kind = factor_kind_for_arity(higher_order.scope.size());
  facs.push_back(std::move(higher_order));
  return FactorGraph(std::move(vars), std::move(facs));
}

// Eq. 2: expose the normalized posterior family of a scored graph.
inline ExactResult posterior_from_score(const FactorGraph& g,
                                        const EnumerationOptions& opt = {}) {
  return enumerate_all(g, opt);
}

}  // namespace fgbp
