#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fgbp/bp.hpp"
#include "fgbp/scoring.hpp"
#include "graph_fixtures.hpp"
#include "helpers.hpp"

using namespace fgbp;
using fgbp::testing::random_table;

namespace {

// Independent Eq. 11 evaluation: prod_i [ f_i(x_i) prod_{j in N(i)} f_ij ],
// with each stored unordered edge contributing exactly once.
double eq11_product(const std::vector<Tensor>& unaries,
                    const std::vector<Tensor>& pairwise,
                    const std::vector<std::pair<int, int>>& edges,
                    const std::vector<int>& x) {
  double s = 1.0;
  for (std::size_t i = 0; i < unaries.size(); ++i)
    s *= unaries[i][static_cast<std::size_t>(x[i])];
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto [a, b] = edges[e];
    s *= pairwise[e].at(static_cast<std::size_t>(x[static_cast<std::size_t>(a)]),
                        static_cast<std::size_t>(x[static_cast<std::size_t>(b)]));
  }
  return s;
}

double eq12_product(const std::vector<Tensor>& unaries,
                    const std::vector<Tensor>& pairwise,
                    const std::vector<std::pair<int, int>>& edges,
                    const Tensor& global_table, const std::vector<int>& x,
                    const std::vector<int>& cards) {
  double s = eq11_product(unaries, pairwise, edges, x);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    idx = idx * static_cast<std::size_t>(cards[i]) + static_cast<std::size_t>(x[i]);
  return s * global_table[idx];
}

std::vector<int> binary_assignment(std::size_t bits, std::size_t n) {
  std::vector<int> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = static_cast<int>((bits >> (n - 1 - i)) & 1);
  return x;
}

}  // namespace

TEST_CASE("pairwise builder basics") {
  SECTION("all-ones tables score one everywhere") {
    std::vector<Tensor> unaries{Tensor::full({2}, 1.0), Tensor::full({2}, 1.0)};
    std::vector<Tensor> pw{Tensor::full({2, 2}, 1.0)};
    ScoringSpec spec;
    spec.neighborhood = {{0, 1}};
    FactorGraph g = build_pairwise_graph(unaries, pw, spec);
    CHECK(g.num_factors() == 3);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        CHECK(g.score({a, b}) == Catch::Approx(1.0).margin(1e-15));
  }
  SECTION("three-variable chain is a tree") {
    std::vector<Tensor> unaries(3, Tensor::full({2}, 1.0));
    std::vector<Tensor> pw(2, Tensor::full({2, 2}, 1.0));
    ScoringSpec spec;
    spec.neighborhood = {{0, 1}, {1, 2}};
    CHECK(build_pairwise_graph(unaries, pw, spec).is_tree());
  }
  SECTION("missing table is a construction error") {
    std::vector<Tensor> unaries(2, Tensor::full({2}, 1.0));
    ScoringSpec spec;
    spec.neighborhood = {{0, 1}};
    CHECK_THROWS_AS(build_pairwise_graph(unaries, {}, spec), ConstructionError);
  }
  SECTION("wrong family rejected") {
    ScoringSpec spec;
    spec.family = ScoringFamily::UnaryOnly;
    CHECK_THROWS_AS(build_pairwise_graph({Tensor::full({2}, 1.0)}, {}, spec),
                    ValidationError);
  }
  SECTION("duplicate neighborhood pair rejected") {
    std::vector<Tensor> unaries(2, Tensor::full({2}, 1.0));
    std::vector<Tensor> pw(2, Tensor::full({2, 2}, 1.0));
    ScoringSpec spec;
    spec.neighborhood = {{0, 1}, {1, 0}};
    CHECK_THROWS_AS(build_pairwise_graph(unaries, pw, spec), ValidationError);
  }
}

TEST_CASE("pairwise graph matches the explicit double product") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(Rng::derive(12000, seed));
    const std::size_t n = 4;
    std::vector<Tensor> unaries;
    std::vector<int> cards;
    for (std::size_t i = 0; i < n; ++i) {
      unaries.push_back(random_table({2}, rng));
      cards.push_back(2);
    }
    std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {2, 3}, {0, 3}};
    std::vector<Tensor> pw;
    for (std::size_t e = 0; e < edges.size(); ++e)
      pw.push_back(random_table({2, 2}, rng));
    ScoringSpec spec;
    spec.neighborhood = edges;
    FactorGraph g = build_pairwise_graph(unaries, pw, spec);
    for (std::size_t bits = 0; bits < 16; ++bits) {
      const std::vector<int> x = binary_assignment(bits, n);
      CHECK(g.score(x) ==
            Catch::Approx(eq11_product(unaries, pw, edges, x)).epsilon(1e-10));
    }
  }
}

TEST_CASE("higher-order builder") {
  Rng rng(991);
  const std::size_t n = 3;
  std::vector<Tensor> unaries;
  for (std::size_t i = 0; i < n; ++i) unaries.push_back(random_table({2}, rng));
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}};
  std::vector<Tensor> pw{random_table({2, 2}, rng), random_table({2, 2}, rng)};
  ScoringSpec spec;
  spec.family = ScoringFamily::UnaryPairwiseHigherOrder;
  spec.neighborhood = edges;

  SECTION("neutral global factor leaves marginals unchanged") {
    FactorNode global{0, {0, 1, 2}, Tensor::full({2, 2, 2}, 1.0), {},
                      FactorKind::MultiVertex};
    FactorGraph ho = build_higher_order_graph(unaries, pw, global, spec);
    ScoringSpec base_spec = spec;
    base_spec.family = ScoringFamily::UnaryPairwise;
    FactorGraph base = build_pairwise_graph(unaries, pw, base_spec);
    ExactResult a = enumerate_all(ho);
    ExactResult b = enumerate_all(base);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t s = 0; s < 2; ++s)
        CHECK(std::abs(a.variable_marginals[v][s] -
                       b.variable_marginals[v][s]) < 1e-12);
  }

  SECTION("random global table matches the Eq. 12 triple product") {
    Tensor global_table = random_table({2, 2, 2}, rng);
    FactorNode global{0, {0, 1, 2}, global_table, {}, FactorKind::MultiVertex};
    FactorGraph ho = build_higher_order_graph(unaries, pw, global, spec);
    for (std::size_t bits = 0; bits < 8; ++bits) {
      const std::vector<int> x = binary_assignment(bits, n);
      CHECK(ho.score(x) == Catch::Approx(eq12_product(unaries, pw, edges,
                                                      global_table, x,
                                                      {2, 2, 2}))
                               .epsilon(1e-10));
    }
  }

  SECTION("configured capacity guard trips on a 12-variable global table") {
    std::vector<Tensor> u12;
    for (int i = 0; i < 12; ++i) u12.push_back(random_table({2}, rng));
    std::vector<std::pair<int, int>> chain;
    std::vector<Tensor> pw12;
    for (int i = 0; i + 1 < 12; ++i) {
      chain.push_back({i, i + 1});
      pw12.push_back(random_table({2, 2}, rng));
    }
    ScoringSpec s12;
    s12.family = ScoringFamily::UnaryPairwiseHigherOrder;
    s12.neighborhood = chain;
    std::vector<int> scope(12);
    for (int i = 0; i < 12; ++i) scope[static_cast<std::size_t>(i)] = i;
    FactorNode global{0, scope, Tensor::full({4096}, 1.0), {},
                      FactorKind::MultiVertex};
    CHECK_THROWS_AS(
        build_higher_order_graph(u12, pw12, global, s12, /*capacity=*/2048),
        CapacityError);
  }

  SECTION("partial scope rejected") {
    FactorNode global{0, {0, 1}, {}, {}, FactorKind::Pairwise};
    CHECK_THROWS_AS(build_higher_order_graph(unaries, pw, global, spec),
                    ConstructionError);
  }
}

TEST_CASE("acyclic neighborhoods are trees until the global factor arrives") {
  Rng rng(17);
  std::vector<Tensor> unaries(3, Tensor::full({2}, 1.0));
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}};
  std::vector<Tensor> pw(2, Tensor::full({2, 2}, 1.0));
  ScoringSpec spec;
  spec.neighborhood = edges;
  CHECK(build_pairwise_graph(unaries, pw, spec).is_tree());

  ScoringSpec ho_spec = spec;
  ho_spec.family = ScoringFamily::UnaryPairwiseHigherOrder;
  FactorNode global{0, {0, 1, 2}, Tensor::full({2, 2, 2}, 1.0), {},
                    FactorKind::MultiVertex};
  FactorGraph ho = build_higher_order_graph(unaries, pw, global, ho_spec);
  CHECK_FALSE(ho.is_tree());
}

TEST_CASE("removing a factor divides the score by its contribution") {
  Rng rng(271);
  std::vector<Tensor> unaries;
  for (int i = 0; i < 3; ++i) unaries.push_back(random_table({2}, rng));
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}};
  std::vector<Tensor> pw{random_table({2, 2}, rng), random_table({2, 2}, rng)};
  ScoringSpec spec;
  spec.neighborhood = edges;
  FactorGraph full = build_pairwise_graph(unaries, pw, spec);

  ScoringSpec smaller = spec;
  smaller.neighborhood = {{0, 1}};
  FactorGraph reduced = build_pairwise_graph(unaries, {pw[0]}, smaller);
  for (std::size_t bits = 0; bits < 8; ++bits) {
    const std::vector<int> x = binary_assignment(bits, 3);
    const double contribution =
        pw[1].at(static_cast<std::size_t>(x[1]), static_cast<std::size_t>(x[2]));
    CHECK(full.score(x) ==
          Catch::Approx(reduced.score(x) * contribution).epsilon(1e-10));
  }
}

TEST_CASE("posterior_from_score") {
  SECTION("uniform scores give the uniform posterior") {
    std::vector<Tensor> unaries(2, Tensor::full({2}, 1.0));
    ScoringSpec spec;
    spec.neighborhood = {{0, 1}};
    FactorGraph g =
        build_pairwise_graph(unaries, {Tensor::full({2, 2}, 1.0)}, spec);
    ExactResult r = posterior_from_score(g);
    for (const auto& m : r.variable_marginals)
      for (double p : m) CHECK(p == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("dominant assignment carries 100/107 of the mass") {
    // 3 binary variables; one assignment scores 100, the other 7 score 1
    std::vector<VariableNode> vars{{0, 2, {}}, {1, 2, {}}, {2, 2, {}}};
    Tensor global({2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) global[i] = 1.0;
    global[7] = 100.0;  // (1,1,1)
    std::vector<FactorNode> facs{
        {0, {0, 1, 2}, global, {}, FactorKind::MultiVertex}};
    FactorGraph g(std::move(vars), std::move(facs));
    ExactResult r = posterior_from_score(g);
    const double mass = r.variable_marginals[0][1];  // p(x0 = 1)
    // p(x0=1) = (100 + 3) / 107
    CHECK(mass == Catch::Approx(103.0 / 107.0).margin(1e-12));
    CHECK(r.map_assignment == std::vector<int>{1, 1, 1});
  }
  SECTION("posterior normalizes for random graphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(Rng::derive(13000, seed));
      std::vector<Tensor> unaries{random_table({2}, rng), random_table({3}, rng)};
      ScoringSpec spec;
      spec.neighborhood = {{0, 1}};
      FactorGraph g =
          build_pairwise_graph(unaries, {random_table({2, 3}, rng)}, spec);
      ExactResult r = posterior_from_score(g);
      for (const auto& m : r.variable_marginals) {
        double s = 0.0;
        for (double p : m) s += p;
        CHECK(s == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }
}

TEST_CASE("neutral global factor also leaves BP beliefs and decode unchanged") {
  Rng rng(3141);
  const std::size_t n = 5;
  std::vector<Tensor> unaries;
  for (std::size_t i = 0; i < n; ++i) unaries.push_back(random_table({2}, rng));
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 4}};
  std::vector<Tensor> pw;
  for (std::size_t e = 0; e < edges.size(); ++e)
    pw.push_back(random_table({2, 2}, rng));
  ScoringSpec spec;
  spec.neighborhood = edges;
  FactorGraph base = build_pairwise_graph(unaries, pw, spec);

  ScoringSpec ho_spec = spec;
  ho_spec.family = ScoringFamily::UnaryPairwiseHigherOrder;
  std::vector<int> scope{0, 1, 2, 3, 4};
  FactorNode global{0, scope, Tensor::full({2, 2, 2, 2, 2}, 1.0), {},
                    FactorKind::MultiVertex};
  FactorGraph ho = build_higher_order_graph(unaries, pw, global, ho_spec);

  BpConfig cfg;
  cfg.damping = 0.5;
  cfg.tolerance = 1e-13;
  BpResult rb = run_bp(base, cfg);
  BpResult rh = run_bp(ho, cfg);
  REQUIRE(rb.converged);
  REQUIRE(rh.converged);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t s = 0; s < 2; ++s)
      CHECK(std::abs(rb.variable_beliefs[v][s] - rh.variable_beliefs[v][s]) <
            1e-10);
  CHECK(map_decode(rb) == map_decode(rh));
}
