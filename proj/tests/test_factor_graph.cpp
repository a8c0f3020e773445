#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fgbp/factor_graph.hpp"
#include "graph_fixtures.hpp"
#include "helpers.hpp"

using namespace fgbp;
using fgbp::testing::fig1_graph;
using fgbp::testing::random_table;
using fgbp::testing::random_tree_graph;

TEST_CASE("single variable with unary factor builds one edge") {
  FactorGraph g({{0, 2, {}}},
                {{0, {0}, Tensor({2}, {1, 1}), {}, FactorKind::Unary}});
  CHECK(g.edges().size() == 1);
  CHECK(g.factors_of(0) == std::vector<int>{0});
  CHECK(g.variables_of(0) == std::vector<int>{0});
}

TEST_CASE("fig. 1 topology has five bipartite edges and is a tree") {
  FactorGraph g = fig1_graph();
  CHECK(g.edges().size() == 5);
  CHECK(g.is_tree());
  for (const FactorEdge& e : g.edges()) {
    CHECK(e.variable >= 0);
    CHECK(e.variable < 3);
    CHECK(e.factor >= 0);
    CHECK(e.factor < 3);
  }
  // neighbor lists sorted by id
  CHECK(g.factors_of(0) == std::vector<int>{0, 1});
  CHECK(g.factors_of(2) == std::vector<int>{1, 2});
}

TEST_CASE("construction errors name the offender") {
  SECTION("duplicate variable in scope") {
    CHECK_THROWS_AS(
        FactorGraph({{0, 2, {}}},
                    {{0, {0, 0}, {}, {}, FactorKind::Pairwise}}),
        ConstructionError);
  }
  SECTION("dangling scope reference") {
    try {
      FactorGraph({{0, 2, {}}}, {{0, {7}, {}, {}, FactorKind::Unary}});
      FAIL("expected ConstructionError");
    } catch (const ConstructionError& e) {
      CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
  }
  SECTION("non-dense ids") {
    CHECK_THROWS_AS(FactorGraph({{1, 2, {}}}, {}), ConstructionError);
  }
  SECTION("empty scope") {
    CHECK_THROWS_AS(FactorGraph({{0, 2, {}}}, {{0, {}, {}, {}, FactorKind::Unary}}),
                    ConstructionError);
  }
  SECTION("kind inconsistent with arity") {
    CHECK_THROWS_AS(
        FactorGraph({{0, 2, {}}}, {{0, {0}, {}, {}, FactorKind::Pairwise}}),
        ConstructionError);
  }
  SECTION("table length mismatch") {
    CHECK_THROWS_AS(
        FactorGraph({{0, 3, {}}},
                    {{0, {0}, Tensor({2}, {1, 1}), {}, FactorKind::Unary}}),
        ConstructionError);
  }
  SECTION("negative table entry") {
    CHECK_THROWS_AS(
        FactorGraph({{0, 2, {}}},
                    {{0, {0}, Tensor({2}, {1, -1}), {}, FactorKind::Unary}}),
        ConstructionError);
  }
}

TEST_CASE("score_assignment basics") {
  SECTION("all-ones tables score 1 everywhere") {
    FactorGraph g({{0, 2, {}}, {1, 3, {}}},
                  {{0, {0}, Tensor({2}, {1, 1}), {}, FactorKind::Unary},
                   {1, {0, 1}, Tensor({2, 3}, {1, 1, 1, 1, 1, 1}), {},
                    FactorKind::Pairwise}});
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 3; ++b)
        CHECK(g.score({a, b}) == Catch::Approx(1.0).margin(1e-15));
  }
  SECTION("single unary factor reads the table") {
    FactorGraph g({{0, 2, {}}},
                  {{0, {0}, Tensor({2}, {2, 5}), {}, FactorKind::Unary}});
    CHECK(g.score({1}) == Catch::Approx(5.0).margin(1e-12));
  }
  SECTION("fig. 1 hand-multiplied value") {
    FactorGraph g = fig1_graph();
    CHECK(g.score({1, 0, 1}) == Catch::Approx(8.0).margin(1e-12));
  }
  SECTION("zero table entry gives zero score without NaN") {
    FactorGraph g({{0, 2, {}}},
                  {{0, {0}, Tensor({2}, {0, 3}), {}, FactorKind::Unary}});
    CHECK(g.score({0}) == 0.0);
    CHECK(std::isinf(g.log_score({0})));
  }
  SECTION("errors") {
    FactorGraph g({{0, 2, {}}}, {{0, {0}, {}, {}, FactorKind::Unary}});
    CHECK_THROWS_AS(g.score({0}), UnsupportedOperationError);
    FactorGraph h = fig1_graph();
    CHECK_THROWS_AS(h.score({1, 0}), DimensionError);
    CHECK_THROWS_AS(h.score({1, 0, 2}), IndexError);
  }
}

TEST_CASE("score equals product of table entries on random graphs") {
  // exhaustive check against a direct product computed outside the graph
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(Rng::derive(1000, seed));
    FactorGraph g = random_tree_graph(rng, 6, 3);
    const std::size_t n = g.num_variables();
    std::vector<int> assignment(n, 0);
    bool done = false;
    while (!done) {
      double expect = 1.0;
      for (const FactorNode& f : g.factors()) {
        std::vector<int> state;
        for (int v : f.scope) state.push_back(assignment[v]);
        expect *= (*f.table)[g.table_index(f, state)];
      }
      CHECK(g.score(assignment) == Catch::Approx(expect).epsilon(1e-12));
      // advance mixed-radix counter
      done = true;
      for (std::size_t i = 0; i < n; ++i) {
        if (++assignment[i] < g.variables()[i].cardinality) {
          done = false;
          break;
        }
        assignment[i] = 0;
      }
    }
  }
}

TEST_CASE("tree_check distinguishes chains from cycles") {
  SECTION("chain is a tree") {
    FactorGraph g({{0, 2, {}}, {1, 2, {}}},
                  {{0, {0, 1}, {}, {}, FactorKind::Pairwise}});
    CHECK(g.is_tree());
  }
  SECTION("fig. 1 is a tree") { CHECK(fig1_graph().is_tree()); }
  SECTION("4-cycle is not") {
    FactorGraph g({{0, 2, {}}, {1, 2, {}}},
                  {{0, {0, 1}, {}, {}, FactorKind::Pairwise},
                   {1, {1, 0}, {}, {}, FactorKind::Pairwise}});
    CHECK_FALSE(g.is_tree());
  }
}

TEST_CASE("serialization round-trips bit-exactly") {
  Rng rng(77);
  FactorGraph g = random_tree_graph(rng, 7, 4);
  const std::string text = g.serialize();
  FactorGraph h = FactorGraph::parse(text);
  REQUIRE(h.num_variables() == g.num_variables());
  REQUIRE(h.num_factors() == g.num_factors());
  for (std::size_t j = 0; j < g.num_factors(); ++j) {
    CHECK(h.factors()[j].scope == g.factors()[j].scope);
    CHECK(h.factors()[j].kind == g.factors()[j].kind);
    REQUIRE(h.factors()[j].table.has_value());
    CHECK(h.factors()[j].table->data() == g.factors()[j].table->data());
  }
  CHECK(h.serialize() == text);

  SECTION("log_space input is exponentiated") {
    const std::string doc = R"({
      "variables": [{"id": 0, "cardinality": 2}],
      "factors": [{"id": 0, "kind": "unary", "scope": [0],
                   "table": [0.0, 1.0], "log_space": true}]
    })";
    FactorGraph p = FactorGraph::parse(doc);
    CHECK((*p.factors()[0].table)[0] == 1.0);
    CHECK((*p.factors()[0].table)[1] == Catch::Approx(std::exp(1.0)));
  }
  SECTION("bad table length rejected") {
    const std::string doc = R"({
      "variables": [{"id": 0, "cardinality": 2}],
      "factors": [{"id": 0, "kind": "unary", "scope": [0], "table": [1.0]}]
    })";
    CHECK_THROWS_AS(FactorGraph::parse(doc), ConstructionError);
  }
}
