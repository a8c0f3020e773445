#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fgbp/tensor.hpp"
#include "helpers.hpp"

using namespace fgbp;
using fgbp::testing::central_difference;
using fgbp::testing::max_grad_error;
using fgbp::testing::random_tensor;
using fgbp::testing::rel_error;

TEST_CASE("tensor construction validates shape against value count") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), DimensionError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.at(1, 0) == 3.0);
  CHECK(t.size() == 4);
}

TEST_CASE("matmul identity and selector") {
  auto I = constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  auto A = constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto P = matmul(I, A);
  CHECK(P->value.data() == std::vector<double>{1, 2, 3, 4});

  auto row = constant(Tensor::matrix(1, 2, {1, 0}));
  auto col = constant(Tensor::matrix(2, 1, {5, 7}));
  CHECK(matmul(row, col)->value[0] == 5.0);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  auto a = constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(42);
  Tensor A = random_tensor({3, 4}, rng);
  Tensor B = random_tensor({4, 2}, rng);
  auto forward = [&]() {
    auto p = matmul(constant(A), constant(B));
    double s = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) s += p->value[i];
    return s;
  };
  auto va = leaf(A), vb = leaf(B);
  auto loss = sum_all(matmul(va, vb));
  backward(loss);
  const double err =
      max_grad_error({{"a", &A}, {"b", &B}}, forward, {va->grad, vb->grad});
  CHECK(err < 1e-4);
}

TEST_CASE("reduce mean and max basics") {
  auto a = constant(Tensor::vector({1, 3}));
  auto b = constant(Tensor::vector({3, 1}));
  CHECK(reduce({a, b}, ReduceMode::Mean)->value.data() ==
        std::vector<double>{2, 2});
  CHECK(reduce({a, b}, ReduceMode::Max)->value.data() ==
        std::vector<double>{3, 3});
  CHECK(reduce({a, b}, ReduceMode::Sum)->value.data() ==
        std::vector<double>{4, 4});

  SECTION("single element list is identity") {
    CHECK(reduce({a}, ReduceMode::Mean)->value.data() ==
          std::vector<double>{1, 3});
  }
  SECTION("empty list fails") {
    CHECK_THROWS_AS(reduce({}, ReduceMode::Mean), AggregationError);
  }
  SECTION("shape mismatch fails") {
    auto c = constant(Tensor::vector({1, 2, 3}));
    CHECK_THROWS_AS(reduce({a, c}, ReduceMode::Mean), DimensionError);
  }
}

TEST_CASE("mean reduce is permutation invariant") {
  Rng rng(7);
  std::vector<Tensor> xs;
  for (int i = 0; i < 5; ++i) xs.push_back(random_tensor({4}, rng));
  std::vector<Var> in_order, shuffled;
  for (const auto& t : xs) in_order.push_back(constant(t));
  std::vector<std::size_t> perm{3, 0, 4, 2, 1};
  for (std::size_t i : perm) shuffled.push_back(constant(xs[i]));
  auto m1 = reduce(in_order, ReduceMode::Mean)->value;
  auto m2 = reduce(shuffled, ReduceMode::Mean)->value;
  for (std::size_t j = 0; j < m1.size(); ++j)
    CHECK(std::abs(m1[j] - m2[j]) < 1e-12);
}

TEST_CASE("max reduce tie routes subgradient to lowest list index") {
  auto x0 = leaf(Tensor::vector({1, 3}));
  auto x1 = leaf(Tensor::vector({3, 1}));
  auto x2 = leaf(Tensor::vector({3, 3}));
  auto loss = sum_all(reduce({x0, x1, x2}, ReduceMode::Max));
  backward(loss);
  CHECK(x0->grad.data() == std::vector<double>{0, 1});
  CHECK(x1->grad.data() == std::vector<double>{1, 0});
  CHECK(x2->grad.data() == std::vector<double>{0, 0});
}

TEST_CASE("node reused twice accumulates gradient once per path") {
  auto a = leaf(Tensor::vector({2, 3}));
  auto loss = sum_all(add(a, a));
  backward(loss);
  CHECK(a->grad.data() == std::vector<double>{2, 2});
}

TEST_CASE("mlp_forward special cases") {
  SECTION("zero weights give zero output") {
    MlpParams p;
    p.layers.push_back({Tensor({3, 2}), Tensor({2})});
    Tensor y = mlp_forward(p, Tensor::vector({1, -2, 5}));
    CHECK(y.data() == std::vector<double>{0, 0});
  }
  SECTION("identity affine layer is the identity map") {
    MlpParams p;
    p.layers.push_back({Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor({2})});
    Tensor y = mlp_forward(p, Tensor::vector({4, -7}));
    CHECK(y.data() == std::vector<double>{4, -7});
  }
  SECTION("width mismatch is a dimension error") {
    MlpParams p;
    p.layers.push_back({Tensor({3, 2}), Tensor({2})});
    CHECK_THROWS_AS(mlp_forward(p, Tensor::vector({1, 2})), DimensionError);
  }
}

TEST_CASE("two-layer mlp gradient matches finite differences") {
  Rng rng(11);
  MlpParams p = make_mlp({3, 4, 2}, rng);
  Tensor x = random_tensor({3}, rng);
  auto forward = [&]() {
    Tensor y = mlp_forward(p, x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i];
    return s;
  };
  MlpVars v = lift(p, true);
  auto loss = sum_all(mlp_forward(v, constant(x)));
  backward(loss);
  std::vector<std::pair<std::string, Tensor*>> params;
  std::vector<Tensor> grads;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    params.push_back({"w" + std::to_string(l), &p.layers[l].w});
    params.push_back({"b" + std::to_string(l), &p.layers[l].b});
    grads.push_back(v.layers[l].first->grad);
    grads.push_back(v.layers[l].second->grad);
  }
  CHECK(max_grad_error(params, forward, grads) < 1e-4);
}

TEST_CASE("softmax cross entropy values and stability") {
  SECTION("uniform logits give ln(c)") {
    auto l = constant(Tensor::vector({0.5, 0.5, 0.5, 0.5}));
    auto loss = softmax_cross_entropy(l, 2);
    CHECK(std::abs(loss->value[0] - std::log(4.0)) < 1e-12);
  }
  SECTION("huge margin stays finite and near zero") {
    auto l = constant(Tensor::vector({1000.0, 0.0}));
    auto loss = softmax_cross_entropy(l, 0);
    CHECK(std::isfinite(loss->value[0]));
    CHECK(loss->value[0] < 1e-12);
  }
  SECTION("target out of range") {
    auto l = constant(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(softmax_cross_entropy(l, 2), IndexError);
  }
}

TEST_CASE("softmax cross entropy gradient is softmax minus one-hot") {
  Rng rng(5);
  Tensor logits = random_tensor({5}, rng);
  const std::size_t target = 3;
  auto forward = [&]() {
    return softmax_cross_entropy(constant(logits), target)->value[0];
  };
  auto l = leaf(logits);
  backward(softmax_cross_entropy(l, target));
  // analytic formula check
  double mx = logits[0];
  for (std::size_t i = 1; i < 5; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < 5; ++i) z += std::exp(logits[i] - mx);
  for (std::size_t i = 0; i < 5; ++i) {
    const double p = std::exp(logits[i] - mx) / z;
    CHECK(std::abs(l->grad[i] - (p - (i == target ? 1.0 : 0.0))) < 1e-12);
  }
  CHECK(max_grad_error({{"logits", &logits}}, forward, {l->grad}) < 1e-4);
}

TEST_CASE("row-wise cross entropy honors the active mask") {
  Tensor L = Tensor::matrix(3, 2, {5, 0, 0, 5, 1, 1});
  auto l = constant(L);
  auto full = softmax_cross_entropy_rows(l, {0, 1, 0});
  auto masked = softmax_cross_entropy_rows(l, {0, 1, 0}, {true, true, false});
  // first two rows are confident and correct; third row adds ln 2 / 3
  CHECK(masked->value[0] < full->value[0]);
  CHECK_THROWS_AS(
      softmax_cross_entropy_rows(l, {0, 1, 0}, {false, false, false}),
      AggregationError);
}

TEST_CASE("gather, scatter, edge_matvec and mean_rows gradients") {
  Rng rng(13);
  SECTION("gather_rows") {
    Tensor X = random_tensor({4, 3}, rng);
    std::vector<std::size_t> idx{2, 0, 2};
    auto forward = [&]() {
      auto g = gather_rows(constant(X), idx);
      double s = 0.0;
      for (std::size_t i = 0; i < g->value.size(); ++i) s += g->value[i] * (i + 1);
      return s;
    };
    auto x = leaf(X);
    auto g = gather_rows(x, idx);
    Tensor w(g->value.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = i + 1;
    auto loss = matmul(reshape(g, {1, g->value.size()}),
                       reshape(constant(w), {w.size(), 1}));
    backward(loss);
    CHECK(max_grad_error({{"x", &X}}, forward, {x->grad}) < 1e-4);
  }
  SECTION("scatter_reduce mean and max") {
    Tensor X = random_tensor({5, 2}, rng);
    std::vector<std::size_t> groups{0, 1, 0, 2, 1};
    for (ReduceMode mode : {ReduceMode::Mean, ReduceMode::Max, ReduceMode::Sum}) {
      auto forward = [&]() {
        auto out = scatter_reduce(constant(X), groups, 4, mode);
        double s = 0.0;
        for (std::size_t i = 0; i < out->value.size(); ++i)
          s += out->value[i] * (0.5 + i);
        return s;
      };
      auto x = leaf(X);
      auto out = scatter_reduce(x, groups, 4, mode);
      Tensor w(out->value.shape());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 + i;
      auto loss = matmul(reshape(out, {1, out->value.size()}),
                         reshape(constant(w), {w.size(), 1}));
      backward(loss);
      CHECK(max_grad_error({{"x", &X}}, forward, {x->grad}) < 1e-4);
    }
    // empty group produces a zero row
    auto out = scatter_reduce(constant(X), groups, 4, ReduceMode::Mean);
    CHECK(out->value.at(3, 0) == 0.0);
    CHECK(out->value.at(3, 1) == 0.0);
  }
  SECTION("edge_matvec") {
    Tensor Q = random_tensor({3, 6}, rng);  // three 2x3 matrices
    Tensor V = random_tensor({3, 3}, rng);
    auto forward = [&]() {
      auto out = edge_matvec(constant(Q), constant(V), 2, 3);
      double s = 0.0;
      for (std::size_t i = 0; i < out->value.size(); ++i)
        s += out->value[i] * (1.0 + 0.25 * i);
      return s;
    };
    auto q = leaf(Q), v = leaf(V);
    auto out = edge_matvec(q, v, 2, 3);
    Tensor w(out->value.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + 0.25 * i;
    auto loss = matmul(reshape(out, {1, out->value.size()}),
                       reshape(constant(w), {w.size(), 1}));
    backward(loss);
    CHECK(max_grad_error({{"q", &Q}, {"v", &V}}, forward,
                         {q->grad, v->grad}) < 1e-4);
    // spot check forward against a hand loop
    for (std::size_t e = 0; e < 3; ++e)
      for (std::size_t i = 0; i < 2; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 3; ++j)
          acc += Q[e * 6 + i * 3 + j] * V[e * 3 + j];
        CHECK(out->value[e * 2 + i] == Catch::Approx(acc).margin(1e-14));
      }
  }
  SECTION("mean_rows") {
    Tensor X = random_tensor({4, 3}, rng);
    auto forward = [&]() {
      auto out = mean_rows(constant(X));
      double s = 0.0;
      for (std::size_t i = 0; i < out->value.size(); ++i)
        s += out->value[i] * (i + 1.0);
      return s;
    };
    auto x = leaf(X);
    auto out = mean_rows(x);
    Tensor w(out->value.shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = i + 1.0;
    auto loss = matmul(out, reshape(constant(w), {3, 1}));
    backward(loss);
    CHECK(max_grad_error({{"x", &X}}, forward, {x->grad}) < 1e-4);
  }
}

TEST_CASE("forward evaluation is deterministic and finite") {
  Rng rng(99);
  MlpParams p = make_mlp({4, 8, 8, 3}, rng);
  Tensor x = random_tensor({4}, rng);
  Tensor y1 = mlp_forward(p, x);
  Tensor y2 = mlp_forward(p, x);
  CHECK(y1.data() == y2.data());
  CHECK(y1.all_finite());
}

TEST_CASE("init is seed-deterministic and bounded by sqrt(6/fan_in)") {
  Rng a(123), b(123), c(124);
  MlpParams p1 = make_mlp({5, 7}, a);
  MlpParams p2 = make_mlp({5, 7}, b);
  MlpParams p3 = make_mlp({5, 7}, c);
  CHECK(p1.layers[0].w.data() == p2.layers[0].w.data());
  CHECK(p1.layers[0].w.data() != p3.layers[0].w.data());
  const double bound = std::sqrt(6.0 / 5.0);
  for (double v : p1.layers[0].w.data()) CHECK(std::abs(v) <= bound);
  for (double v : p1.layers[0].b.data()) CHECK(v == 0.0);
}
