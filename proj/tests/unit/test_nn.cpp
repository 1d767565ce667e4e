#include "sop/nn.hpp"

#include "doctest.h"

#include <cmath>
#include <sstream>
#include <stdexcept>

using namespace sop::nn;

namespace {

MlpParams hand_net() {
  // 2-2-2-1, values chosen so the first hidden unit is active and the
  // second one is cut by the ReLU.
  MlpParams p;
  Layer l1{Matrix(2, 2), Vector(2)};
  l1.weight << 1.0, -1.0, 0.5, 2.0;
  l1.bias << 0.1, -0.2;
  Layer l2{Matrix(2, 2), Vector(2)};
  l2.weight << 1.0, 1.0, -2.0, 0.5;
  l2.bias << 0.0, 5.0;
  Layer l3{Matrix(1, 2), Vector(1)};
  l3.weight << 0.5, -1.0;
  l3.bias << 0.25;
  p.layers = {l1, l2, l3};
  return p;
}

Vector random_vector(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

}  // namespace

TEST_CASE("forward: zero net gives zero output") {
  std::mt19937_64 rng(1);
  const int sizes[] = {3, 8, 8, 2};
  MlpParams p = zeros_like(make_mlp(sizes, rng));
  Vector x(3);
  x << 1.0, -2.0, 3.0;
  CHECK(mlp_forward(p, x).isZero(0.0));
}

TEST_CASE("forward: identity path passes positive input through ReLU") {
  const int sizes[] = {1, 1, 1, 1};
  std::mt19937_64 rng(0);
  MlpParams p = make_mlp(sizes, rng);
  for (auto& l : p.layers) {
    l.weight.setOnes();
    l.bias.setZero();
  }
  Vector x(1);
  x << 0.75;
  CHECK(mlp_forward(p, x)(0) == 0.75);
}

TEST_CASE("forward: hand-evaluated 2-2-2-1 net") {
  // z1 = (1+1+0.1, 0.5-2-0.2) = (2.1, -1.7) -> h1 = (2.1, 0)
  // z2 = (2.1, -4.2+5) = (2.1, 0.8)         -> h2 = (2.1, 0.8)
  // y  = 0.5*2.1 - 0.8 + 0.25 = 0.5
  Vector x(2);
  x << 1.0, -1.0;
  CHECK(mlp_forward(hand_net(), x)(0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("forward/backward: dimension mismatch throws") {
  Vector x(3);
  x.setZero();
  CHECK_THROWS_AS(mlp_forward(hand_net(), x), std::invalid_argument);
  Vector x2(2);
  x2.setZero();
  Vector g(2);
  g.setOnes();
  CHECK_THROWS_AS(mlp_backward(hand_net(), x2, g), std::invalid_argument);
}

TEST_CASE("backward: zero cotangent gives zero gradients") {
  std::mt19937_64 rng(3);
  const int sizes[] = {4, 6, 6, 3};
  MlpParams p = make_mlp(sizes, rng);
  auto g = mlp_backward(p, random_vector(4, rng), Vector::Zero(3));
  for (double v : flatten(g.params)) CHECK(v == 0.0);
  CHECK(g.input.isZero(0.0));
}

TEST_CASE("backward: single linear layer weight gradient is outer product") {
  std::mt19937_64 rng(4);
  const int sizes[] = {3, 2};
  MlpParams p = make_mlp(sizes, rng);
  Vector x = random_vector(3, rng);
  Vector gy = random_vector(2, rng);
  auto g = mlp_backward(p, x, gy);
  Matrix expected = gy * x.transpose();
  CHECK((g.params.layers[0].weight - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.params.layers[0].bias - gy).cwiseAbs().maxCoeff() == 0.0);
  CHECK((g.input - p.layers[0].weight.transpose() * gy).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward: input gradient matches central differences") {
  std::mt19937_64 rng(5);
  const int sizes[] = {3, 16, 16, 2};
  MlpParams p = make_mlp(sizes, rng);
  Vector x = random_vector(3, rng);
  Vector gy = random_vector(2, rng);
  auto g = mlp_backward(p, x, gy);
  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double num = (mlp_forward(p, xp).dot(gy) - mlp_forward(p, xm).dot(gy)) / (2 * h);
    CHECK(relative_error(g.input(i), num) < 1e-5);
  }
}

TEST_CASE("batch backward equals sum of per-sample backward") {
  std::mt19937_64 rng(6);
  const int sizes[] = {2, 5, 5, 1};
  MlpParams p = make_mlp(sizes, rng);
  Matrix X(2, 4), G(1, 4);
  for (int j = 0; j < 4; ++j) {
    X.col(j) = random_vector(2, rng);
    G.col(j) = random_vector(1, rng);
  }
  ForwardCache cache;
  Matrix Y = forward_batch(p, X, &cache);
  auto batch = backward_batch(p, cache, G);
  MlpGrads sum = zeros_like(p);
  for (int j = 0; j < 4; ++j) {
    CHECK(std::abs(Y(0, j) - mlp_forward(p, X.col(j))(0)) < 1e-14);
    auto g = mlp_backward(p, X.col(j), G.col(j));
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      sum.layers[l].weight += g.params.layers[l].weight;
      sum.layers[l].bias += g.params.layers[l].bias;
    }
    CHECK((batch.input.col(j) - g.input).cwiseAbs().maxCoeff() < 1e-14);
  }
  auto a = flatten(batch.params);
  auto b = flatten(sum);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("finite_diff_check: linear net is exact") {
  std::mt19937_64 rng(7);
  const int sizes[] = {4, 3};
  MlpParams p = make_mlp(sizes, rng);
  CHECK(finite_diff_check(p, random_vector(4, rng), 1e-5) < 1e-8);
}

TEST_CASE("finite_diff_check: random two-hidden-layer nets") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const int sizes[] = {3, 32, 32, 2};
    MlpParams p = make_mlp(sizes, rng);
    CHECK(finite_diff_check(p, random_vector(3, rng), 1e-5) < 1e-4);
  }
}

TEST_CASE("finite_diff_check: corrupted gradient is detected") {
  std::mt19937_64 rng(9);
  const int sizes[] = {3, 16, 16, 1};
  MlpParams p = make_mlp(sizes, rng);
  Vector x = random_vector(3, rng);
  Vector ones = Vector::Ones(1);
  auto g = mlp_backward(p, x, ones);
  // Bias of the output layer always has gradient 1, so corruption is visible.
  g.params.layers.back().bias(0) *= 2.0;
  CHECK(compare_with_finite_diff(p, x, ones, g.params, 1e-5) > 0.3);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::mt19937_64 rng(10);
  const int sizes[] = {2, 4, 1};
  MlpParams p = make_mlp(sizes, rng);
  const auto before = flatten(p);
  AdamState s = AdamState::for_params(p);
  adam_step(s, p, zeros_like(p), 3e-4);
  CHECK(flatten(p) == before);
  CHECK(s.step == 1);
}

TEST_CASE("adam: first step moves by lr * sign(g)") {
  MlpParams p;
  p.layers.push_back({Matrix::Zero(1, 1), Vector::Zero(1)});
  MlpGrads g = zeros_like(p);
  g.layers[0].weight(0, 0) = 1.0;
  AdamState s = AdamState::for_params(p);
  adam_step(s, p, g, 0.1);
  // m_hat = 1, v_hat = 1 -> step = 0.1 / (1 + 1e-8)
  CHECK(p.layers[0].weight(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(p.layers[0].bias(0) == 0.0);
}

TEST_CASE("adam: matches scalar simulation and decreases a quadratic") {
  // loss(w) = (w - 3)^2, started at w = 0.
  auto loss = [](double w) { return (w - 3.0) * (w - 3.0); };
  MlpParams p;
  p.layers.push_back({Matrix::Zero(1, 1), Vector::Zero(1)});
  AdamState s = AdamState::for_params(p);

  double w = 0.0, m = 0.0, v = 0.0;
  double prev = loss(0.0);
  for (int t = 1; t <= 2; ++t) {
    const double grad = 2.0 * (w - 3.0);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    w -= 0.5 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);

    MlpGrads g = zeros_like(p);
    g.layers[0].weight(0, 0) = 2.0 * (p.layers[0].weight(0, 0) - 3.0);
    adam_step(s, p, g, 0.5);
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(w).epsilon(1e-14));
    const double now = loss(p.layers[0].weight(0, 0));
    CHECK(now < prev);
    prev = now;
  }
  CHECK(s.step == 2);
}

TEST_CASE("adam: non-finite gradient names the tensor") {
  std::mt19937_64 rng(11);
  const int sizes[] = {2, 3, 1};
  MlpParams p = make_mlp(sizes, rng);
  const auto before = flatten(p);
  MlpGrads g = zeros_like(p);
  g.layers[1].bias(0) = std::nan("");
  AdamState s = AdamState::for_params(p);
  try {
    adam_step(s, p, g, 1e-3);
    FAIL("expected throw");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("layers.1.bias") != std::string::npos);
  }
  CHECK(flatten(p) == before);
  CHECK(s.step == 0);
}

TEST_CASE("determinism: same seed gives bit-identical nets and outputs") {
  const int sizes[] = {3, 8, 8, 2};
  std::mt19937_64 r1(42), r2(42);
  MlpParams a = make_mlp(sizes, r1);
  MlpParams b = make_mlp(sizes, r2);
  CHECK(flatten(a) == flatten(b));
  Vector x(3);
  x << 0.1, 0.2, -0.3;
  CHECK(mlp_forward(a, x) == mlp_forward(b, x));
  for (double w : flatten(a)) CHECK(std::abs(w) <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  std::mt19937_64 rng(12);
  const int sizes[] = {3, 5, 4, 2};
  MlpParams p = make_mlp(sizes, rng);
  p.layers[0].weight(0, 0) = 1e-310;  // subnormal
  p.layers[1].bias(2) = -0.0;
  std::stringstream ss;
  save_params(ss, "policy", p);
  MlpParams q = zeros_like(p);
  load_params(ss, "policy", q);
  const auto a = flatten(p), b = flatten(q);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::signbit(a[i]) == std::signbit(b[i]));
    CHECK(a[i] == b[i]);
  }

  std::stringstream bad;
  save_params(bad, "policy", p);
  MlpParams wrong = make_mlp(std::vector<int>{3, 4, 2}, rng);
  CHECK_THROWS(load_params(bad, "policy", wrong));
}
