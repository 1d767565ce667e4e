#include "sop/analysis.hpp"

#include "doctest.h"
#include "stat_checks.hpp"

#include <cmath>
#include <sstream>

using namespace sop;
using namespace sop::analysis;

namespace {

double harmonic(int n) {
  double h = 0.0;
  for (int i = n; i >= 1; --i) h += 1.0 / i;
  return h;
}

}  // namespace

TEST_CASE("uniform empty start: harmonic tails") {
  const auto c = expected_counts_uniform_empty(1000, 1000);
  CHECK(c.first_index == 1);
  CHECK(c.values.size() == 1000);
  CHECK(c.at(1000) == doctest::Approx(0.001));
  CHECK(c.at(1) == doctest::Approx(harmonic(1000)).epsilon(1e-14));
  CHECK(c.at(1) == doctest::Approx(7.4855).epsilon(1e-5));
  for (std::int64_t t = 1; t < 1000; ++t) CHECK(c.at(t) > c.at(t + 1));
  CHECK(c.total() == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK_THROWS_AS(expected_counts_uniform_empty(10, 11), std::invalid_argument);
}

TEST_CASE("uniform full start: linear") {
  const auto c = expected_counts_uniform_full(1000, 1000);
  CHECK(c.at(0) == 1.0);
  CHECK(c.at(1000) == 0.0);
  CHECK(c.at(250) == 0.75);
  for (std::int64_t t = 1; t < 1000; ++t)
    CHECK(c.at(t) - c.at(t + 1) == doctest::Approx(0.001).epsilon(1e-9));
  // Prefilled points are drawn until the buffer has turned over.
  CHECK(c.at(-999) == 0.001);
  CHECK(c.total() == doctest::Approx(1000.0).epsilon(1e-12));

  const auto longer = expected_counts_uniform_full(100, 300);
  CHECK(longer.at(-99) == 0.01);
  CHECK(longer.at(0) == 1.0);
  CHECK(longer.at(150) == 1.0);
  CHECK(longer.at(250) == 0.5);
  CHECK(longer.total() == doctest::Approx(300.0).epsilon(1e-12));
}

TEST_CASE("ERE with eta = 1 reduces to uniform") {
  const auto empty = expected_counts_ere(1000, 1000, 1.0, Start::empty);
  const auto uempty = expected_counts_uniform_empty(1000, 1000);
  CHECK(empty.values == uempty.values);  // same summation order, bit-identical

  const auto full = expected_counts_ere(1000, 1000, 1.0, Start::full);
  const auto ufull = expected_counts_uniform_full(1000, 1000);
  REQUIRE(full.first_index == ufull.first_index);
  REQUIRE(full.values.size() == ufull.values.size());
  for (std::size_t i = 0; i < full.values.size(); ++i)
    CHECK(full.values[i] == doctest::Approx(ufull.values[i]).epsilon(1e-12));
}

TEST_CASE("ERE curves: conservation, flatness and variance ordering") {
  const auto ere = expected_counts_ere(1000, 1000, 0.996, Start::full);
  const auto ufull = expected_counts_uniform_full(1000, 1000);
  const auto uempty = expected_counts_uniform_empty(1000, 1000);
  for (double v : ere.values) CHECK(v >= 0.0);
  CHECK(ere.total() == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(expected_counts_ere(1000, 1000, 0.996, Start::empty).total() ==
        doctest::Approx(1000.0).epsilon(1e-12));

  CHECK(ere.max_min_ratio(1, 1000) < ufull.max_min_ratio(1, 1000));
  const double v_ere = ere.variance(1, 1000);
  const double v_full = ufull.variance(1, 1000);
  const double v_empty = uempty.variance(1, 1000);
  CHECK(v_ere < v_full);
  CHECK(v_full < v_empty);
  // Closed form for the linear curve: (N^2 - 1) / (12 N^2).
  CHECK(v_full == doctest::Approx((1e6 - 1.0) / 12e6).epsilon(1e-9));

  // Hand check of one window: the newest point at the last step is drawn
  // with probability 1 / round(1000 * 0.996^1000).
  const double c_last = std::round(1000.0 * std::pow(0.996, 1000.0));
  CHECK(ere.at(999) == doctest::Approx(1.0 / c_last));
}

TEST_CASE("expected_counts scales with the batch and validates input") {
  Scenario sc;
  sc.capacity = 200;
  sc.updates = 100;
  sc.eta = 0.99;
  sc.start = Start::full;
  sc.batch = 4;
  const auto e = expected_counts(sc);
  CHECK(e.mean.total() == doctest::Approx(400.0).epsilon(1e-12));
  sc.batch = 1;
  const auto e1 = expected_counts(sc);
  for (std::size_t i = 0; i < e.mean.values.size(); ++i)
    CHECK(e.mean.values[i] == doctest::Approx(4.0 * e1.mean.values[i]));
  sc.eta = 1.5;
  CHECK_THROWS_AS(expected_counts(sc), std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_scheme("stratified", 10, 10, 1.0), std::invalid_argument);
  CHECK(scenario_from_scheme("ere_full", 10, 10, 0.9).start == Start::full);
}

TEST_CASE("empirical counts agree with the exact curves") {
  for (const char* scheme : {"uniform_full", "ere_full", "ere_empty"}) {
    CAPTURE(scheme);
    const auto sc = scenario_from_scheme(scheme, 300, 300, 0.99);
    const auto exact = expected_counts(sc);
    Rng rng(17);
    const std::size_t trials = 4000;
    const auto emp = empirical_counts(sc, trials, rng);
    const auto sigma = binomial_sigma(exact, trials);
    const auto rep = sop::testing::sigma_check(emp.mean.values, exact.mean.values, sigma.values);
    CHECK(rep.ok());
    CHECK(emp.mean.total() == doctest::Approx(300.0).epsilon(1e-12));
  }
}

TEST_CASE("empirical counts: reproducible for a fixed seed") {
  const auto sc = scenario_from_scheme("ere_full", 100, 100, 0.98);
  Rng a(5), b(5);
  const auto x = empirical_counts(sc, 1, a);
  const auto y = empirical_counts(sc, 1, b);
  CHECK(x.mean.values == y.mean.values);
  for (double s : x.sigma.values) CHECK(s == 0.0);
  Rng c(5);
  CHECK_THROWS_AS(empirical_counts(sc, 0, c), std::invalid_argument);
}

TEST_CASE("mu trace") {
  const auto bounds = shaping::ActionBounds::symmetric(2, 1.0);
  std::vector<Eigen::VectorXd> zeros(10, Eigen::VectorXd::Zero(2));
  const auto z = summarize_outputs(5, zeros, bounds, true);
  CHECK(z.mean_abs_mu_pre_norm == 0.0);
  CHECK(z.saturation_fraction == 0.0);

  std::vector<Eigen::VectorXd> big;
  for (int i = 0; i < 10; ++i) big.push_back(Eigen::Vector2d(i % 2 ? 50.0 : -50.0, 50.0));
  const auto raw = summarize_outputs(6, big, bounds, false);
  CHECK(raw.mean_abs_mu_pre_norm == 50.0);
  CHECK(raw.saturation_fraction == 1.0);
  const auto normed = summarize_outputs(6, big, bounds, true);
  CHECK(normed.max_abs_mu_post_norm <= 1.0);
  CHECK(normed.saturation_fraction == 0.0);  // tanh(1) is far from the bound

  agent::LearningRecord rec;
  agent::EvalPoint p;
  p.step = 100;
  p.mean_abs_mu_pre_norm = 3.0;
  p.mean_abs_mu_post_norm = 1.0;
  p.max_abs_mu_post_norm = 1.0;
  p.saturation_fraction = 0.25;
  rec.points = {p, p};
  rec.points[1].step = 200;
  const auto rows = mu_trace(rec);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].step == 200);
  CHECK(rows[0].saturation_fraction == 0.25);

  std::ostringstream os;
  write_mu_trace_csv(os, rows);
  CHECK(os.str().rfind("step,mean_abs_mu_pre_norm", 0) == 0);
}

TEST_CASE("counts csv") {
  const auto c = expected_counts_uniform_empty(3, 3);
  std::ostringstream os;
  write_counts_csv(os, c);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,analytic,empirical_mean,empirical_sigma");
  std::getline(in, line);
  CHECK(line.rfind("1,1.83333", 0) == 0);
  CHECK(line.substr(line.size() - 2) == ",,");
}
