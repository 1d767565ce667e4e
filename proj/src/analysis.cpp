#include "sop/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "sop/replay.hpp"

namespace sop::analysis {

void Scenario::validate() const {
  if (capacity < 1 || updates < 1) throw std::invalid_argument("scenario: empty scenario");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("scenario: eta must be in (0, 1]");
  if (batch < 1) throw std::invalid_argument("scenario: batch must be >= 1");
  if (start == Start::empty && updates > capacity)
    throw std::invalid_argument("scenario: an empty start needs updates <= capacity");
}

std::size_t Scenario::window(std::size_t k) const {
  replay::EreConfig cfg;
  cfg.eta0 = eta;
  cfg.c_min = c_min;
  cfg.phase_length = phase_length;
  return replay::ere_range(k, updates, capacity, cfg, eta);
}

double Curve::at(std::int64_t t) const {
  if (t < first_index || t > last_index()) throw std::out_of_range("curve: index out of range");
  return values[static_cast<std::size_t>(t - first_index)];
}

double Curve::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

double Curve::variance(std::int64_t lo, std::int64_t hi) const {
  const auto n = static_cast<double>(hi - lo + 1);
  double mean = 0.0;
  for (std::int64_t t = lo; t <= hi; ++t) mean += at(t);
  mean /= n;
  double ss = 0.0;
  for (std::int64_t t = lo; t <= hi; ++t) ss += (at(t) - mean) * (at(t) - mean);
  return ss / n;
}

double Curve::max_min_ratio(std::int64_t lo, std::int64_t hi) const {
  double mx = 0.0, mn = std::numeric_limits<double>::infinity();
  for (std::int64_t t = lo; t <= hi; ++t) {
    const double v = at(t);
    if (v <= 0.0) continue;
    mx = std::max(mx, v);
    mn = std::min(mn, v);
  }
  return mx / mn;
}

Curve expected_counts_uniform_empty(std::size_t capacity, std::size_t updates) {
  Scenario{capacity, updates}.validate();
  Curve c;
  c.first_index = 1;
  c.values.assign(updates, 0.0);
  double s = 0.0;
  for (std::size_t t = updates; t >= 1; --t) {
    s = s + 1.0 / static_cast<double>(t);
    c.values[t - 1] = s;
  }
  return c;
}

Curve expected_counts_uniform_full(std::size_t capacity, std::size_t updates) {
  Scenario{capacity, updates, 1.0, Start::full}.validate();
  const auto n = static_cast<std::int64_t>(capacity);
  const auto u = static_cast<std::int64_t>(updates);
  Curve c;
  c.first_index = 1 - n;
  c.values.resize(static_cast<std::size_t>(n + u));
  for (std::int64_t t = 1 - n; t <= u; ++t) {
    const std::int64_t draws = std::min(u, t + n) - std::max<std::int64_t>(t, 0);
    c.values[static_cast<std::size_t>(t - c.first_index)] =
        static_cast<double>(draws) / static_cast<double>(n);
  }
  return c;
}

ExactCounts expected_counts(const Scenario& sc) {
  sc.validate();
  const auto n = static_cast<std::int64_t>(sc.capacity);
  const auto u = static_cast<std::int64_t>(sc.updates);
  const double b = static_cast<double>(sc.batch);
  ExactCounts out;
  const std::int64_t first = sc.start == Start::empty ? 1 : 1 - n;
  out.mean.first_index = out.variance.first_index = first;
  out.mean.values.assign(static_cast<std::size_t>(u - first + 1), 0.0);
  out.variance.values = out.mean.values;

  // Steps are visited from last to first so each point accumulates its
  // terms in the same order as the closed-form suffix sums.
  for (std::int64_t k = u; k >= 1; --k) {
    const std::int64_t newest = sc.start == Start::empty ? k : k - 1;
    const std::int64_t size = sc.start == Start::empty ? k : n;
    const std::int64_t w = std::min<std::int64_t>(static_cast<std::int64_t>(sc.window(k)), size);
    const double p = 1.0 / static_cast<double>(w);
    for (std::int64_t t = newest - w + 1; t <= newest; ++t) {
      const auto i = static_cast<std::size_t>(t - first);
      out.mean.values[i] += b * p;
      out.variance.values[i] += b * p * (1.0 - p);
    }
  }
  return out;
}

Curve expected_counts_ere(std::size_t capacity, std::size_t updates, double eta, Start start) {
  Scenario sc;
  sc.capacity = capacity;
  sc.updates = updates;
  sc.eta = eta;
  sc.start = start;
  return expected_counts(sc).mean;
}

EmpiricalCounts empirical_counts(const Scenario& sc, std::size_t trials, Rng& rng) {
  sc.validate();
  if (trials < 1) throw std::invalid_argument("empirical_counts: trials must be >= 1");
  const auto n = static_cast<std::int64_t>(sc.capacity);
  const auto u = static_cast<std::int64_t>(sc.updates);
  const std::int64_t first = sc.start == Start::empty ? 1 : 1 - n;
  const auto len = static_cast<std::size_t>(u - first + 1);

  std::vector<std::int64_t> windows(static_cast<std::size_t>(u) + 1);
  for (std::int64_t k = 1; k <= u; ++k)
    windows[static_cast<std::size_t>(k)] = static_cast<std::int64_t>(sc.window(k));

  std::vector<double> sum(len, 0.0), sumsq(len, 0.0);
  std::vector<std::uint32_t> counts(len);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::fill(counts.begin(), counts.end(), 0u);
    for (std::int64_t k = 1; k <= u; ++k) {
      const std::int64_t newest = sc.start == Start::empty ? k : k - 1;
      const std::int64_t size = sc.start == Start::empty ? k : n;
      const std::int64_t w = std::min(windows[static_cast<std::size_t>(k)], size);
      std::uniform_int_distribution<std::int64_t> pick(newest - w + 1, newest);
      for (std::size_t j = 0; j < sc.batch; ++j) ++counts[static_cast<std::size_t>(pick(rng) - first)];
    }
    for (std::size_t i = 0; i < len; ++i) {
      sum[i] += counts[i];
      sumsq[i] += static_cast<double>(counts[i]) * counts[i];
    }
  }

  EmpiricalCounts out;
  out.trials = trials;
  out.mean.first_index = out.sigma.first_index = first;
  out.mean.values.resize(len);
  out.sigma.values.resize(len);
  const double m = static_cast<double>(trials);
  for (std::size_t i = 0; i < len; ++i) {
    const double mean = sum[i] / m;
    out.mean.values[i] = mean;
    const double var = trials > 1 ? std::max(0.0, (sumsq[i] - m * mean * mean) / (m - 1.0)) : 0.0;
    out.sigma.values[i] = std::sqrt(var / m);
  }
  return out;
}

Curve binomial_sigma(const ExactCounts& exact, std::size_t trials) {
  Curve c;
  c.first_index = exact.variance.first_index;
  c.values.reserve(exact.variance.values.size());
  for (double v : exact.variance.values)
    c.values.push_back(std::sqrt(v / static_cast<double>(trials)));
  return c;
}

std::vector<MuTraceRow> mu_trace(const agent::LearningRecord& record) {
  std::vector<MuTraceRow> rows;
  rows.reserve(record.points.size());
  for (const auto& p : record.points)
    rows.push_back({p.step, p.mean_abs_mu_pre_norm, p.mean_abs_mu_post_norm,
                    p.max_abs_mu_post_norm, p.saturation_fraction});
  return rows;
}

MuTraceRow summarize_outputs(std::int64_t step, std::span<const Eigen::VectorXd> raw_mu,
                             const shaping::ActionBounds& bounds, bool normalize) {
  if (raw_mu.empty()) throw std::invalid_argument("summarize_outputs: no outputs");
  MuTraceRow row;
  row.step = step;
  std::vector<Eigen::VectorXd> actions;
  actions.reserve(raw_mu.size());
  double pre = 0.0, post = 0.0;
  std::size_t comps = 0;
  for (const auto& mu : raw_mu) {
    const Eigen::VectorXd y = normalize ? shaping::normalize_output(mu) : mu;
    pre += mu.cwiseAbs().sum();
    post += y.cwiseAbs().sum();
    row.max_abs_mu_post_norm = std::max(row.max_abs_mu_post_norm, shaping::output_magnitude(y));
    comps += static_cast<std::size_t>(mu.size());
    actions.push_back(shaping::squash(y, Eigen::VectorXd::Zero(y.size()), bounds));
  }
  row.mean_abs_mu_pre_norm = pre / static_cast<double>(comps);
  row.mean_abs_mu_post_norm = post / static_cast<double>(comps);
  row.saturation_fraction = shaping::saturation_fraction(actions, bounds);
  return row;
}

void write_counts_csv(std::ostream& os, const Curve& analytic, const EmpiricalCounts* empirical) {
  const auto old = os.precision(17);
  os << "index,analytic,empirical_mean,empirical_sigma\n";
  for (std::int64_t t = analytic.first_index; t <= analytic.last_index(); ++t) {
    os << t << ',' << analytic.at(t) << ',';
    if (empirical && t >= empirical->mean.first_index && t <= empirical->mean.last_index())
      os << empirical->mean.at(t) << ',' << empirical->sigma.at(t);
    else
      os << ',';
    os << '\n';
  }
  os.precision(old);
}

void write_mu_trace_csv(std::ostream& os, std::span<const MuTraceRow> rows) {
  const auto old = os.precision(17);
  os << "step,mean_abs_mu_pre_norm,mean_abs_mu_post_norm,max_abs_mu_post_norm,saturation_fraction\n";
  for (const auto& r : rows)
    os << r.step << ',' << r.mean_abs_mu_pre_norm << ',' << r.mean_abs_mu_post_norm << ','
       << r.max_abs_mu_post_norm << ',' << r.saturation_fraction << '\n';
  os.precision(old);
}

Scenario scenario_from_scheme(std::string_view scheme, std::size_t capacity, std::size_t updates,
                              double eta) {
  Scenario sc;
  sc.capacity = capacity;
  sc.updates = updates;
  if (scheme == "uniform_empty") {
    sc.eta = 1.0;
    sc.start = Start::empty;
  } else if (scheme == "uniform_full") {
    sc.eta = 1.0;
    sc.start = Start::full;
  } else if (scheme == "ere_empty") {
    sc.eta = eta;
    sc.start = Start::empty;
  } else if (scheme == "ere_full") {
    sc.eta = eta;
    sc.start = Start::full;
  } else {
    throw std::invalid_argument("unknown scheme '" + std::string(scheme) +
                                "' (uniform_empty, uniform_full, ere_empty, ere_full)");
  }
  sc.validate();
  return sc;
}

}  // namespace sop::analysis
