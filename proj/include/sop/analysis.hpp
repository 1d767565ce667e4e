#pragma once

// Expected number of times each data point is drawn under uniform and ERE
// sampling, in the one-push-one-draw scenario, plus the Monte-Carlo
// counterpart and the mu / saturation trace of a training record.
//
// Data points are numbered by insertion time t. With an empty start the
// first push is t = 1. With a full start the buffer initially holds
// t = 1 - N .. 0 and each step draws before pushing, so point t is
// available from step t + 1 on.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sop/agent.hpp"
#include "sop/rng.hpp"

namespace sop::analysis {

enum class Start { empty, full };

struct Scenario {
  std::size_t capacity = 1000;  // N
  std::size_t updates = 1000;   // steps, one push and `batch` draws each
  double eta = 1.0;             // 1 means uniform over the whole buffer
  Start start = Start::empty;
  std::size_t batch = 1;
  std::size_t c_min = 1;
  double phase_length = 1000.0;  // c_k = N * eta^(k * phase_length / updates)

  /// Throws std::invalid_argument for an empty scenario, eta outside
  /// (0, 1], or (empty start) more updates than capacity.
  void validate() const;
  /// Window size requested at step k (1-based), before clamping to the size.
  std::size_t window(std::size_t k) const;
};

/// Per data point values indexed by insertion time.
struct Curve {
  std::int64_t first_index = 1;  // t of values[0]
  std::vector<double> values;

  std::int64_t last_index() const {
    return first_index + static_cast<std::int64_t>(values.size()) - 1;
  }
  double at(std::int64_t t) const;
  double total() const;
  /// Population variance over t in [lo, hi].
  double variance(std::int64_t lo, std::int64_t hi) const;
  /// max / min over the strictly positive entries in [lo, hi].
  double max_min_ratio(std::int64_t lo, std::int64_t hi) const;
};

/// sum_{t'=t}^{updates} 1/t' for t = 1..updates (empty start, uniform).
Curve expected_counts_uniform_empty(std::size_t capacity, std::size_t updates);
/// min(updates, t + N) - max(t, 0) draws at 1 / N each (full start, uniform);
/// the prefilled points are t <= 0.
Curve expected_counts_uniform_full(std::size_t capacity, std::size_t updates);

struct ExactCounts {
  Curve mean;      // expected count per data point
  Curve variance;  // per-run variance, sum over steps of batch * p (1 - p)
};

/// Exact bookkeeping: at step k every point inside the most recent
/// min(c_k, size) window is drawn with probability 1 / window per draw.
ExactCounts expected_counts(const Scenario& scenario);
/// expected_counts() for the ERE schedule with c_min = 1.
Curve expected_counts_ere(std::size_t capacity, std::size_t updates, double eta, Start start);

struct EmpiricalCounts {
  Curve mean;
  Curve sigma;  // standard error of the mean (sample standard deviation / sqrt(trials))
  std::size_t trials = 0;
};

/// Monte-Carlo simulation of `scenario` over `trials` independent runs.
EmpiricalCounts empirical_counts(const Scenario& scenario, std::size_t trials, Rng& rng);

/// Binomial standard error of the mean count after `trials` runs.
Curve binomial_sigma(const ExactCounts& exact, std::size_t trials);

struct MuTraceRow {
  std::int64_t step = 0;
  double mean_abs_mu_pre_norm = 0.0;
  double mean_abs_mu_post_norm = 0.0;
  double max_abs_mu_post_norm = 0.0;
  double saturation_fraction = 0.0;
};

/// One row per evaluation point of the record.
std::vector<MuTraceRow> mu_trace(const agent::LearningRecord& record);

/// Summary of raw policy outputs at one checkpoint: |mu| before and after
/// normalization and the saturation of the noise-free actions M tanh(.).
MuTraceRow summarize_outputs(std::int64_t step, std::span<const Eigen::VectorXd> raw_mu,
                             const shaping::ActionBounds& bounds, bool normalize);

/// index, analytic, empirical_mean, empirical_sigma. Empirical columns are
/// left empty when not given.
void write_counts_csv(std::ostream& os, const Curve& analytic,
                      const EmpiricalCounts* empirical = nullptr);
void write_mu_trace_csv(std::ostream& os, std::span<const MuTraceRow> rows);

/// "uniform_empty", "uniform_full", "ere_empty" or "ere_full" to a scenario
/// at the given size; throws std::invalid_argument otherwise.
Scenario scenario_from_scheme(std::string_view scheme, std::size_t capacity, std::size_t updates,
                              double eta);

}  // namespace sop::analysis
