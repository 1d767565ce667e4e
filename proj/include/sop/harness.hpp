#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sop/agent.hpp"
#include "sop/envs.hpp"

namespace sop::harness {

/// Configuration error carrying the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  std::string env = "pointmass1d";
  std::int64_t total_steps = 20000;
  std::vector<std::uint64_t> seeds{0};
  agent::AgentConfig agent;
  std::filesystem::path out_dir = "runs";
  int threads = 0;  // 0: one worker per seed, capped at the hardware concurrency

  /// Throws ConfigError.
  void validate() const;
};

/// Every accepted key, in the order used by dump_config().
const std::vector<std::string>& config_keys();

/// Applies one key=value pair. Throws ConfigError for unknown keys and
/// unparsable or out-of-range values.
void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Flat key=value text; '#' starts a comment.
void apply_config_text(ExperimentConfig& cfg, std::istream& is);

/// Defaults, then `file` (if given), then `args`. Arguments are
/// "--key value" or "--key=value"; "--config path" names a file too.
ExperimentConfig parse_config(const std::vector<std::string>& args,
                              const std::optional<std::filesystem::path>& file = std::nullopt);

/// key=value lines that parse_config() reads back to the same config.
void dump_config(std::ostream& os, const ExperimentConfig& cfg);

/// Mean and population standard deviation of deterministic-policy rollouts.
std::pair<double, double> evaluate(const agent::AgentState& state, const agent::AgentConfig& cfg,
                                   const envs::Environment& env, int rollouts, std::uint64_t seed);

inline constexpr const char* kCsvHeader =
    "step,seed,eval_return_mean,eval_return_std,entropy_estimate,saturation_fraction,"
    "mean_abs_mu_pre_norm,eta_current,wall_ms";

void write_record_csv(std::ostream& os, std::uint64_t seed, const agent::LearningRecord& record);

struct SeedOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // set when !ok
  std::filesystem::path csv;
  agent::LearningRecord record;
};

struct AggregateRow {
  std::int64_t step = 0;
  std::size_t seeds = 0;
  double mean = 0.0;
  double std = 0.0;  // population, across seeds
};

struct ExperimentSummary {
  std::vector<SeedOutcome> runs;  // in seed-list order
  std::vector<AggregateRow> aggregate;
  std::filesystem::path aggregate_csv;
  std::size_t failures() const;
};

/// Across-seed mean/std of eval_return_mean at each step reached by a
/// successful run, sorted by step.
std::vector<AggregateRow> aggregate(const std::vector<SeedOutcome>& runs);

/// One train() per seed, in parallel workers. Writes
/// out_dir/run<i>_seed<s>.csv per run and out_dir/aggregate.csv. A failing
/// seed is reported in its outcome and the others continue.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick gradient, normalization and sampler property checks.
std::vector<SelfTestResult> selftest(std::uint64_t seed = 1);

}  // namespace sop::harness
