#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "sop/action_shaping.hpp"

namespace sop::envs {

using Vector = Eigen::VectorXd;

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  shaping::ActionBounds bounds;
  int horizon = 1;
  std::string reward_description;

  /// One-line key=value summary for logs.
  std::string describe() const;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool terminal = false;   // no bootstrapping past this transition
  bool truncated = false;  // time limit reached on a non-terminal state
  bool done() const { return terminal || truncated; }
};

/// Deterministic bounded-action environment. Out-of-range actions are
/// clipped to the bounds before use.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  /// Throws std::invalid_argument on a dimension mismatch and
  /// std::logic_error when the episode has already ended.
  virtual StepResult step(const Vector& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
  int steps_taken() const { return steps_; }

 protected:
  int steps_ = 0;
  bool done_ = true;
  void begin_step(const Vector& action);
};

/// x' = clamp(x + clip(a), -1, 1), r = -|x'|^2. Initial position uniform in
/// [-1, 1]^dim from the reset seed. Episodes are truncated at the horizon.
class PointMass final : public Environment {
 public:
  static constexpr double kStepLimit = 0.1;
  /// tanh scale M used by squashing agents. Above the clip limit so an
  /// output-normalized policy can still reach it: M tanh(1) ~= 0.19.
  static constexpr double kSquashScale = 0.25;

  PointMass(int dim, int horizon, double squash_scale = kSquashScale);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  /// Starts an episode from an explicit position (clamped to [-1, 1]).
  Vector reset_to(const Vector& position);
  StepResult step(const Vector& action) override;
  std::unique_ptr<Environment> clone() const override;
  const Vector& position() const { return x_; }

  /// Initial position reset(seed) produces.
  static Vector initial_position(int dim, std::uint64_t seed);

 private:
  EnvSpec spec_;
  Vector x_;
};

/// Single-action task with an interior optimum a* = 0.3 M and a bonus beta
/// for |a| >= 0.9 M during the first 20% of the episode. State is
/// (t / horizon, lure-window flag).
class BoundaryLure final : public Environment {
 public:
  static constexpr double kScale = 0.2;  // M
  static constexpr double kTargetFraction = 0.3;
  static constexpr double kLureThreshold = 0.9;
  static constexpr double kLureEdge = 0.18;  // kLureThreshold * kScale, exact literal
  static constexpr double kLureBonus = 0.05;
  static constexpr double kLureWindow = 0.2;

  explicit BoundaryLure(int horizon = 50);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Environment> clone() const override;

  /// Reward for (already clipped) action `a` at step index `t`.
  double reward(double a, int t) const;
  bool in_lure_window(int t) const;

 private:
  EnvSpec spec_;
  Vector observe() const;
};

std::vector<std::string> env_names();
/// "pointmass1d", "pointmass2d" or "boundarylure". Throws
/// std::invalid_argument for anything else.
std::unique_ptr<Environment> make_env(std::string_view name);

/// Backward-induction value table on a discretized grid.
class DpSolution {
 public:
  DpSolution(std::vector<double> grid, std::vector<double> values, int axes);

  /// Optimal return from `state` (linear interpolation per axis).
  double value_at(const Vector& state) const;
  /// Expected optimal return under the reset distribution.
  double expected_value() const;

  int state_resolution() const { return static_cast<int>(grid_.size()) - 1; }

 private:
  std::vector<double> grid_;
  std::vector<double> values_;
  int axes_;
  double expected_;
};

struct DpReport {
  DpSolution coarse;
  DpSolution fine;  // both resolutions doubled
  int state_resolution = 0;
  int action_resolution = 0;

  double value() const { return fine.expected_value(); }
  /// |fine - coarse| / |fine| (0 when both are 0).
  double relative_change() const;
};

/// Finite-horizon (undiscounted) backward induction. The state grid has
/// `state_resolution` intervals over [-1, 1], the action grid
/// `action_resolution` intervals over the clip box. Resolutions must be
/// >= 32. Throws std::invalid_argument for unknown environments.
DpReport dp_oracle(const EnvSpec& spec, int state_resolution, int action_resolution);

/// Single-resolution solve used by dp_oracle().
DpSolution dp_solve(const EnvSpec& spec, int state_resolution, int action_resolution);

}  // namespace sop::envs
