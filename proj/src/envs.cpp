#include "sop/envs.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sop/rng.hpp"

namespace sop::envs {

std::string EnvSpec::describe() const {
  std::ostringstream os;
  os << "env=" << name << " state_dim=" << state_dim << " action_dim=" << action_dim
     << " horizon=" << horizon << " low=" << bounds.low.transpose()
     << " high=" << bounds.high.transpose() << " scale=" << bounds.scale.transpose()
     << " reward=\"" << reward_description << "\"";
  return os.str();
}

void Environment::begin_step(const Vector& action) {
  const auto& s = spec();
  if (action.size() != s.action_dim)
    throw std::invalid_argument(s.name + ": action has " + std::to_string(action.size()) +
                                " components, expected " + std::to_string(s.action_dim));
  if (done_) throw std::logic_error(s.name + ": step() called on a finished episode");
}

// ---------------------------------------------------------------------------

PointMass::PointMass(int dim, int horizon, double squash_scale) {
  if (dim < 1 || horizon < 1) throw std::invalid_argument("pointmass: bad dimension or horizon");
  spec_.name = "pointmass" + std::to_string(dim) + "d";
  spec_.state_dim = dim;
  spec_.action_dim = dim;
  spec_.bounds = shaping::ActionBounds::symmetric(dim, kStepLimit, squash_scale);
  spec_.horizon = horizon;
  spec_.reward_description = "-|clamp(x + clip(a, -0.1, 0.1), -1, 1)|^2";
  x_ = Vector::Zero(dim);
}

Vector PointMass::initial_position(int dim, std::uint64_t seed) {
  Vector x(dim);
  for (int k = 0; k < dim; ++k)
    x(k) = 2.0 * unit_from_seed(derive_seed(seed, static_cast<std::uint64_t>(k))) - 1.0;
  return x;
}

Vector PointMass::reset(std::uint64_t seed) {
  x_ = initial_position(spec_.state_dim, seed);
  steps_ = 0;
  done_ = false;
  return x_;
}

Vector PointMass::reset_to(const Vector& position) {
  if (position.size() != spec_.state_dim)
    throw std::invalid_argument(spec_.name + ": position dimension mismatch");
  x_ = position.cwiseMax(-1.0).cwiseMin(1.0);
  steps_ = 0;
  done_ = false;
  return x_;
}

StepResult PointMass::step(const Vector& action) {
  begin_step(action);
  const Vector a = shaping::clip_action(action, spec_.bounds);
  x_ = (x_ + a).cwiseMax(-1.0).cwiseMin(1.0);
  ++steps_;
  StepResult r;
  r.next_state = x_;
  r.reward = -x_.squaredNorm();
  r.truncated = steps_ >= spec_.horizon;
  done_ = r.truncated;
  return r;
}

std::unique_ptr<Environment> PointMass::clone() const { return std::make_unique<PointMass>(*this); }

// ---------------------------------------------------------------------------

BoundaryLure::BoundaryLure(int horizon) {
  if (horizon < 1) throw std::invalid_argument("boundarylure: horizon must be >= 1");
  spec_.name = "boundarylure";
  spec_.state_dim = 2;
  spec_.action_dim = 1;
  spec_.bounds = shaping::ActionBounds::symmetric(1, kScale);
  spec_.horizon = horizon;
  spec_.reward_description =
      "-(a - 0.3M)^2 + 0.05 * [|a| >= 0.9M] during the first 20% of steps, M = 0.2";
}

bool BoundaryLure::in_lure_window(int t) const {
  return t < static_cast<int>(std::ceil(kLureWindow * spec_.horizon));
}

double BoundaryLure::reward(double a, int t) const {
  const double target = kTargetFraction * kScale;
  double r = -(a - target) * (a - target);
  if (in_lure_window(t) && std::abs(a) >= kLureEdge) r += kLureBonus;
  return r;
}

Vector BoundaryLure::observe() const {
  Vector s(2);
  s << static_cast<double>(steps_) / spec_.horizon, in_lure_window(steps_) ? 1.0 : 0.0;
  return s;
}

Vector BoundaryLure::reset(std::uint64_t) {
  steps_ = 0;
  done_ = false;
  return observe();
}

StepResult BoundaryLure::step(const Vector& action) {
  begin_step(action);
  const double a = shaping::clip_action(action, spec_.bounds)(0);
  StepResult r;
  r.reward = reward(a, steps_);
  ++steps_;
  r.next_state = observe();
  r.terminal = steps_ >= spec_.horizon;
  done_ = r.terminal;
  return r;
}

std::unique_ptr<Environment> BoundaryLure::clone() const {
  return std::make_unique<BoundaryLure>(*this);
}

// ---------------------------------------------------------------------------

std::vector<std::string> env_names() { return {"pointmass1d", "pointmass2d", "boundarylure"}; }

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pointmass1d") return std::make_unique<PointMass>(1, 50);
  if (name == "pointmass2d") return std::make_unique<PointMass>(2, 100);
  if (name == "boundarylure") return std::make_unique<BoundaryLure>(50);
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

namespace {

double interpolate(const std::vector<double>& grid, const std::vector<double>& values, double x) {
  const double lo = grid.front(), hi = grid.back();
  const double h = (hi - lo) / static_cast<double>(grid.size() - 1);
  const double pos = std::clamp((x - lo) / h, 0.0, static_cast<double>(grid.size() - 1));
  auto i = static_cast<std::size_t>(pos);
  if (i >= grid.size() - 1) return values.back();
  const double w = pos - static_cast<double>(i);
  return (1.0 - w) * values[i] + w * values[i + 1];
}

std::vector<double> linspace(double lo, double hi, int intervals) {
  std::vector<double> g(static_cast<std::size_t>(intervals) + 1);
  for (int i = 0; i <= intervals; ++i) g[i] = lo + (hi - lo) * i / intervals;
  return g;
}

}  // namespace

DpSolution::DpSolution(std::vector<double> grid, std::vector<double> values, int axes)
    : grid_(std::move(grid)), values_(std::move(values)), axes_(axes) {
  if (axes_ == 0) {
    expected_ = values_.at(0);
    return;
  }
  // Trapezoid mean of the per-axis table, i.e. the exact integral of the
  // interpolant against the uniform reset density.
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < values_.size(); ++i) s += 0.5 * (values_[i] + values_[i + 1]);
  expected_ = axes_ * s / static_cast<double>(values_.size() - 1);
}

double DpSolution::value_at(const Vector& state) const {
  if (axes_ == 0) return values_[0];
  if (state.size() != axes_) throw std::invalid_argument("dp: state dimension mismatch");
  double v = 0.0;
  for (int k = 0; k < axes_; ++k) v += interpolate(grid_, values_, state(k));
  return v;
}

double DpSolution::expected_value() const { return expected_; }

double DpReport::relative_change() const {
  const double f = fine.expected_value(), c = coarse.expected_value();
  if (f == 0.0 && c == 0.0) return 0.0;
  return std::abs(f - c) / std::max(std::abs(f), std::abs(c));
}

DpSolution dp_solve(const EnvSpec& spec, int state_resolution, int action_resolution) {
  if (state_resolution < 32 || action_resolution < 32)
    throw std::invalid_argument("dp_oracle: resolutions must be >= 32");

  const double a_lo = spec.bounds.low(0), a_hi = spec.bounds.high(0);
  auto actions = linspace(a_lo, a_hi, action_resolution);

  if (spec.name == "boundarylure") {
    // The grid plus the reward's kinks, so the lure edge is reachable exactly.
    actions.push_back(BoundaryLure::kLureEdge);
    actions.push_back(-BoundaryLure::kLureEdge);
    BoundaryLure env(spec.horizon);
    double total = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
      double best = -1e300;
      for (double a : actions) best = std::max(best, env.reward(a, t));
      total += best;
    }
    return DpSolution({}, {total}, 0);
  }

  if (spec.name.rfind("pointmass", 0) != 0)
    throw std::invalid_argument("dp_oracle: no oracle for '" + spec.name + "'");

  // Reward and dynamics separate per axis, so one 1-D table serves every axis.
  const auto grid = linspace(-1.0, 1.0, state_resolution);
  std::vector<double> next(grid.size(), 0.0), cur(grid.size());
  for (int h = spec.horizon - 1; h >= 0; --h) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double best = -1e300;
      for (double a : actions) {
        const double x = std::clamp(grid[i] + a, -1.0, 1.0);
        best = std::max(best, -x * x + interpolate(grid, next, x));
      }
      cur[i] = best;
    }
    std::swap(cur, next);
  }
  return DpSolution(grid, next, spec.state_dim);
}

DpReport dp_oracle(const EnvSpec& spec, int state_resolution, int action_resolution) {
  return {dp_solve(spec, state_resolution, action_resolution),
          dp_solve(spec, 2 * state_resolution, 2 * action_resolution), state_resolution,
          action_resolution};
}

}  // namespace sop::envs
