#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

namespace sop::shaping {

using Vector = Eigen::VectorXd;

/// Per-dimension action limits. `low`/`high` bound clipped (IG) actions;
/// `scale` is the tanh squashing magnitude M.
struct ActionBounds {
  Vector low;
  Vector high;
  Vector scale;

  int dim() const { return static_cast<int>(scale.size()); }
  /// Throws std::invalid_argument unless low < high and scale > 0 everywhere.
  void validate() const;

  static ActionBounds symmetric(int dim, double limit);
  /// Clip box of +-limit with a separate tanh scale.
  static ActionBounds symmetric(int dim, double limit, double squash_scale);
};

struct NoiseConfig {
  double explore_std = 0.29;  // sigma_1, action selection
  double target_std = 0.29;   // sigma_2, target smoothing
};

/// Mean absolute component, G = sum_k |mu_k| / K.
double output_magnitude(const Vector& mu);

/// Divides mu by G when G > 1, otherwise returns it unchanged.
Vector normalize_output(const Vector& mu);

/// Vector-Jacobian product of normalize_output at `mu`. The subgradient of
/// |x| at 0 is taken as 0.
Vector normalize_output_vjp(const Vector& mu, const Vector& grad_out);

/// M * tanh(mu + noise). Pass a zero noise vector for evaluation.
Vector squash(const Vector& mu, const Vector& noise, const ActionBounds& bounds);

/// Vector-Jacobian product of u -> M * tanh(u).
Vector squash_vjp(const Vector& pre_squash, const Vector& grad_out, const ActionBounds& bounds);

/// Inverting-gradients transform. `grad_p` is the ascent gradient of the
/// policy objective at the raw output `p`; a positive component means the
/// objective wants p to grow. Components are scaled by
/// (high - p) / (high - low) when growing and (p - low) / (high - low)
/// otherwise. Inside the box both factors lie in [0, 1]; outside it the
/// factor turns negative and the gradient points back into the box.
Vector invert_gradients(const Vector& grad_p, const Vector& p, const ActionBounds& bounds);

Vector clip_action(const Vector& a, const ActionBounds& bounds);

/// Fraction of components with |a_k| >= near * M_k. Throws
/// std::invalid_argument on an empty batch or near outside (0, 1).
double saturation_fraction(std::span<const Vector> actions, const ActionBounds& bounds,
                           double near = 0.99);

/// Differential entropy of N(0, sigma^2 I) in `dim` dimensions.
double gaussian_entropy(int dim, double sigma);

/// Monte-Carlo estimate of the differential entropy of a = M tanh(u),
/// u ~ N(mu, sigma^2 I), using H(a) = H(u) + E[sum_k log(M_k (1 - tanh^2 u_k))].
double squashed_policy_entropy(const Vector& mu, double sigma, const ActionBounds& bounds,
                               int n_samples, std::uint64_t seed);

/// log(1 - tanh(u)^2), stable for large |u|.
double log_sech2(double u);

}  // namespace sop::shaping
