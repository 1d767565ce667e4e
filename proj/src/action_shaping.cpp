#include "sop/action_shaping.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace sop::shaping {

namespace {

void require_dim(const Vector& v, const ActionBounds& b, const char* what) {
  if (v.size() != b.dim())
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(b.dim()) +
                                " components, got " + std::to_string(v.size()));
}

}  // namespace

void ActionBounds::validate() const {
  if (low.size() != high.size() || low.size() != scale.size() || scale.size() == 0)
    throw std::invalid_argument("action bounds: inconsistent dimensions");
  for (Eigen::Index k = 0; k < scale.size(); ++k) {
    if (!(low(k) < high(k))) throw std::invalid_argument("action bounds: low must be < high");
    if (!(scale(k) > 0.0) || !std::isfinite(scale(k)))
      throw std::invalid_argument("action bounds: scale must be positive and finite");
  }
}

ActionBounds ActionBounds::symmetric(int dim, double limit) {
  return symmetric(dim, limit, limit);
}

ActionBounds ActionBounds::symmetric(int dim, double limit, double squash_scale) {
  ActionBounds b{Vector::Constant(dim, -limit), Vector::Constant(dim, limit),
                 Vector::Constant(dim, squash_scale)};
  b.validate();
  return b;
}

double output_magnitude(const Vector& mu) {
  if (mu.size() == 0) throw std::invalid_argument("normalize_output: empty vector");
  return mu.cwiseAbs().sum() / static_cast<double>(mu.size());
}

Vector normalize_output(const Vector& mu) {
  const double g = output_magnitude(mu);
  if (!(g > 1.0)) return mu;
  Vector y = mu / g;
  // Rounding can leave the mean one ulp above 1; shrink until it is not.
  for (double m = output_magnitude(y); m > 1.0; m = output_magnitude(y))
    y /= std::nextafter(m, 2.0);
  return y;
}

Vector normalize_output_vjp(const Vector& mu, const Vector& grad_out) {
  const double g = output_magnitude(mu);
  if (!(g > 1.0)) return grad_out;
  // y_i = mu_i / G,  dG/dmu_j = sign(mu_j) / K
  const double k = static_cast<double>(mu.size());
  const double coupling = grad_out.dot(mu) / (k * g * g);
  Vector sign = mu.unaryExpr([](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
  return grad_out / g - coupling * sign;
}

Vector squash(const Vector& mu, const Vector& noise, const ActionBounds& bounds) {
  require_dim(mu, bounds, "squash");
  require_dim(noise, bounds, "squash noise");
  return bounds.scale.cwiseProduct((mu + noise).array().tanh().matrix());
}

Vector squash_vjp(const Vector& pre_squash, const Vector& grad_out, const ActionBounds& bounds) {
  const Eigen::ArrayXd t = pre_squash.array().tanh();
  return (grad_out.array() * bounds.scale.array() * (1.0 - t * t)).matrix();
}

Vector invert_gradients(const Vector& grad_p, const Vector& p, const ActionBounds& bounds) {
  require_dim(grad_p, bounds, "invert_gradients");
  require_dim(p, bounds, "invert_gradients");
  Vector out(grad_p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double width = bounds.high(k) - bounds.low(k);
    const double factor =
        grad_p(k) > 0.0 ? (bounds.high(k) - p(k)) / width : (p(k) - bounds.low(k)) / width;
    out(k) = grad_p(k) * factor;
  }
  return out;
}

Vector clip_action(const Vector& a, const ActionBounds& bounds) {
  require_dim(a, bounds, "clip_action");
  return a.cwiseMax(bounds.low).cwiseMin(bounds.high);
}

double saturation_fraction(std::span<const Vector> actions, const ActionBounds& bounds,
                           double near) {
  if (actions.empty()) throw std::invalid_argument("saturation_fraction: empty batch");
  if (!(near > 0.0 && near < 1.0))
    throw std::invalid_argument("saturation_fraction: near must be in (0, 1)");
  std::size_t hits = 0, total = 0;
  for (const auto& a : actions) {
    require_dim(a, bounds, "saturation_fraction");
    for (Eigen::Index k = 0; k < a.size(); ++k) {
      hits += std::abs(a(k)) >= near * bounds.scale(k);
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double gaussian_entropy(int dim, double sigma) {
  return 0.5 * dim * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma * sigma);
}

double log_sech2(double u) {
  const double x = std::abs(u);
  return 2.0 * (std::numbers::ln2 - x - std::log1p(std::exp(-2.0 * x)));
}

double squashed_policy_entropy(const Vector& mu, double sigma, const ActionBounds& bounds,
                               int n_samples, std::uint64_t seed) {
  require_dim(mu, bounds, "squashed_policy_entropy");
  if (!(sigma > 0.0)) throw std::invalid_argument("squashed_policy_entropy: sigma must be > 0");
  if (n_samples < 1) throw std::invalid_argument("squashed_policy_entropy: n_samples must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, sigma);
  double log_scale = 0.0;
  for (Eigen::Index k = 0; k < mu.size(); ++k) log_scale += std::log(bounds.scale(k));
  double correction = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < mu.size(); ++k) s += log_sech2(mu(k) + eps(rng));
    correction += s;
  }
  return gaussian_entropy(bounds.dim(), sigma) + log_scale + correction / n_samples;
}

}  // namespace sop::shaping
