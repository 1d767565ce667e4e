#include "sop/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace sop::nn {

namespace {

std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

void check_input_rows(const MlpParams& params, Eigen::Index rows, const char* what) {
  if (params.layers.empty()) throw std::invalid_argument("mlp has no layers");
  if (rows != params.layers.front().weight.cols()) {
    std::ostringstream os;
    os << what << ": expected input size " << params.layers.front().weight.cols()
       << ", got " << rows;
    throw std::invalid_argument(os.str());
  }
}

template <typename F>
void for_each_tensor(MlpParams& p, F&& f) {
  for (auto& layer : p.layers) {
    f(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    f(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

template <typename F>
void for_each_tensor(const MlpParams& p, F&& f) {
  for (const auto& layer : p.layers) {
    f(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    f(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

}  // namespace

int MlpParams::input_size() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

int MlpParams::output_size() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

std::vector<int> MlpParams::layer_sizes() const {
  std::vector<int> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& l : layers) sizes.push_back(static_cast<int>(l.weight.rows()));
  return sizes;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor(*this, [&](const double*, std::size_t len) { n += len; });
  return n;
}

bool MlpParams::all_finite() const {
  bool ok = true;
  for_each_tensor(*this, [&](const double* d, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) ok = ok && std::isfinite(d[i]);
  });
  return ok;
}

std::vector<std::string> MlpParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    names.push_back("layers." + std::to_string(i) + ".weight");
    names.push_back("layers." + std::to_string(i) + ".bias");
  }
  return names;
}

MlpParams make_mlp(std::span<const int> sizes, std::mt19937_64& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    if (fan_in <= 0 || fan_out <= 0) throw std::invalid_argument("layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer{Matrix(fan_out, fan_in), Vector(fan_out)};
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers)
    z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                        Vector::Zero(l.bias.size())});
  return z;
}

bool same_shape(const MlpParams& a, const MlpParams& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weight.rows() != b.layers[i].weight.rows() ||
        a.layers[i].weight.cols() != b.layers[i].weight.cols() ||
        a.layers[i].bias.size() != b.layers[i].bias.size())
      return false;
  }
  return true;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for_each_tensor(params, [&](const double* d, std::size_t len) { out.insert(out.end(), d, d + len); });
  return out;
}

void unflatten(std::span<const double> values, MlpParams& params) {
  if (values.size() != params.parameter_count())
    throw std::invalid_argument("unflatten: size mismatch");
  std::size_t offset = 0;
  for_each_tensor(params, [&](double* d, std::size_t len) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), len, d);
    offset += len;
  });
}

Matrix forward_batch(const MlpParams& params, const Matrix& inputs, ForwardCache* cache) {
  check_input_rows(params, inputs.rows(), "mlp forward");
  if (cache) {
    cache->activations.clear();
    cache->preactivations.clear();
    cache->activations.push_back(inputs);
  }
  Matrix x = inputs;
  const std::size_t n = params.layers.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = params.layers[i];
    Matrix z = l.weight * x;
    z.colwise() += l.bias;
    if (i + 1 < n) {
      x = z.cwiseMax(0.0);
    } else {
      x = z;
    }
    if (cache) {
      cache->preactivations.push_back(std::move(z));
      if (i + 1 < n) cache->activations.push_back(x);
    }
  }
  return x;
}

Vector mlp_forward(const MlpParams& params, const Vector& input) {
  return forward_batch(params, input).col(0);
}

BatchGradients backward_batch(const MlpParams& params, const ForwardCache& cache,
                              const Matrix& output_grad) {
  const std::size_t n = params.layers.size();
  if (cache.preactivations.size() != n || cache.activations.size() != n)
    throw std::invalid_argument("mlp backward: cache does not match network");
  const auto& last = cache.preactivations.back();
  if (output_grad.rows() != last.rows() || output_grad.cols() != last.cols())
    throw std::invalid_argument("mlp backward: output gradient is " +
                                shape_str(output_grad.rows(), output_grad.cols()) +
                                ", expected " + shape_str(last.rows(), last.cols()));

  BatchGradients out{zeros_like(params), Matrix()};
  Matrix delta = output_grad;
  for (std::size_t idx = n; idx-- > 0;) {
    const auto& l = params.layers[idx];
    out.params.layers[idx].weight.noalias() = delta * cache.activations[idx].transpose();
    out.params.layers[idx].bias = delta.rowwise().sum();
    Matrix upstream = l.weight.transpose() * delta;
    if (idx > 0) {
      const auto& z = cache.preactivations[idx - 1];
      delta = (z.array() > 0.0).select(upstream, 0.0);
    } else {
      out.input = std::move(upstream);
    }
  }
  return out;
}

Gradients mlp_backward(const MlpParams& params, const Vector& input, const Vector& output_grad) {
  check_input_rows(params, input.size(), "mlp backward");
  if (output_grad.size() != params.output_size())
    throw std::invalid_argument("mlp backward: output gradient length " +
                                std::to_string(output_grad.size()) + ", expected " +
                                std::to_string(params.output_size()));
  ForwardCache cache;
  forward_batch(params, input, &cache);
  auto g = backward_batch(params, cache, output_grad);
  return {std::move(g.params), g.input.col(0)};
}

AdamState AdamState::for_params(const MlpParams& params, AdamConfig config) {
  return {zeros_like(params), zeros_like(params), 0, config};
}

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads, double lr) {
  if (!same_shape(params, grads) || !same_shape(params, state.first_moment))
    throw std::invalid_argument("adam_step: gradient/state shape does not match parameters");
  const auto names = grads.tensor_names();
  std::size_t t = 0;
  for_each_tensor(grads, [&](const double* d, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i)
      if (!std::isfinite(d[i]))
        throw std::domain_error("adam_step: non-finite gradient in " + names[t]);
    ++t;
  });

  const auto& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, grads.layers[i].weight, state.first_moment.layers[i].weight,
           state.second_moment.layers[i].weight);
    update(params.layers[i].bias, grads.layers[i].bias, state.first_moment.layers[i].bias,
           state.second_moment.layers[i].bias);
  }
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / scale;
}

double compare_with_finite_diff(const MlpParams& params, const Vector& input,
                                const Vector& output_grad, const MlpGrads& analytic,
                                double probe_step) {
  if (!(probe_step > 0.0)) throw std::invalid_argument("probe_step must be positive");
  if (!same_shape(params, analytic))
    throw std::invalid_argument("finite diff: gradient shape does not match parameters");

  const double kink_margin = 10.0 * probe_step;
  auto evaluate = [&](const MlpParams& p, ForwardCache& cache) {
    return forward_batch(p, input, &cache).col(0).dot(output_grad);
  };

  ForwardCache base_cache;
  evaluate(params, base_cache);

  // A probe is unsafe if any hidden pre-activation it moves is near a kink
  // or flips sign.
  auto crosses_kink = [&](const ForwardCache& probe) {
    for (std::size_t l = 0; l + 1 < base_cache.preactivations.size(); ++l) {
      const auto& z0 = base_cache.preactivations[l];
      const auto& z1 = probe.preactivations[l];
      for (Eigen::Index i = 0; i < z0.size(); ++i) {
        if (z0(i) == z1(i)) continue;
        if ((z0(i) > 0.0) != (z1(i) > 0.0)) return true;
        if (std::abs(z0(i)) < kink_margin) return true;
      }
    }
    return false;
  };

  std::vector<double> theta = flatten(params);
  const std::vector<double> grad = flatten(analytic);
  MlpParams probe = params;
  ForwardCache plus_cache, minus_cache;
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + probe_step;
    unflatten(theta, probe);
    const double f_plus = evaluate(probe, plus_cache);
    theta[i] = saved - probe_step;
    unflatten(theta, probe);
    const double f_minus = evaluate(probe, minus_cache);
    theta[i] = saved;
    if (crosses_kink(plus_cache) || crosses_kink(minus_cache)) continue;
    const double numeric = (f_plus - f_minus) / (2.0 * probe_step);
    worst = std::max(worst, relative_error(grad[i], numeric));
  }
  return worst;
}

double finite_diff_check(const MlpParams& params, const Vector& input, double probe_step) {
  const Vector ones = Vector::Ones(params.output_size());
  const auto g = mlp_backward(params, input, ones);
  return compare_with_finite_diff(params, input, ones, g.params, probe_step);
}

void write_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  os << name << ' ' << m.rows() << ' ' << m.cols() << '\n' << std::hexfloat;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? " " : "") << m(r, c);
    os << '\n';
  }
  os << std::defaultfloat;
}

void write_tensor(std::ostream& os, const std::string& name, const Vector& v) {
  write_tensor(os, name, Matrix(v));
}

std::pair<std::string, Matrix> read_tensor(std::istream& is) {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> name >> rows >> cols) || rows < 0 || cols < 0)
    throw std::runtime_error("checkpoint: malformed tensor header");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      // operator>> does not parse hex floats portably.
      std::string token;
      if (!(is >> token)) throw std::runtime_error("checkpoint: truncated tensor " + name);
      char* end = nullptr;
      m(r, c) = std::strtod(token.c_str(), &end);
      if (end == token.c_str() || *end != '\0')
        throw std::runtime_error("checkpoint: bad value '" + token + "' in " + name);
    }
  }
  return {name, std::move(m)};
}

void save_params(std::ostream& os, const std::string& prefix, const MlpParams& params) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const std::string base = prefix + ".layers." + std::to_string(i);
    write_tensor(os, base + ".weight", params.layers[i].weight);
    write_tensor(os, base + ".bias", params.layers[i].bias);
  }
}

void load_params(std::istream& is, const std::string& prefix, MlpParams& params) {
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const std::string base = prefix + ".layers." + std::to_string(i);
    auto [wname, w] = read_tensor(is);
    auto [bname, b] = read_tensor(is);
    auto& layer = params.layers[i];
    if (wname != base + ".weight" || bname != base + ".bias")
      throw std::runtime_error("checkpoint: expected " + base + ", found " + wname);
    if (w.rows() != layer.weight.rows() || w.cols() != layer.weight.cols() ||
        b.size() != layer.bias.size())
      throw std::runtime_error("checkpoint: shape mismatch for " + base);
    layer.weight = std::move(w);
    layer.bias = b.col(0);
  }
}

}  // namespace sop::nn
