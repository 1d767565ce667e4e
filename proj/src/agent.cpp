#include "sop/agent.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sop::agent {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// IG acts in action units, so its Gaussian noise is scaled by the half-width
// of the clip box (sigma = 0.29 on a [-1, 1] box, as for the tanh variants).
Vector half_width(const ActionBounds& bounds) { return 0.5 * (bounds.high - bounds.low); }

Vector gaussian(int dim, double sigma, Rng& rng) {
  Vector v(dim);
  if (sigma == 0.0) return v.setZero();
  std::normal_distribution<double> n(0.0, sigma);
  for (int k = 0; k < dim; ++k) v(k) = n(rng);
  return v;
}

Matrix stack(const Matrix& top, const Matrix& bottom) {
  Matrix x(top.rows() + bottom.rows(), top.cols());
  x << top, bottom;
  return x;
}

void scale_in_place(nn::MlpParams& p, double c) {
  for (auto& l : p.layers) {
    l.weight *= c;
    l.bias *= c;
  }
}

// Box used for the saturation diagnostic: the tanh scale for squashing
// variants, the clip box for IG.
ActionBounds saturation_bounds(const AgentConfig& cfg, const ActionBounds& bounds) {
  if (cfg.uses_tanh()) return bounds;
  ActionBounds b = bounds;
  b.scale = bounds.high.cwiseAbs().cwiseMax(bounds.low.cwiseAbs());
  return b;
}

}  // namespace

std::string_view to_string(Sampler s) {
  switch (s) {
    case Sampler::uniform: return "uniform";
    case Sampler::ere: return "ere";
    case Sampler::per: return "per";
    case Sampler::exp: return "exp";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::sop: return "sop";
    case Variant::sop_ig: return "sop_ig";
    case Variant::no_norm: return "no_norm";
    case Variant::single_q: return "single_q";
    case Variant::no_smoothing: return "no_smoothing";
  }
  return "?";
}

Sampler parse_sampler(std::string_view name) {
  for (auto s : {Sampler::uniform, Sampler::ere, Sampler::per, Sampler::exp})
    if (name == to_string(s)) return s;
  throw std::invalid_argument("unknown sampler '" + std::string(name) + "'");
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::sop, Variant::sop_ig, Variant::no_norm, Variant::single_q,
                 Variant::no_smoothing})
    if (name == to_string(v)) return v;
  throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

void AgentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument(key + ": " + why);
  };
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma", "must satisfy 0 < gamma < 1");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must satisfy 0 < tau <= 1");
  if (!(explore_std >= 0.0)) fail("explore_std", "must be >= 0");
  if (!(target_std >= 0.0)) fail("target_std", "must be >= 0");
  if (batch < 1) fail("batch", "must be >= 1");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (hidden < 1) fail("hidden", "must be >= 1");
  if (capacity < 1) fail("capacity", "must be >= 1");
  if (warmup_steps < 0) fail("warmup_steps", "must be >= 0");
  if (!(eta0 > 0.0 && eta0 <= 1.0)) fail("eta0", "must be in (0, 1]");
  if (!(per.beta1 >= 0.0)) fail("beta1", "must be >= 0");
  if (!(per.beta2 >= 0.0)) fail("beta2", "must be >= 0");
  if (!(per.epsilon > 0.0)) fail("per_epsilon", "must be > 0");
  if (!(exp_lambda > 0.0)) fail("exp_lambda", "must be > 0");
  if (exp_segment < 1) fail("exp_segment", "must be >= 1");
  if (eval_interval < 1) fail("eval_interval", "must be >= 1");
  if (eval_rollouts < 1) fail("eval_rollouts", "must be >= 1");
  if (entropy_samples < 1) fail("entropy_samples", "must be >= 1");
}

bool AgentConfig::uses_normalization() const {
  return variant != Variant::no_norm && variant != Variant::sop_ig;
}

AgentState init_agent(int state_dim, int action_dim, const AgentConfig& cfg, Rng& rng) {
  const int h = cfg.hidden;
  const std::vector<int> pol{state_dim, h, h, action_dim};
  const std::vector<int> q{state_dim + action_dim, h, h, 1};
  AgentState st;
  st.policy = nn::make_mlp(pol, rng);
  st.q1 = nn::make_mlp(q, rng);
  st.q2 = nn::make_mlp(q, rng);
  st.q1_target = st.q1;
  st.q2_target = st.q2;
  st.policy_opt = nn::AdamState::for_params(st.policy);
  st.q1_opt = nn::AdamState::for_params(st.q1);
  st.q2_opt = nn::AdamState::for_params(st.q2);
  return st;
}

ActDetail act_detail(const AgentState& state, const AgentConfig& cfg, const ActionBounds& bounds,
                     const Vector& s, Mode mode, Rng& rng) {
  ActDetail d;
  d.mu = nn::mlp_forward(state.policy, s);
  const int k = static_cast<int>(d.mu.size());
  const double sigma = mode == Mode::explore ? cfg.explore_std : 0.0;
  if (cfg.uses_tanh()) {
    d.pre = cfg.uses_normalization() ? shaping::normalize_output(d.mu) : d.mu;
    d.action = shaping::squash(d.pre, gaussian(k, sigma, rng), bounds);
  } else {
    d.pre = d.mu;
    const Vector eps = gaussian(k, sigma, rng).cwiseProduct(half_width(bounds));
    d.action = shaping::clip_action(d.mu + eps, bounds);
  }
  return d;
}

Vector act(const AgentState& state, const AgentConfig& cfg, const ActionBounds& bounds,
           const Vector& s, Mode mode, Rng& rng) {
  return act_detail(state, cfg, bounds, s, mode, rng).action;
}

BatchData gather(const replay::ReplayBuffer& buffer, const replay::Batch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.slots.size());
  BatchData b;
  b.states.resize(buffer.state_dim(), n);
  b.next_states.resize(buffer.state_dim(), n);
  b.actions.resize(buffer.action_dim(), n);
  b.rewards.resize(n);
  b.terminal.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = buffer.at_slot(batch.slots[static_cast<std::size_t>(j)]);
    b.states.col(j) = t.state;
    b.next_states.col(j) = t.next_state;
    b.actions.col(j) = t.action;
    b.rewards(j) = t.reward;
    b.terminal(j) = t.terminal ? 1.0 : 0.0;
  }
  if (!batch.weights.empty())
    b.weights = Eigen::Map<const Vector>(batch.weights.data(), n);
  return b;
}

Matrix target_actions(const AgentState& state, const AgentConfig& cfg,
                      const ActionBounds& bounds, const Matrix& next_states, Rng& rng) {
  Matrix p = nn::forward_batch(state.policy, next_states);
  const int k = static_cast<int>(p.rows());
  const double sigma = cfg.variant == Variant::no_smoothing ? 0.0 : cfg.target_std;
  const bool norm = cfg.uses_normalization() && cfg.normalize_in_target;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const Vector mu = p.col(j);
    if (cfg.uses_tanh()) {
      const Vector pre = norm ? shaping::normalize_output(mu) : mu;
      p.col(j) = shaping::squash(pre, gaussian(k, sigma, rng), bounds);
    } else {
      const Vector eps = gaussian(k, sigma, rng).cwiseProduct(half_width(bounds));
      p.col(j) = shaping::clip_action(mu + eps, bounds);
    }
  }
  return p;
}

Vector compute_q_targets(const BatchData& batch, const AgentState& state, const AgentConfig& cfg,
                         const ActionBounds& bounds, Rng& rng) {
  if (batch.size() == 0) throw std::invalid_argument("compute_q_targets: empty batch");
  const Matrix a2 = target_actions(state, cfg, bounds, batch.next_states, rng);
  const Matrix x = stack(batch.next_states, a2);
  Vector q = nn::forward_batch(state.q1_target, x).row(0).transpose();
  if (cfg.variant != Variant::single_q) {
    const Vector q2 = nn::forward_batch(state.q2_target, x).row(0).transpose();
    q = q.cwiseMin(q2);
  }
  return batch.rewards + cfg.gamma * (1.0 - batch.terminal.array()).matrix().cwiseProduct(q);
}

QUpdateResult q_update(const BatchData& batch, const Vector& y, AgentState& state,
                       const AgentConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) throw std::invalid_argument("q_update: empty batch");
  const Matrix x = stack(batch.states, batch.actions);
  const Vector w = batch.weights.size() == 0 ? Vector::Ones(n) : batch.weights;

  const bool twin = cfg.variant != Variant::single_q;
  nn::MlpParams* nets[2] = {&state.q1, &state.q2};
  nn::AdamState* opts[2] = {&state.q1_opt, &state.q2_opt};
  const int count = twin ? 2 : 1;

  nn::ForwardCache caches[2];
  Vector diffs[2];
  double losses[2] = {0.0, 0.0};
  for (int i = 0; i < count; ++i) {
    diffs[i] = nn::forward_batch(*nets[i], x, &caches[i]).row(0).transpose() - y;
    losses[i] = w.dot(diffs[i].cwiseAbs2()) / static_cast<double>(n);
    if (!std::isfinite(losses[i]))
      throw std::domain_error("q_update: non-finite loss for q" + std::to_string(i + 1));
  }

  QUpdateResult out;
  out.abs_td.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < count; ++i) {
    const Matrix g = (2.0 / static_cast<double>(n)) * w.cwiseProduct(diffs[i]).transpose();
    const auto grads = nn::backward_batch(*nets[i], caches[i], g);
    nn::adam_step(*opts[i], *nets[i], grads.params, cfg.lr);
    out.loss += losses[i] / count;
    for (Eigen::Index j = 0; j < n; ++j)
      out.abs_td[static_cast<std::size_t>(j)] += std::abs(diffs[i](j)) / count;
  }
  return out;
}

Critic network_critic(const nn::MlpParams& q) {
  return [&q](const Matrix& states, const Matrix& actions) {
    const Matrix x = stack(states, actions);
    nn::ForwardCache cache;
    const Vector values = nn::forward_batch(q, x, &cache).row(0).transpose();
    const auto g = nn::backward_batch(q, cache, Matrix::Ones(1, x.cols()));
    return std::make_pair(values, Matrix(g.input.bottomRows(actions.rows())));
  };
}

namespace {

struct ActionChain {
  Matrix raw;
  Matrix pre;
  Matrix actions;
};

ActionChain policy_actions(const Matrix& raw, const AgentConfig& cfg, const ActionBounds& bounds) {
  ActionChain c{raw, raw, raw};
  if (!cfg.uses_tanh()) return c;  // the critic sees the raw IG output
  const Vector zero = Vector::Zero(raw.rows());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const Vector mu = raw.col(j);
    const Vector pre = cfg.uses_normalization() ? shaping::normalize_output(mu) : mu;
    c.pre.col(j) = pre;
    c.actions.col(j) = shaping::squash(pre, zero, bounds);
  }
  return c;
}

}  // namespace

PolicyGradient policy_gradient(const nn::MlpParams& policy, const Matrix& states,
                               const AgentConfig& cfg, const ActionBounds& bounds,
                               const Critic& critic) {
  const auto n = states.cols();
  if (n == 0) throw std::invalid_argument("policy_gradient: empty batch");
  nn::ForwardCache cache;
  const auto chain = policy_actions(nn::forward_batch(policy, states, &cache), cfg, bounds);
  const auto [values, dq_da] = critic(states, chain.actions);

  PolicyGradient pg;
  pg.objective = values.mean();
  const Matrix g_a = dq_da / static_cast<double>(n);
  pg.output_grad.resize(g_a.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (cfg.uses_tanh()) {
      const Vector g_pre = shaping::squash_vjp(chain.pre.col(j), g_a.col(j), bounds);
      pg.output_grad.col(j) = cfg.uses_normalization()
                                  ? shaping::normalize_output_vjp(chain.raw.col(j), g_pre)
                                  : g_pre;
    } else {
      pg.output_grad.col(j) = shaping::invert_gradients(g_a.col(j), chain.raw.col(j), bounds);
    }
  }
  pg.grads = nn::backward_batch(policy, cache, pg.output_grad).params;
  return pg;
}

double policy_objective(const nn::MlpParams& policy, const Matrix& states, const AgentConfig& cfg,
                        const ActionBounds& bounds, const Critic& critic) {
  const auto chain = policy_actions(nn::forward_batch(policy, states), cfg, bounds);
  return critic(states, chain.actions).first.mean();
}

double policy_update(const BatchData& batch, AgentState& state, const AgentConfig& cfg,
                     const ActionBounds& bounds) {
  auto pg = policy_gradient(state.policy, batch.states, cfg, bounds, network_critic(state.q1));
  if (!std::isfinite(pg.objective))
    throw std::domain_error("policy_update: non-finite objective");
  scale_in_place(pg.grads, -1.0);  // Adam descends
  nn::adam_step(state.policy_opt, state.policy, pg.grads, cfg.lr);
  return pg.objective;
}

void soft_update(nn::MlpParams& target, const nn::MlpParams& online, double tau, bool literal) {
  if (!nn::same_shape(target, online)) throw std::invalid_argument("soft_update: shape mismatch");
  const double keep = literal ? tau : 1.0 - tau;
  const double take = literal ? 1.0 - tau : tau;
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& o = online.layers[i];
    t.weight = keep * t.weight + take * o.weight;
    t.bias = keep * t.bias + take * o.bias;
  }
}

void soft_update_targets(AgentState& state, const AgentConfig& cfg) {
  soft_update(state.q1_target, state.q1, cfg.tau, cfg.literal_polyak);
  if (cfg.variant != Variant::single_q)
    soft_update(state.q2_target, state.q2, cfg.tau, cfg.literal_polyak);
}

UpdateResult update_step(const BatchData& batch, AgentState& state, const AgentConfig& cfg,
                         const ActionBounds& bounds, Rng& rng) {
  const Vector y = compute_q_targets(batch, state, cfg, bounds, rng);
  auto q = q_update(batch, y, state, cfg);
  UpdateResult r;
  r.q_loss = q.loss;
  r.abs_td = std::move(q.abs_td);
  r.policy_objective = policy_update(batch, state, cfg, bounds);
  soft_update_targets(state, cfg);
  ++state.updates;
  return r;
}

double run_episode(const AgentState& state, const AgentConfig& cfg, envs::Environment& env,
                   const Vector& initial_state) {
  Rng unused(0);
  const auto& bounds = env.spec().bounds;
  Vector s = initial_state;
  double total = 0.0;
  while (true) {
    const auto r = env.step(act(state, cfg, bounds, s, Mode::evaluate, unused));
    total += r.reward;
    if (r.done()) return total;
    s = r.next_state;
  }
}

EvalResult evaluate(const AgentState& state, const AgentConfig& cfg,
                    const envs::Environment& env, int rollouts, std::uint64_t seed) {
  if (rollouts < 1) throw std::invalid_argument("evaluate: rollouts must be >= 1");
  EvalResult out;
  for (int i = 0; i < rollouts; ++i) {
    auto e = env.clone();
    const Vector s0 = e->reset(derive_seed(seed, static_cast<std::uint64_t>(i)));
    out.returns.push_back(run_episode(state, cfg, *e, s0));
  }
  double sum = 0.0;
  for (double r : out.returns) sum += r;
  out.mean = sum / rollouts;
  double ss = 0.0;
  for (double r : out.returns) ss += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(ss / rollouts);
  return out;
}

namespace {

// Policy statistics accumulated between evaluation points.
struct Window {
  std::vector<Vector> actions;
  double abs_mu_pre = 0.0;
  double abs_mu_post = 0.0;
  double max_post = 0.0;
  std::size_t components = 0;

  void add(const ActDetail& d) {
    actions.push_back(d.action);
    abs_mu_pre += d.mu.cwiseAbs().sum();
    abs_mu_post += d.pre.cwiseAbs().sum();
    max_post = std::max(max_post, shaping::output_magnitude(d.pre));
    components += static_cast<std::size_t>(d.mu.size());
  }
};

}  // namespace

TrainResult train(const envs::Environment& env, const AgentConfig& cfg, std::int64_t total_steps,
                  std::uint64_t seed, const TrainHooks* hooks) {
  cfg.validate();
  const auto& spec = env.spec();
  const auto& bounds = spec.bounds;
  bounds.validate();

  Rng agent_rng(derive_seed(seed, kAgentStream));
  Rng sampler_rng(derive_seed(seed, kSamplerStream));
  const std::uint64_t env_seed = derive_seed(seed, kEnvStream);
  const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);

  TrainResult res;
  res.state = init_agent(spec.state_dim, spec.action_dim, cfg, agent_rng);
  if (total_steps <= 0) return res;
  AgentState& st = res.state;

  replay::ReplayBuffer buffer(cfg.capacity, spec.state_dim, spec.action_dim);
  std::optional<replay::PrioritizedSampler> per;
  if (cfg.sampler == Sampler::per) per.emplace(cfg.capacity, cfg.per);
  const auto ere_cfg = replay::EreConfig::for_capacity(cfg.capacity, cfg.batch, cfg.eta0);
  replay::PerfTracker tracker;
  double eta = cfg.eta0;

  const auto sat_bounds = saturation_bounds(cfg, bounds);
  const auto t0 = std::chrono::steady_clock::now();
  Window window;
  std::int64_t next_eval = cfg.eval_interval;

  auto record_point = [&]() {
    EvalPoint p;
    p.step = st.env_steps;
    const auto ev = evaluate(st, cfg, env, cfg.eval_rollouts, eval_seed);
    p.eval_return_mean = ev.mean;
    p.eval_return_std = ev.std;
    if (window.components > 0) {
      p.saturation_fraction = shaping::saturation_fraction(window.actions, sat_bounds);
      p.mean_abs_mu_pre_norm = window.abs_mu_pre / static_cast<double>(window.components);
      p.mean_abs_mu_post_norm = window.abs_mu_post / static_cast<double>(window.components);
      p.max_abs_mu_post_norm = window.max_post;
    } else {
      p.saturation_fraction = p.mean_abs_mu_pre_norm = p.mean_abs_mu_post_norm =
          p.max_abs_mu_post_norm = kNaN;
    }
    if (cfg.uses_tanh()) {
      // Average over a few recent states, each with its own derived stream.
      const std::size_t m = std::min<std::size_t>(8, buffer.size());
      double h = 0.0;
      Rng unused(0);
      for (std::size_t i = 0; i < m; ++i) {
        const auto d = act_detail(st, cfg, bounds, buffer.recent(i).state, Mode::evaluate, unused);
        h += shaping::squashed_policy_entropy(
            d.pre, cfg.explore_std, bounds, cfg.entropy_samples,
            derive_seed(eval_seed, static_cast<std::uint64_t>(p.step) * 8 + i));
      }
      p.entropy_estimate = m > 0 ? h / static_cast<double>(m) : kNaN;
    } else {
      p.entropy_estimate = kNaN;
    }
    p.eta_current = cfg.sampler == Sampler::ere ? eta : kNaN;
    p.wall_ms = cfg.record_wall_time
                    ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                          .count()
                    : 0.0;
    res.record.points.push_back(p);
    window = Window{};
  };

  auto train_env = env.clone();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  while (st.env_steps < total_steps) {
    Vector s = train_env->reset(derive_seed(env_seed, static_cast<std::uint64_t>(st.episodes)));
    double ep_return = 0.0;
    std::size_t ep_len = 0;
    while (true) {
      Vector a(spec.action_dim);
      if (st.env_steps < cfg.warmup_steps) {
        for (int k = 0; k < spec.action_dim; ++k)
          a(k) = bounds.low(k) + (bounds.high(k) - bounds.low(k)) * unit(agent_rng);
      } else {
        const auto d = act_detail(st, cfg, bounds, s, Mode::explore, agent_rng);
        window.add(d);
        a = d.action;
      }
      auto r = train_env->step(a);
      const std::size_t slot =
          buffer.push({s, a, r.reward, r.next_state, r.terminal});
      if (per) per->on_push(slot);
      ++st.env_steps;
      ++ep_len;
      ep_return += r.reward;
      s = std::move(r.next_state);
      if (r.done() || st.env_steps >= total_steps) break;
    }
    ++st.episodes;
    res.record.episode_returns.push_back(ep_return);
    tracker.update(st.env_steps, ep_return, cfg.capacity);

    if (st.env_steps >= cfg.warmup_steps) {
      if (cfg.sampler == Sampler::ere)
        eta = cfg.adaptive_eta ? replay::adapt_eta(ere_cfg, tracker, cfg.capacity) : cfg.eta0;
      const std::size_t k_upd = ep_len;
      for (std::size_t k = 1; k <= k_upd; ++k) {
        replay::Batch b;
        UpdateInfo info{st.env_steps, k, k_upd, 0, eta};
        switch (cfg.sampler) {
          case Sampler::uniform:
            b = replay::sample_uniform(buffer, cfg.batch, sampler_rng);
            break;
          case Sampler::ere:
            info.ere_range = std::min(buffer.size(),
                                      replay::ere_range(k, k_upd, cfg.capacity, ere_cfg, eta));
            b = replay::sample_ere(buffer, k, k_upd, ere_cfg, eta, cfg.batch, sampler_rng);
            break;
          case Sampler::per:
            b = per->sample(buffer, cfg.batch, sampler_rng);
            break;
          case Sampler::exp:
            b = replay::sample_exponential(buffer, cfg.exp_lambda, cfg.exp_segment, cfg.batch,
                                           sampler_rng);
            break;
        }
        const auto u = update_step(gather(buffer, b), st, cfg, bounds, agent_rng);
        if (per) per->update_priorities(b.slots, u.abs_td);
        if (hooks && hooks->on_update) hooks->on_update(info);
      }
    }

    if (st.env_steps >= next_eval) {
      record_point();
      while (next_eval <= st.env_steps) next_eval += cfg.eval_interval;
    }
  }
  if (res.record.points.empty() || res.record.points.back().step != st.env_steps) record_point();
  return res;
}

void save_agent(std::ostream& os, const AgentState& state) {
  os << "sop-agent 1\n";
  os << "counters " << state.env_steps << ' ' << state.updates << ' ' << state.episodes << '\n';
  os << "adam_steps " << state.policy_opt.step << ' ' << state.q1_opt.step << ' '
     << state.q2_opt.step << '\n';
  nn::save_params(os, "policy", state.policy);
  nn::save_params(os, "q1", state.q1);
  nn::save_params(os, "q2", state.q2);
  nn::save_params(os, "q1_target", state.q1_target);
  nn::save_params(os, "q2_target", state.q2_target);
  nn::save_params(os, "policy_opt.m", state.policy_opt.first_moment);
  nn::save_params(os, "policy_opt.v", state.policy_opt.second_moment);
  nn::save_params(os, "q1_opt.m", state.q1_opt.first_moment);
  nn::save_params(os, "q1_opt.v", state.q1_opt.second_moment);
  nn::save_params(os, "q2_opt.m", state.q2_opt.first_moment);
  nn::save_params(os, "q2_opt.v", state.q2_opt.second_moment);
}

void load_agent(std::istream& is, AgentState& state) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "sop-agent" || version != 1)
    throw std::runtime_error("checkpoint: not a sop-agent v1 file");
  AgentState s = state;
  if (!(is >> tag >> s.env_steps >> s.updates >> s.episodes) || tag != "counters")
    throw std::runtime_error("checkpoint: bad counters line");
  if (!(is >> tag >> s.policy_opt.step >> s.q1_opt.step >> s.q2_opt.step) || tag != "adam_steps")
    throw std::runtime_error("checkpoint: bad adam_steps line");
  nn::load_params(is, "policy", s.policy);
  nn::load_params(is, "q1", s.q1);
  nn::load_params(is, "q2", s.q2);
  nn::load_params(is, "q1_target", s.q1_target);
  nn::load_params(is, "q2_target", s.q2_target);
  nn::load_params(is, "policy_opt.m", s.policy_opt.first_moment);
  nn::load_params(is, "policy_opt.v", s.policy_opt.second_moment);
  nn::load_params(is, "q1_opt.m", s.q1_opt.first_moment);
  nn::load_params(is, "q1_opt.v", s.q1_opt.second_moment);
  nn::load_params(is, "q2_opt.m", s.q2_opt.first_moment);
  nn::load_params(is, "q2_opt.v", s.q2_opt.second_moment);
  state = std::move(s);
}

}  // namespace sop::agent
