#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sop/action_shaping.hpp"
#include "sop/envs.hpp"
#include "sop/nn.hpp"
#include "sop/replay.hpp"
#include "sop/rng.hpp"

namespace sop::agent {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using shaping::ActionBounds;

enum class Sampler { uniform, ere, per, exp };
enum class Variant { sop, sop_ig, no_norm, single_q, no_smoothing };
enum class Mode { explore, evaluate };

std::string_view to_string(Sampler s);
std::string_view to_string(Variant v);
/// Throw std::invalid_argument on unknown names.
Sampler parse_sampler(std::string_view name);
Variant parse_variant(std::string_view name);

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  bool literal_polyak = false;  // phi_targ <- tau*phi_targ + (1-tau)*phi
  double explore_std = 0.29;    // sigma_1
  double target_std = 0.29;     // sigma_2
  std::size_t batch = 256;
  double lr = 3e-4;
  int hidden = 64;
  std::size_t capacity = 1'000'000;
  Sampler sampler = Sampler::uniform;
  Variant variant = Variant::sop;
  std::int64_t warmup_steps = 1000;
  bool normalize_in_target = true;

  double eta0 = 0.995;
  bool adaptive_eta = true;
  replay::PerConfig per;
  double exp_lambda = 5e-6;
  std::size_t exp_segment = 100;

  std::int64_t eval_interval = 5000;
  int eval_rollouts = 5;
  int entropy_samples = 500;
  bool record_wall_time = true;  // false writes 0 to wall_ms

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool uses_normalization() const;
  bool uses_tanh() const { return variant != Variant::sop_ig; }
};

struct AgentState {
  nn::MlpParams policy;
  nn::MlpParams q1, q2;
  nn::MlpParams q1_target, q2_target;
  nn::AdamState policy_opt, q1_opt, q2_opt;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  std::int64_t episodes = 0;

  int state_dim() const { return policy.input_size(); }
  int action_dim() const { return policy.output_size(); }
};

/// Policy s -> hidden -> hidden -> K_act, critics [s; a] -> hidden -> hidden -> 1.
/// Targets start equal to the online critics.
AgentState init_agent(int state_dim, int action_dim, const AgentConfig& cfg, Rng& rng);

struct ActDetail {
  Vector mu;      // raw policy output
  Vector pre;     // after normalization (== mu when not normalizing)
  Vector action;
};

ActDetail act_detail(const AgentState& state, const AgentConfig& cfg, const ActionBounds& bounds,
                     const Vector& s, Mode mode, Rng& rng);
Vector act(const AgentState& state, const AgentConfig& cfg, const ActionBounds& bounds,
           const Vector& s, Mode mode, Rng& rng);

/// Column-per-sample minibatch.
struct BatchData {
  Matrix states;
  Matrix actions;
  Matrix next_states;
  Vector rewards;
  Vector terminal;  // 1 for terminal transitions
  Vector weights;   // importance weights, empty means all 1
  std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
};

BatchData gather(const replay::ReplayBuffer& buffer, const replay::Batch& batch);

/// Target actions for a batch of next states (smoothing noise drawn from rng
/// unless the variant disables it).
Matrix target_actions(const AgentState& state, const AgentConfig& cfg,
                      const ActionBounds& bounds, const Matrix& next_states, Rng& rng);

/// y = r + gamma * (1 - terminal) * min_i Q_targ_i(s', a'). single_q uses Q_targ1.
Vector compute_q_targets(const BatchData& batch, const AgentState& state, const AgentConfig& cfg,
                         const ActionBounds& bounds, Rng& rng);

struct QUpdateResult {
  double loss = 0.0;           // mean over the trained critics
  std::vector<double> abs_td;  // per sample, averaged over the trained critics
};

/// One Adam step on each trained critic against shared targets `y`.
/// Throws std::domain_error on a non-finite loss.
QUpdateResult q_update(const BatchData& batch, const Vector& y, AgentState& state,
                       const AgentConfig& cfg);

/// Value and action gradient of a critic on a batch.
using Critic = std::function<std::pair<Vector, Matrix>(const Matrix& states, const Matrix& actions)>;
Critic network_critic(const nn::MlpParams& q);

struct PolicyGradient {
  double objective = 0.0;  // mean critic value
  nn::MlpGrads grads;      // ascent direction on the policy parameters
  Matrix output_grad;      // d objective / d raw policy output (after IG if used)
};

/// Gradient of (1/B) sum_j Q(s_j, a(s_j)) with respect to the policy
/// parameters through the action chain of the variant. For sop_ig the
/// output gradient is transformed by invert_gradients before backprop.
PolicyGradient policy_gradient(const nn::MlpParams& policy, const Matrix& states,
                               const AgentConfig& cfg, const ActionBounds& bounds,
                               const Critic& critic);

/// Evaluates the policy objective only (no gradients).
double policy_objective(const nn::MlpParams& policy, const Matrix& states, const AgentConfig& cfg,
                        const ActionBounds& bounds, const Critic& critic);

/// One ascent step on the policy through Q1. Throws std::domain_error on a
/// non-finite objective.
double policy_update(const BatchData& batch, AgentState& state, const AgentConfig& cfg,
                     const ActionBounds& bounds);

void soft_update(nn::MlpParams& target, const nn::MlpParams& online, double tau, bool literal);
void soft_update_targets(AgentState& state, const AgentConfig& cfg);

struct UpdateResult {
  double q_loss = 0.0;
  double policy_objective = 0.0;
  std::vector<double> abs_td;
};

/// q_update, policy_update and soft_update_targets on one batch.
UpdateResult update_step(const BatchData& batch, AgentState& state, const AgentConfig& cfg,
                         const ActionBounds& bounds, Rng& rng);

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> returns;
};

/// Return of one deterministic-policy episode on an env that was already reset.
double run_episode(const AgentState& state, const AgentConfig& cfg, envs::Environment& env,
                   const Vector& initial_state);

/// `rollouts` evaluation episodes on clones of `env`, episode i reset with
/// derive_seed(seed, i).
EvalResult evaluate(const AgentState& state, const AgentConfig& cfg,
                    const envs::Environment& env, int rollouts, std::uint64_t seed);

struct EvalPoint {
  std::int64_t step = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double entropy_estimate = 0.0;       // nan for sop_ig
  double saturation_fraction = 0.0;    // policy actions since the previous point, nan if none
  double mean_abs_mu_pre_norm = 0.0;
  double mean_abs_mu_post_norm = 0.0;
  double max_abs_mu_post_norm = 0.0;   // largest per-state mean |mu_k| after normalization
  double eta_current = 0.0;            // nan unless sampler = ere
  double wall_ms = 0.0;
};

struct LearningRecord {
  std::vector<EvalPoint> points;
  std::vector<double> episode_returns;
};

struct UpdateInfo {
  std::int64_t env_steps = 0;
  std::size_t k = 0;           // 1-based index inside the phase
  std::size_t k_updates = 0;   // phase length
  std::size_t ere_range = 0;   // 0 unless sampler = ere
  double eta = 1.0;
};

struct TrainHooks {
  std::function<void(const UpdateInfo&)> on_update;
};

struct TrainResult {
  LearningRecord record;
  AgentState state;
};

/// Runs `total_steps` environment steps. Seeds for environment resets,
/// agent noise, minibatch sampling and evaluation are derived from `seed`.
TrainResult train(const envs::Environment& env, const AgentConfig& cfg, std::int64_t total_steps,
                  std::uint64_t seed, const TrainHooks* hooks = nullptr);

void save_agent(std::ostream& os, const AgentState& state);
/// Reads a checkpoint written by save_agent() into a state of the same shape.
void load_agent(std::istream& is, AgentState& state);

}  // namespace sop::agent
