#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sop/rng.hpp"
#include "sop/sum_tree.hpp"

namespace sop::replay {

using Vector = Eigen::VectorXd;

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
};

/// Fixed-capacity FIFO ring. Slot indices are physical positions; "recent"
/// indices count back from the newest element (recent(0) is the newest).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

  /// Appends `t`, evicting the oldest element when full. Returns the slot.
  /// Throws std::invalid_argument on a dimension mismatch.
  std::size_t push(Transition t);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  std::uint64_t total_pushed() const { return next_id_; }

  std::size_t slot_of_recent(std::size_t i) const;
  const Transition& recent(std::size_t i) const { return items_[slot_of_recent(i)]; }
  const Transition& at_slot(std::size_t slot) const;
  /// Monotone insertion counter of the element stored in `slot`.
  std::uint64_t insertion_id(std::size_t slot) const;

  /// Plain-text snapshot, oldest first, with insertion counters and
  /// hex-float values.
  void dump(std::ostream& os) const;
  static ReplayBuffer load(std::istream& is);

 private:
  std::size_t capacity_;
  int state_dim_;
  int action_dim_;
  std::vector<Transition> items_;
  std::vector<std::uint64_t> ids_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::uint64_t next_id_ = 0;
};

/// Sampled slots plus optional importance weights (empty means all 1).
struct Batch {
  std::vector<std::size_t> slots;
  std::vector<double> weights;
};

/// Uniform with replacement over the whole buffer.
Batch sample_uniform(const ReplayBuffer& buffer, std::size_t batch, Rng& rng);

/// Uniform with replacement over the `window` most recent elements
/// (clamped to the current size).
Batch sample_recent(const ReplayBuffer& buffer, std::size_t window, std::size_t batch, Rng& rng);

struct EreConfig {
  double eta0 = 0.995;
  std::size_t c_min = 5000;
  double phase_length = 1000.0;  // updates per phase the schedule is normalized to

  /// c_min = max(batch, capacity / 200), i.e. 5000 at a 10^6 buffer.
  static EreConfig for_capacity(std::size_t capacity, std::size_t batch, double eta0 = 0.995);
};

/// c_k = max(c_min, round(N * eta^(k * phase_length / K))), capped at N.
/// k = 0 gives the full range.
std::size_t ere_range(std::size_t k, std::size_t k_updates, std::size_t capacity,
                      const EreConfig& cfg, double eta);

Batch sample_ere(const ReplayBuffer& buffer, std::size_t k, std::size_t k_updates,
                 const EreConfig& cfg, double eta, std::size_t batch, Rng& rng);

/// Probability of each `segment`-wide block of most-recent-first indices
/// under a density proportional to exp(-lambda x) truncated to [0, size).
std::vector<double> exponential_segment_weights(std::size_t size, double lambda,
                                                std::size_t segment = 100);

/// Two-stage draw: a segment with its exact exponential mass, then a
/// uniform index inside it.
Batch sample_exponential(const ReplayBuffer& buffer, double lambda, std::size_t segment,
                         std::size_t batch, Rng& rng);

struct PerConfig {
  double beta1 = 0.4;           // priority exponent
  double beta2 = 0.4;           // importance-sampling exponent
  double epsilon = 1e-6;        // priority floor
  bool normalize_weights = true;
  bool new_at_max_priority = true;
};

/// Proportional prioritized replay over a buffer's slots. Leaves store
/// p_i^beta1 with p_i = |delta_i| + epsilon.
class PrioritizedSampler {
 public:
  PrioritizedSampler(std::size_t capacity, PerConfig cfg = {});

  /// Assigns the priority of a freshly written slot.
  void on_push(std::size_t slot);

  /// Sets p_i = |td_i| + epsilon for each slot. Throws std::out_of_range
  /// for an invalid slot.
  void update_priorities(std::span<const std::size_t> slots, std::span<const double> td_errors);

  /// Draws `batch` slots with P(i) = p_i^beta1 / sum_j p_j^beta1 and
  /// weights w_i = (1 / (size * P(i)))^beta2, optionally divided by the
  /// batch maximum.
  Batch sample(const ReplayBuffer& buffer, std::size_t batch, Rng& rng) const;

  double probability(std::size_t slot) const;
  double priority(std::size_t slot) const;
  const SumTree& tree() const { return tree_; }
  SumTree& tree() { return tree_; }
  const PerConfig& config() const { return cfg_; }

 private:
  PerConfig cfg_;
  SumTree tree_;
  std::vector<double> raw_;
  double max_priority_ = 1.0;
};

/// Training-return history used to adapt eta.
class PerfTracker {
 public:
  /// Records an episode return at `timestep`. Once at least capacity/2
  /// steps have elapsed, I_recent is the current return minus the return
  /// recorded nearest to timestep - capacity/2, and I_max its running max.
  void update(std::int64_t timestep, double episode_return, std::size_t capacity);

  std::optional<double> recent_improvement() const { return recent_; }
  double max_improvement() const { return max_; }
  std::int64_t last_timestep() const { return last_timestep_; }
  std::size_t history_size() const { return history_.size(); }

 private:
  struct Record {
    std::int64_t timestep;
    double value;
  };
  std::vector<Record> history_;
  std::optional<double> recent_;
  double max_ = 0.0;
  std::int64_t last_timestep_ = 0;
};

/// eta = eta0 * r + (1 - r), r = clamp(I_recent / I_max, 0, 1); eta0
/// during warm-up (fewer than capacity/2 steps) or while I_max <= 0.
double adapt_eta(const EreConfig& cfg, const PerfTracker& tracker, std::size_t capacity);

}  // namespace sop::replay
