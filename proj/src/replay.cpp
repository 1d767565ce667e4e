#include "sop/replay.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sop::replay {

namespace {

void write_values(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << v(i);
}

double read_double(std::istream& is) {
  std::string token;
  if (!(is >> token)) throw std::runtime_error("replay snapshot: truncated");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw std::runtime_error("replay snapshot: bad value '" + token + "'");
  return v;
}

Vector read_values(std::istream& is, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = read_double(is);
  return v;
}

void require_nonempty(const ReplayBuffer& buffer, const char* who) {
  if (buffer.empty()) throw std::logic_error(std::string(who) + ": replay buffer is empty");
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
  if (state_dim <= 0 || action_dim <= 0)
    throw std::invalid_argument("replay buffer: dimensions must be positive");
  ids_.assign(capacity, 0);
}

std::size_t ReplayBuffer::push(Transition t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
      t.action.size() != action_dim_)
    throw std::invalid_argument("replay buffer: transition dimensions do not match (state " +
                                std::to_string(state_dim_) + ", action " +
                                std::to_string(action_dim_) + ")");
  const std::size_t slot = cursor_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[slot] = std::move(t);
  }
  ids_[slot] = next_id_++;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  return slot;
}

std::size_t ReplayBuffer::slot_of_recent(std::size_t i) const {
  if (i >= size_)
    throw std::out_of_range("replay buffer: recent index " + std::to_string(i) + " >= size " +
                            std::to_string(size_));
  return (cursor_ + capacity_ - 1 - i) % capacity_;
}

const Transition& ReplayBuffer::at_slot(std::size_t slot) const {
  if (slot >= size_) throw std::out_of_range("replay buffer: slot " + std::to_string(slot));
  return items_[slot];
}

std::uint64_t ReplayBuffer::insertion_id(std::size_t slot) const {
  if (slot >= size_) throw std::out_of_range("replay buffer: slot " + std::to_string(slot));
  return ids_[slot];
}

void ReplayBuffer::dump(std::ostream& os) const {
  os << "replay " << capacity_ << ' ' << state_dim_ << ' ' << action_dim_ << ' ' << size_ << ' '
     << next_id_ << '\n'
     << std::hexfloat;
  for (std::size_t i = size_; i-- > 0;) {
    const std::size_t slot = slot_of_recent(i);
    const Transition& t = items_[slot];
    os << ids_[slot] << ' ' << (t.terminal ? 1 : 0) << ' ' << t.reward;
    write_values(os, t.state);
    write_values(os, t.action);
    write_values(os, t.next_state);
    os << '\n';
  }
  os << std::defaultfloat;
}

ReplayBuffer ReplayBuffer::load(std::istream& is) {
  std::string magic;
  std::size_t capacity = 0, count = 0;
  int sdim = 0, adim = 0;
  std::uint64_t next_id = 0;
  if (!(is >> magic >> capacity >> sdim >> adim >> count >> next_id) || magic != "replay")
    throw std::runtime_error("replay snapshot: bad header");
  if (count > capacity) throw std::runtime_error("replay snapshot: more items than capacity");
  ReplayBuffer buf(capacity, sdim, adim);
  for (std::size_t n = 0; n < count; ++n) {
    std::uint64_t id = 0;
    int terminal = 0;
    if (!(is >> id >> terminal)) throw std::runtime_error("replay snapshot: truncated record");
    Transition t;
    t.terminal = terminal != 0;
    t.reward = read_double(is);
    t.state = read_values(is, sdim);
    t.action = read_values(is, adim);
    t.next_state = read_values(is, sdim);
    const std::size_t slot = buf.push(std::move(t));
    buf.ids_[slot] = id;
  }
  buf.next_id_ = next_id;
  return buf;
}

Batch sample_recent(const ReplayBuffer& buffer, std::size_t window, std::size_t batch, Rng& rng) {
  require_nonempty(buffer, "sample");
  window = std::clamp<std::size_t>(window, 1, buffer.size());
  std::uniform_int_distribution<std::size_t> pick(0, window - 1);
  Batch out;
  out.slots.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) out.slots.push_back(buffer.slot_of_recent(pick(rng)));
  return out;
}

Batch sample_uniform(const ReplayBuffer& buffer, std::size_t batch, Rng& rng) {
  require_nonempty(buffer, "sample_uniform");
  return sample_recent(buffer, buffer.size(), batch, rng);
}

EreConfig EreConfig::for_capacity(std::size_t capacity, std::size_t batch, double eta0) {
  EreConfig cfg;
  cfg.eta0 = eta0;
  cfg.c_min = std::max(batch, capacity / 200);
  return cfg;
}

std::size_t ere_range(std::size_t k, std::size_t k_updates, std::size_t capacity,
                      const EreConfig& cfg, double eta) {
  if (k_updates == 0) throw std::invalid_argument("ere_range: phase has no updates");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("ere_range: eta must be in (0, 1]");
  const double exponent =
      static_cast<double>(k) * cfg.phase_length / static_cast<double>(k_updates);
  const double c = std::round(static_cast<double>(capacity) * std::pow(eta, exponent));
  const auto ck = std::max(cfg.c_min, static_cast<std::size_t>(c));
  return std::min(ck, capacity);
}

Batch sample_ere(const ReplayBuffer& buffer, std::size_t k, std::size_t k_updates,
                 const EreConfig& cfg, double eta, std::size_t batch, Rng& rng) {
  require_nonempty(buffer, "sample_ere");
  return sample_recent(buffer, ere_range(k, k_updates, buffer.capacity(), cfg, eta), batch, rng);
}

std::vector<double> exponential_segment_weights(std::size_t size, double lambda,
                                                std::size_t segment) {
  if (!(lambda > 0.0)) throw std::invalid_argument("exponential sampler: lambda must be > 0");
  if (segment == 0) throw std::invalid_argument("exponential sampler: segment must be > 0");
  if (size == 0) throw std::invalid_argument("exponential sampler: empty range");
  const double total = -std::expm1(-lambda * static_cast<double>(size));
  std::vector<double> w;
  for (std::size_t start = 0; start < size; start += segment) {
    const double len = static_cast<double>(std::min(segment, size - start));
    // exp(-l a) - exp(-l b) = exp(-l a) * (1 - exp(-l (b - a)))
    w.push_back(std::exp(-lambda * static_cast<double>(start)) * -std::expm1(-lambda * len) /
                total);
  }
  return w;
}

Batch sample_exponential(const ReplayBuffer& buffer, double lambda, std::size_t segment,
                         std::size_t batch, Rng& rng) {
  require_nonempty(buffer, "sample_exponential");
  if (!(lambda > 0.0)) throw std::invalid_argument("exponential sampler: lambda must be > 0");
  if (segment == 0) throw std::invalid_argument("exponential sampler: segment must be > 0");
  const std::size_t n = buffer.size();
  const std::size_t n_segments = (n + segment - 1) / segment;
  // Inverse CDF of the truncated exponential picks a segment with exactly
  // its integrated mass; the position inside the segment is then redrawn
  // uniformly over its integer indices.
  const double span = std::expm1(-lambda * static_cast<double>(n));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Batch out;
  out.slots.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const double x = -std::log1p(unit(rng) * span) / lambda;
    const auto s = std::min(static_cast<std::size_t>(x / static_cast<double>(segment)),
                            n_segments - 1);
    const std::size_t start = s * segment;
    const std::size_t len = std::min(segment, n - start);
    std::uniform_int_distribution<std::size_t> within(0, len - 1);
    out.slots.push_back(buffer.slot_of_recent(start + within(rng)));
  }
  return out;
}

PrioritizedSampler::PrioritizedSampler(std::size_t capacity, PerConfig cfg)
    : cfg_(cfg), tree_(capacity), raw_(capacity, 0.0) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("per: epsilon must be > 0");
  if (cfg.beta1 < 0.0 || cfg.beta2 < 0.0) throw std::invalid_argument("per: exponents must be >= 0");
}

void PrioritizedSampler::on_push(std::size_t slot) {
  const double p = cfg_.new_at_max_priority ? max_priority_ : 1.0;
  raw_.at(slot) = p;
  tree_.set(slot, std::pow(p, cfg_.beta1));
}

void PrioritizedSampler::update_priorities(std::span<const std::size_t> slots,
                                           std::span<const double> td_errors) {
  if (slots.size() != td_errors.size())
    throw std::invalid_argument("per: slots and td_errors differ in length");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] >= tree_.capacity())
      throw std::out_of_range("per: invalid slot " + std::to_string(slots[i]));
    if (!std::isfinite(td_errors[i])) throw std::invalid_argument("per: non-finite TD error");
    const double p = std::abs(td_errors[i]) + cfg_.epsilon;
    raw_[slots[i]] = p;
    max_priority_ = std::max(max_priority_, p);
    tree_.set(slots[i], std::pow(p, cfg_.beta1));
  }
}

double PrioritizedSampler::probability(std::size_t slot) const {
  return tree_.leaf(slot) / tree_.total();
}

double PrioritizedSampler::priority(std::size_t slot) const { return raw_.at(slot); }

Batch PrioritizedSampler::sample(const ReplayBuffer& buffer, std::size_t batch, Rng& rng) const {
  require_nonempty(buffer, "per sample");
  const double total = tree_.total();
  if (!(total > 0.0)) throw std::logic_error("per sample: no priorities set");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Batch out;
  out.slots.reserve(batch);
  out.weights.reserve(batch);
  const double n = static_cast<double>(buffer.size());
  double max_w = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t slot = tree_.find(unit(rng) * total);
    const double w = std::pow(1.0 / (n * probability(slot)), cfg_.beta2);
    out.slots.push_back(slot);
    out.weights.push_back(w);
    max_w = std::max(max_w, w);
  }
  if (cfg_.normalize_weights && max_w > 0.0)
    for (double& w : out.weights) w /= max_w;
  return out;
}

void PerfTracker::update(std::int64_t timestep, double episode_return, std::size_t capacity) {
  if (!history_.empty() && timestep < last_timestep_)
    throw std::invalid_argument("perf tracker: timesteps must be nondecreasing");
  const auto horizon = static_cast<std::int64_t>(capacity / 2);
  if (timestep >= horizon && !history_.empty()) {
    const std::int64_t target = timestep - horizon;
    auto it = std::lower_bound(history_.begin(), history_.end(), target,
                               [](const Record& r, std::int64_t t) { return r.timestep < t; });
    if (it == history_.end()) {
      it = std::prev(it);
    } else if (it != history_.begin()) {
      auto before = std::prev(it);
      if (target - before->timestep <= it->timestep - target) it = before;
    }
    recent_ = episode_return - it->value;
    max_ = std::max(max_, *recent_);
  }
  history_.push_back({timestep, episode_return});
  last_timestep_ = timestep;
}

double adapt_eta(const EreConfig& cfg, const PerfTracker& tracker, std::size_t capacity) {
  const auto horizon = static_cast<std::int64_t>(capacity / 2);
  const auto recent = tracker.recent_improvement();
  if (tracker.last_timestep() < horizon || !recent || tracker.max_improvement() <= 0.0)
    return cfg.eta0;
  const double r = std::clamp(*recent / tracker.max_improvement(), 0.0, 1.0);
  return cfg.eta0 * r + (1.0 - r);
}

}  // namespace sop::replay
