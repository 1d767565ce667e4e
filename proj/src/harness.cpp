#include "sop/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "sop/nn.hpp"
#include "sop/replay.hpp"
#include "sop/rng.hpp"
#include "sop/sum_tree.hpp"

namespace sop::harness {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || v.empty())
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return x;
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || p != end || v.empty())
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int<std::uint64_t>(key, trim(item)));
  if (out.empty()) throw ConfigError(key, "seed list is empty");
  return out;
}

struct Setting {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SOP_DOUBLE(name, field)                                                                \
  Setting {                                                                                    \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_double(name, v); },     \
        [](const ExperimentConfig& c) { return fmt(c.field); }                                 \
  }
#define SOP_INT(name, field, type)                                                             \
  Setting {                                                                                    \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_int<type>(name, v); },  \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                      \
  }
#define SOP_BOOL(name, field)                                                                  \
  Setting {                                                                                    \
    name, [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(name, v); },       \
        [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }      \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      {"env", [](ExperimentConfig& c, const std::string& v) { c.env = v; },
       [](const ExperimentConfig& c) { return c.env; }},
      {"variant",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.agent.variant = agent::parse_variant(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("variant", e.what());
         }
       },
       [](const ExperimentConfig& c) { return std::string(agent::to_string(c.agent.variant)); }},
      {"sampler",
       [](ExperimentConfig& c, const std::string& v) {
         try {
           c.agent.sampler = agent::parse_sampler(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("sampler", e.what());
         }
       },
       [](const ExperimentConfig& c) { return std::string(agent::to_string(c.agent.sampler)); }},
      SOP_INT("steps", total_steps, std::int64_t),
      {"seeds", [](ExperimentConfig& c, const std::string& v) { c.seeds = to_seeds("seeds", v); },
       [](const ExperimentConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.seeds.size(); ++i)
           s += (i ? "," : "") + std::to_string(c.seeds[i]);
         return s;
       }},
      {"out", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
       [](const ExperimentConfig& c) { return c.out_dir.string(); }},
      SOP_INT("threads", threads, int),
      SOP_DOUBLE("gamma", agent.gamma),
      SOP_DOUBLE("tau", agent.tau),
      SOP_BOOL("literal_polyak", agent.literal_polyak),
      SOP_DOUBLE("explore_std", agent.explore_std),
      SOP_DOUBLE("target_std", agent.target_std),
      SOP_INT("batch", agent.batch, std::size_t),
      SOP_DOUBLE("lr", agent.lr),
      SOP_INT("hidden", agent.hidden, int),
      SOP_INT("capacity", agent.capacity, std::size_t),
      SOP_INT("warmup_steps", agent.warmup_steps, std::int64_t),
      SOP_BOOL("normalize_in_target", agent.normalize_in_target),
      SOP_DOUBLE("eta0", agent.eta0),
      SOP_BOOL("adaptive_eta", agent.adaptive_eta),
      SOP_DOUBLE("beta1", agent.per.beta1),
      SOP_DOUBLE("beta2", agent.per.beta2),
      SOP_DOUBLE("per_epsilon", agent.per.epsilon),
      SOP_BOOL("per_normalize_weights", agent.per.normalize_weights),
      SOP_BOOL("per_new_at_max_priority", agent.per.new_at_max_priority),
      SOP_DOUBLE("exp_lambda", agent.exp_lambda),
      SOP_INT("exp_segment", agent.exp_segment, std::size_t),
      SOP_INT("eval_interval", agent.eval_interval, std::int64_t),
      SOP_INT("eval_rollouts", agent.eval_rollouts, int),
      SOP_INT("entropy_samples", agent.entropy_samples, int),
      SOP_BOOL("record_wall_time", agent.record_wall_time),
  };
  return table;
}

#undef SOP_DOUBLE
#undef SOP_INT
#undef SOP_BOOL

}  // namespace

void ExperimentConfig::validate() const {
  try {
    envs::make_env(env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("env", e.what());
  }
  if (seeds.empty()) throw ConfigError("seeds", "seed list is empty");
  if (total_steps < 0) throw ConfigError("steps", "must be >= 0");
  if (threads < 0) throw ConfigError("threads", "must be >= 0");
  try {
    agent.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    throw ConfigError(colon == std::string::npos ? "agent" : msg.substr(0, colon),
                      colon == std::string::npos ? msg : trim(msg.substr(colon + 1)));
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& s : settings()) k.push_back(s.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& s : settings()) {
    if (s.key == key) {
      s.set(cfg, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

void apply_config_text(ExperimentConfig& cfg, std::istream& is) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, "line " + std::to_string(lineno) + " is not key=value");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

ExperimentConfig parse_config(const std::vector<std::string>& args,
                              const std::optional<std::filesystem::path>& file) {
  // Split into (key, value) pairs first so a --config in args is read
  // before any flag is applied.
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError(a, "expected --key");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError(key, "missing value");
      value = args[++i];
    }
    pairs.emplace_back(key, value);
  }

  ExperimentConfig cfg;
  auto load = [&](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("config", "cannot open '" + p.string() + "'");
    apply_config_text(cfg, in);
  };
  if (file) load(*file);
  for (const auto& [k, v] : pairs)
    if (k == "config") load(v);
  for (const auto& [k, v] : pairs)
    if (k != "config") apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

void dump_config(std::ostream& os, const ExperimentConfig& cfg) {
  for (const auto& s : settings()) os << s.key << '=' << s.get(cfg) << '\n';
}

std::pair<double, double> evaluate(const agent::AgentState& state, const agent::AgentConfig& cfg,
                                   const envs::Environment& env, int rollouts, std::uint64_t seed) {
  const auto r = agent::evaluate(state, cfg, env, rollouts, seed);
  return {r.mean, r.std};
}

void write_record_csv(std::ostream& os, std::uint64_t seed, const agent::LearningRecord& record) {
  os << kCsvHeader << '\n';
  for (const auto& p : record.points) {
    os << p.step << ',' << seed << ',' << fmt(p.eval_return_mean) << ','
       << fmt(p.eval_return_std) << ',' << fmt(p.entropy_estimate) << ','
       << fmt(p.saturation_fraction) << ',' << fmt(p.mean_abs_mu_pre_norm) << ','
       << fmt(p.eta_current) << ',' << fmt(p.wall_ms) << '\n';
  }
}

std::size_t ExperimentSummary::failures() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const SeedOutcome& r) { return !r.ok; }));
}

std::vector<AggregateRow> aggregate(const std::vector<SeedOutcome>& runs) {
  std::map<std::int64_t, std::vector<double>> by_step;
  for (const auto& r : runs) {
    if (!r.ok) continue;
    for (const auto& p : r.record.points) by_step[p.step].push_back(p.eval_return_mean);
  }
  std::vector<AggregateRow> rows;
  for (const auto& [step, xs] : by_step) {
    AggregateRow row;
    row.step = step;
    row.seeds = xs.size();
    for (double x : xs) row.mean += x;
    row.mean /= static_cast<double>(xs.size());
    for (double x : xs) row.std += (x - row.mean) * (x - row.mean);
    row.std = std::sqrt(row.std / static_cast<double>(xs.size()));
    rows.push_back(row);
  }
  return rows;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);

  ExperimentSummary summary;
  summary.runs.resize(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    summary.runs[i].index = i;
    summary.runs[i].seed = cfg.seeds[i];
    summary.runs[i].csv =
        cfg.out_dir / ("run" + std::to_string(i) + "_seed" + std::to_string(cfg.seeds[i]) + ".csv");
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < summary.runs.size(); i = next++) {
      auto& run = summary.runs[i];
      try {
        const auto env = envs::make_env(cfg.env);
        run.record = agent::train(*env, cfg.agent, cfg.total_steps, run.seed).record;
        std::ofstream out(run.csv);
        if (!out) throw std::runtime_error("cannot write " + run.csv.string());
        write_record_csv(out, run.seed, run.record);
        run.ok = true;
      } catch (const std::exception& e) {
        run.ok = false;
        run.error = "seed " + std::to_string(run.seed) + ": " + e.what();
      }
    }
  };

  std::size_t workers = cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, summary.runs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  summary.aggregate = aggregate(summary.runs);
  summary.aggregate_csv = cfg.out_dir / "aggregate.csv";
  std::ofstream agg(summary.aggregate_csv);
  agg << "step,seeds,eval_return_mean,eval_return_std\n";
  for (const auto& r : summary.aggregate)
    agg << r.step << ',' << r.seeds << ',' << fmt(r.mean) << ',' << fmt(r.std) << '\n';
  return summary;
}

std::vector<SelfTestResult> selftest(std::uint64_t seed) {
  std::vector<SelfTestResult> out;
  Rng rng(seed);

  {
    double worst = 0.0;
    const std::vector<std::vector<int>> shapes{{3, 64, 64, 2}, {5, 64, 64, 1}, {2, 8, 1}};
    for (const auto& shape : shapes) {
      for (int rep = 0; rep < 3; ++rep) {
        const auto p = nn::make_mlp(shape, rng);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::VectorXd x(shape.front());
        for (auto& v : x) v = u(rng);
        worst = std::max(worst, nn::finite_diff_check(p, x, 1e-6));
      }
    }
    out.push_back({"mlp gradients vs finite differences", worst < 1e-4,
                   "max relative error " + fmt(worst)});
  }

  {
    std::normal_distribution<double> n(0.0, 3.0);
    bool ok = true;
    for (int i = 0; i < 10000 && ok; ++i) {
      Eigen::VectorXd mu(4);
      for (int k = 0; k < 4; ++k) mu(k) = n(rng);
      const auto y = shaping::normalize_output(mu);
      ok = shaping::output_magnitude(y) <= 1.0;
      for (int k = 0; k < 4 && ok; ++k) ok = (y(k) > 0) == (mu(k) > 0) && (y(k) < 0) == (mu(k) < 0);
    }
    out.push_back({"output normalization bounds and signs", ok, "10000 random vectors"});
  }

  {
    replay::SumTree tree(1000);
    std::uniform_int_distribution<std::size_t> slot(0, 999);
    std::uniform_real_distribution<double> val(0.0, 10.0);
    for (int i = 0; i < 100000; ++i) tree.set(slot(rng), val(rng));
    const bool before = tree.consistent();
    tree.rebuild();
    out.push_back({"sum tree consistency", before && tree.consistent(), "100000 random writes"});
  }

  {
    // PER frequencies on a small buffer, max |z| over slots.
    const std::size_t n = 50;
    replay::ReplayBuffer buf(n, 1, 1);
    replay::PrioritizedSampler per(n);
    std::vector<std::size_t> slots;
    std::vector<double> td;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = buf.push({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), 0.0,
                               Eigen::VectorXd::Zero(1), false});
      per.on_push(s);
      slots.push_back(s);
      td.push_back(static_cast<double>(i % 7));
    }
    per.update_priorities(slots, td);
    const std::size_t draws = 200000;
    std::vector<double> hits(n, 0.0);
    for (std::size_t d = 0; d < draws / 100; ++d)
      for (auto s : per.sample(buf, 100, rng).slots) hits[s] += 1.0;
    double zmax = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double p = per.probability(s);
      const double sd = std::sqrt(draws * p * (1.0 - p));
      zmax = std::max(zmax, std::abs(hits[s] - draws * p) / sd);
    }
    out.push_back({"prioritized sampling frequencies", zmax < 5.0, "max |z| " + fmt(zmax)});
  }

  {
    const replay::EreConfig cfg = replay::EreConfig::for_capacity(1'000'000, 256, 0.995);
    const auto c = replay::ere_range(1000, 1000, 1'000'000, cfg, 0.995);
    const auto expect = static_cast<std::size_t>(std::round(1e6 * std::pow(0.995, 1000.0)));
    out.push_back({"ERE window schedule", c == expect && replay::ere_range(1, 1000, 1'000'000, cfg, 0.995) > c,
                   "c_K = " + std::to_string(c)});
  }
  return out;
}

}  // namespace sop::harness
