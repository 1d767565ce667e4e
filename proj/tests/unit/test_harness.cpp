#include "sop/harness.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sop;
using namespace sop::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("sop_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_experiment(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.env = "pointmass1d";
  cfg.total_steps = 400;
  cfg.out_dir = out;
  cfg.threads = 1;
  cfg.agent.hidden = 16;
  cfg.agent.batch = 32;
  cfg.agent.capacity = 1000;
  cfg.agent.warmup_steps = 100;
  cfg.agent.eval_interval = 200;
  cfg.agent.eval_rollouts = 2;
  cfg.agent.entropy_samples = 20;
  cfg.agent.record_wall_time = false;
  return cfg;
}

}  // namespace

TEST_CASE("parse_config: defaults") {
  const auto cfg = parse_config({});
  CHECK(cfg.env == "pointmass1d");
  CHECK(cfg.total_steps == 20000);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0});
  CHECK(cfg.agent.gamma == 0.99);
  CHECK(cfg.agent.tau == 0.005);
  CHECK(cfg.agent.explore_std == 0.29);
  CHECK(cfg.agent.target_std == 0.29);
  CHECK(cfg.agent.batch == 256);
  CHECK(cfg.agent.lr == 3e-4);
  CHECK(cfg.agent.sampler == agent::Sampler::uniform);
  CHECK(cfg.agent.variant == agent::Variant::sop);
}

TEST_CASE("parse_config: overrides in both spellings") {
  const auto cfg =
      parse_config({"--sampler", "ere", "--eta0", "0.993", "--seeds=1,2,3", "--literal_polyak=true"});
  CHECK(cfg.agent.sampler == agent::Sampler::ere);
  CHECK(cfg.agent.eta0 == 0.993);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.agent.literal_polyak);
}

TEST_CASE("parse_config: invalid values name their key") {
  auto key_of = [](const std::vector<std::string>& args) {
    try {
      parse_config(args);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  CHECK(key_of({"--gamma", "1.5"}) == "gamma");
  CHECK(key_of({"--tau", "0"}) == "tau");
  CHECK(key_of({"--batch", "abc"}) == "batch");
  CHECK(key_of({"--lr", "1e-3x"}) == "lr");
  CHECK(key_of({"--nonsense", "1"}) == "nonsense");
  CHECK(key_of({"--sampler", "stratified"}) == "sampler");
  CHECK(key_of({"--env", "hopper"}) == "env");
  CHECK(key_of({"--adaptive_eta", "maybe"}) == "adaptive_eta");
  CHECK(key_of({"--gamma"}) == "gamma");
  CHECK(key_of({"--seeds", ""}) == "seeds");
}

TEST_CASE("config file, then arguments; dump round-trips") {
  const auto dir = scratch_dir("config");
  fs::create_directories(dir);
  const auto file = dir / "exp.cfg";
  {
    std::ofstream out(file);
    out << "# comment\n"
        << "sampler = per\n"
        << "beta1=0.6   # trailing\n"
        << "\n"
        << "steps=1234\n";
  }
  const auto cfg = parse_config({"--steps", "99"}, file);
  CHECK(cfg.agent.sampler == agent::Sampler::per);
  CHECK(cfg.agent.per.beta1 == 0.6);
  CHECK(cfg.total_steps == 99);

  const auto via_flag = parse_config({"--config", file.string()});
  CHECK(via_flag.total_steps == 1234);

  std::ostringstream dumped;
  dump_config(dumped, cfg);
  std::istringstream back(dumped.str());
  ExperimentConfig again;
  apply_config_text(again, back);
  std::ostringstream redumped;
  dump_config(redumped, again);
  CHECK(redumped.str() == dumped.str());

  std::size_t lines = 0;
  for (char ch : dumped.str()) lines += ch == '\n';
  CHECK(lines == config_keys().size());
  fs::remove_all(dir);
}

TEST_CASE("evaluate: pair matches the agent evaluation") {
  const auto env = envs::make_env("pointmass1d");
  agent::AgentConfig cfg;
  cfg.hidden = 8;
  Rng rng(3);
  auto st = agent::init_agent(env->spec().state_dim, env->spec().action_dim, cfg, rng);
  for (auto& layer : st.policy.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const auto [mean, std] = harness::evaluate(st, cfg, *env, 4, 11);
  const auto full = agent::evaluate(st, cfg, *env, 4, 11);
  CHECK(mean == full.mean);
  CHECK(std == full.std);
  CHECK(mean < 0.0);
  CHECK(harness::evaluate(st, cfg, *env, 1, 11).second == 0.0);
}

TEST_CASE("run_experiment: zero steps gives header-only csv files") {
  const auto dir = scratch_dir("zero");
  auto cfg = small_experiment(dir);
  cfg.total_steps = 0;
  cfg.seeds = {4, 5};
  const auto summary = run_experiment(cfg);
  CHECK(summary.failures() == 0);
  REQUIRE(summary.runs.size() == 2);
  CHECK(summary.runs[0].csv.filename() == "run0_seed4.csv");
  CHECK(slurp(summary.runs[1].csv) == std::string(kCsvHeader) + "\n");
  CHECK(summary.aggregate.empty());
  CHECK(slurp(summary.aggregate_csv) == "step,seeds,eval_return_mean,eval_return_std\n");
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: duplicate seeds give identical files") {
  const auto dir = scratch_dir("dup");
  auto cfg = small_experiment(dir);
  cfg.seeds = {9, 9};
  cfg.threads = 2;
  const auto summary = run_experiment(cfg);
  REQUIRE(summary.failures() == 0);
  const auto a = slurp(summary.runs[0].csv);
  CHECK(a == slurp(summary.runs[1].csv));
  CHECK(a.rfind(kCsvHeader, 0) == 0);

  std::istringstream rows(a);
  std::string line;
  std::getline(rows, line);
  std::size_t n = 0;
  while (std::getline(rows, line)) {
    ++n;
    CHECK(line.find(",9,") != std::string::npos);
  }
  CHECK(n == summary.runs[0].record.points.size());
  REQUIRE(!summary.aggregate.empty());
  for (const auto& row : summary.aggregate) {
    CHECK(row.seeds == 2);
    CHECK(row.std == 0.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("run_experiment: one failing seed does not stop the others") {
  const auto dir = scratch_dir("isolation");
  auto cfg = small_experiment(dir);
  cfg.total_steps = 150;
  cfg.seeds = {1, 2, 3};
  // A directory where seed 2's csv should go makes that write fail.
  fs::create_directories(dir / "run1_seed2.csv");
  const auto summary = run_experiment(cfg);
  CHECK(summary.failures() == 1);
  CHECK(summary.runs[0].ok);
  CHECK_FALSE(summary.runs[1].ok);
  CHECK(summary.runs[1].error.find("seed 2") != std::string::npos);
  CHECK(summary.runs[2].ok);
  for (const auto& row : summary.aggregate) CHECK(row.seeds == 2);
  fs::remove_all(dir);
}

TEST_CASE("aggregate: population std across seeds") {
  SeedOutcome a, b, c;
  a.ok = b.ok = true;
  c.ok = false;
  agent::EvalPoint p;
  p.step = 10;
  p.eval_return_mean = 1.0;
  a.record.points = {p};
  p.eval_return_mean = 3.0;
  b.record.points = {p};
  p.eval_return_mean = 100.0;
  c.record.points = {p};
  const auto rows = aggregate({a, b, c});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].seeds == 2);
  CHECK(rows[0].mean == 2.0);
  CHECK(rows[0].std == 1.0);
}

TEST_CASE("selftest passes") {
  for (const auto& r : selftest(2)) {
    CAPTURE(r.name);
    CAPTURE(r.detail);
    CHECK(r.passed);
  }
}
