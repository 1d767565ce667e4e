#include <malloc.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sop/analysis.hpp"
#include "sop/harness.hpp"

namespace {

// Eigen's 64x256 temporaries sit above glibc's default mmap threshold, so
// every update would map and unmap pages.
void tune_malloc() {
  mallopt(M_MMAP_THRESHOLD, 4 << 20);
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
}

int cmd_run(const std::vector<std::string>& args, const std::string& config, bool dry_run) {
  using namespace sop::harness;
  ExperimentConfig cfg;
  try {
    cfg = parse_config(args, config.empty() ? std::nullopt
                                            : std::optional<std::filesystem::path>(config));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (dry_run) {
    dump_config(std::cout, cfg);
    return 0;
  }
  const auto summary = run_experiment(cfg);
  for (const auto& r : summary.runs) {
    if (r.ok) {
      const auto& pts = r.record.points;
      std::cout << "seed " << r.seed << ": " << pts.size() << " points";
      if (!pts.empty()) std::cout << ", final eval " << pts.back().eval_return_mean;
      std::cout << " -> " << r.csv.string() << '\n';
    } else {
      std::cerr << "FAILED " << r.error << '\n';
    }
  }
  std::cout << "aggregate -> " << summary.aggregate_csv.string() << '\n';
  return summary.failures() == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  tune_malloc();
  CLI::App app{"Squashed output-normalized actor-critic experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train one agent per seed and write learning curves");
  run->allow_extras();
  std::string config;
  bool dry_run = false;
  run->add_option("--config", config, "key=value file applied before the flags");
  run->add_flag("--dry-run", dry_run, "Print the resolved configuration and exit");
  run->footer(
      "Any other --key value pair sets a configuration key, e.g.\n"
      "  sop run --env pointmass2d --sampler ere --eta0 0.993 --seeds 0,1,2 --steps 20000\n"
      "Use --dry-run to list every key with its value.");

  auto* analyze = app.add_subcommand("analyze", "Replay and policy-output analyses");
  analyze->require_subcommand(1);
  auto* counts = analyze->add_subcommand("counts", "Expected per-point sample counts");
  std::string scheme = "ere_full";
  std::size_t capacity = 1000, updates = 1000, batch = 1, trials = 0;
  double eta = 0.996;
  std::uint64_t seed = 1;
  std::string out;
  counts->add_option("--scheme", scheme, "uniform_empty, uniform_full, ere_empty or ere_full")
      ->capture_default_str();
  counts->add_option("--capacity", capacity, "Buffer size N")->capture_default_str();
  counts->add_option("--updates", updates, "Number of updates")->capture_default_str();
  counts->add_option("--eta", eta, "ERE eta (ere schemes)")->capture_default_str();
  counts->add_option("--batch", batch, "Draws per update")->capture_default_str();
  counts->add_option("--trials", trials, "Monte Carlo trials (0: analytic only)")
      ->capture_default_str();
  counts->add_option("--seed", seed, "Monte Carlo seed")->capture_default_str();
  counts->add_option("--out", out, "CSV path (default: stdout)");

  auto* self = app.add_subcommand("selftest", "Gradient, normalization and sampler checks");
  std::uint64_t self_seed = 1;
  self->add_option("--seed", self_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      // Flags after an unknown --key are left for parse_config.
      return cmd_run(run->remaining(), config, dry_run);
    }
    if (*counts) {
      auto sc = sop::analysis::scenario_from_scheme(scheme, capacity, updates, eta);
      sc.batch = batch;
      const auto exact = sop::analysis::expected_counts(sc);
      std::optional<sop::analysis::EmpiricalCounts> emp;
      if (trials > 0) {
        sop::Rng rng(seed);
        emp = sop::analysis::empirical_counts(sc, trials, rng);
      }
      const auto* e = emp ? &*emp : nullptr;
      if (out.empty()) {
        sop::analysis::write_counts_csv(std::cout, exact.mean, e);
      } else {
        std::ofstream os(out);
        if (!os) throw std::runtime_error("cannot write " + out);
        sop::analysis::write_counts_csv(os, exact.mean, e);
      }
      const auto lo = std::max<std::int64_t>(1, exact.mean.first_index);
      const auto hi = exact.mean.last_index();
      std::cerr << scheme << ": variance over points 1.." << hi << " = "
                << exact.mean.variance(lo, hi)
                << ", max/min = " << exact.mean.max_min_ratio(lo, hi) << '\n';
      return 0;
    }
    if (*self) {
      bool ok = true;
      for (const auto& r : sop::harness::selftest(self_seed)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
