// Scenario runner: executes one seeded run or a paired mini/large seed
// batch, writes traces, verdicts and metrics, and prints the headline
// latency summary.
//
//   minimmit run --config presets/honest_6.json --seed 42 --out out/ --check
//   minimmit compare --config presets/wan_50.json --seeds 100
//
// Exit codes: 0 success (and all checks passed), 1 a safety/liveness check
// failed, 2 configuration or I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "minimmit/batch.hpp"
#include "minimmit/checker.hpp"
#include "minimmit/metrics.hpp"
#include "minimmit/scenario.hpp"
#include "minimmit/sim.hpp"

namespace fs = std::filesystem;
using namespace minimmit;

namespace {

sim::ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return sim::config_from_json(j);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::optional<double> gst_ms;
  std::string horizon;
};

void apply_overrides(sim::ScenarioConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.seed = *ov.seed;
  if (!ov.variant.empty()) {
    if (ov.variant != "mini" && ov.variant != "large")
      throw std::runtime_error("--variant must be mini or large");
    cfg.params.view_advance_quorum =
        ov.variant == "large" ? AdvanceQuorum::Large : AdvanceQuorum::Mini;
  }
  if (ov.gst_ms) cfg.gst = sim::from_ms(*ov.gst_ms);
  if (!ov.horizon.empty()) {
    const std::string& h = ov.horizon;
    auto ends_with = [&h](const char* suffix) {
      const std::string s(suffix);
      return h.size() > s.size() && h.compare(h.size() - s.size(), s.size(), s) == 0;
    };
    cfg.horizon = {};
    if (ends_with("views")) {
      cfg.horizon.views = std::stoull(h.substr(0, h.size() - 5));
    } else if (ends_with("ms")) {
      cfg.horizon.time = sim::from_ms(std::stod(h.substr(0, h.size() - 2)));
    } else {
      throw std::runtime_error("--horizon must look like 30views or 60000ms");
    }
  }
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

std::string format_summary_line(const metrics::MetricsReport& m) {
  if (m.view.empty() || m.finalization.empty())
    return "no completed views to summarise (horizon too short?)";
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "view transition %.2fms (s=%.2fms), finalization %.2fms (s=%.2fms)",
                m.view.mean, m.view.stddev, m.finalization.mean, m.finalization.stddev);
  return buf;
}

int cmd_run(const std::string& config_path, const Overrides& ov, const std::string& out_dir,
            bool check) {
  sim::ScenarioConfig cfg = load_config(config_path);
  apply_overrides(cfg, ov);
  cfg.validate();

  sim::Trace trace = sim::run(cfg);
  metrics::MetricsReport m = metrics::compute(trace);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "trace.jsonl", std::ios::binary);
    sim::write_jsonl(trace, out);
  }
  write_file(fs::path(out_dir) / "metrics.csv", m.to_csv());
  write_file(fs::path(out_dir) / "summary.json", m.to_json().dump(2) + "\n");

  std::cout << format_summary_line(m) << "\n";
  if (trace.end_reason == "hard_stop" || trace.end_reason == "event_cap")
    std::cout << "warning: run ended via " << trace.end_reason << "\n";
  if (m.finalization.empty())
    std::cout << "warning: no finalisation before the horizon; metrics inconclusive\n";

  int rc = 0;
  if (check) {
    checker::Report report = checker::check_all(trace);
    write_file(fs::path(out_dir) / "verdicts.json", report.to_json().dump(2) + "\n");
    for (const auto& v : report.verdicts) {
      std::cout << "  [" << checker::status_name(v.status) << "] " << v.check;
      if (!v.detail.empty()) std::cout << " - " << v.detail;
      std::cout << "\n";
    }
    if (report.any_fail()) rc = 1;
  }
  return rc;
}

int cmd_compare(const std::string& config_path, const Overrides& ov, std::size_t seeds,
                const std::string& out_dir) {
  sim::ScenarioConfig base = load_config(config_path);
  apply_overrides(base, ov);
  base.validate();
  base.record.deliveries = false;  // batch runs only need sends and state events

  std::vector<double> mini(seeds, -1), large(seeds, -1);
  sim::parallel_for(seeds, [&](std::size_t i) {
    sim::ScenarioConfig cfg = base;
    cfg.seed = base.seed + i;
    cfg.params.view_advance_quorum = AdvanceQuorum::Mini;
    metrics::Summary vm = metrics::view_latency(sim::run(cfg));
    cfg.params.view_advance_quorum = AdvanceQuorum::Large;
    metrics::Summary vl = metrics::view_latency(sim::run(cfg));
    if (!vm.empty()) mini[i] = vm.mean;
    if (!vl.empty()) large[i] = vl.mean;
  });

  std::vector<double> mini_ok, large_ok;
  for (std::size_t i = 0; i < seeds; ++i) {
    if (mini[i] >= 0 && large[i] >= 0) {
      mini_ok.push_back(mini[i]);
      large_ok.push_back(large[i]);
    }
  }
  if (mini_ok.empty()) {
    std::cerr << "error: no seed produced measurable view latencies\n";
    return 2;
  }
  metrics::Summary sm = metrics::summarize(mini_ok);
  metrics::Summary sl = metrics::summarize(large_ok);
  const double reduction = 100.0 * (sl.mean - sm.mean) / sl.mean;

  std::printf("mini:  view latency %.2fms (s=%.2fms) over %zu seeds\n", sm.mean, sm.stddev,
              mini_ok.size());
  std::printf("large: view latency %.2fms (s=%.2fms) over %zu seeds\n", sl.mean, sl.stddev,
              large_ok.size());
  std::printf("view-latency reduction: %.1f%%\n", reduction);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["seeds"] = mini_ok.size();
    j["mini"] = {{"mean_ms", sm.mean}, {"stddev_ms", sm.stddev},
                 {"p50_ms", sm.p50}, {"p99_ms", sm.p99}, {"samples", mini_ok}};
    j["large"] = {{"mean_ms", sl.mean}, {"stddev_ms", sl.stddev},
                  {"p50_ms", sl.p50}, {"p99_ms", sl.p99}, {"samples", large_ok}};
    j["view_latency_reduction_pct"] = reduction;
    write_file(fs::path(out_dir) / "comparison.json", j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minimmit consensus simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  Overrides ov;
  bool check = false;
  std::size_t seeds = 100;
  std::uint64_t seed_value = 0;
  double gst_value = 0;

  auto* run_cmd = app.add_subcommand("run", "execute one scenario run");
  run_cmd->add_option("--config", config_path, "scenario JSON")->required();
  auto* seed_opt = run_cmd->add_option("--seed", seed_value, "seed override");
  run_cmd->add_option("--variant", ov.variant, "mini|large override");
  run_cmd->add_option("--out", out_dir, "output directory (default out/)");
  run_cmd->add_flag("--check", check, "run the trace checker and write verdicts.json");
  auto* gst_opt = run_cmd->add_option("--gst", gst_value, "GST override, ms");
  run_cmd->add_option("--horizon", ov.horizon, "horizon override: <N>views or <N>ms");

  std::string cmp_config, cmp_out;
  auto* cmp_cmd = app.add_subcommand("compare", "paired mini/large seed batch");
  cmp_cmd->add_option("--config", cmp_config, "scenario JSON")->required();
  cmp_cmd->add_option("--seeds", seeds, "number of paired seeds (default 100)");
  cmp_cmd->add_option("--out", cmp_out, "output directory for comparison.json");
  auto* cmp_seed_opt = cmp_cmd->add_option("--seed", seed_value, "first seed override");
  auto* cmp_gst_opt = cmp_cmd->add_option("--gst", gst_value, "GST override, ms");
  cmp_cmd->add_option("--horizon", ov.horizon, "horizon override: <N>views or <N>ms");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      if (seed_opt->count()) ov.seed = seed_value;
      if (gst_opt->count()) ov.gst_ms = gst_value;
      return cmd_run(config_path, ov, out_dir, check);
    }
    if (cmp_seed_opt->count()) ov.seed = seed_value;
    if (cmp_gst_opt->count()) ov.gst_ms = gst_value;
    return cmd_compare(cmp_config, ov, seeds, cmp_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
