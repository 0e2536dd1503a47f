// alphazzle command-line front end.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "alphazzle/harness.hpp"

namespace az = alphazzle;
namespace fs = std::filesystem;

namespace {

int exit_code(az::ErrorKind kind) {
  switch (kind) {
    case az::ErrorKind::InvalidSpec:
    case az::ErrorKind::InvalidOrder:
    case az::ErrorKind::HintsOutOfRange:
    case az::ErrorKind::CapExceeded:
    case az::ErrorKind::Config: return 2;
    case az::ErrorKind::ImageTooSmall:
    case az::ErrorKind::DatasetEmpty:
    case az::ErrorKind::Io: return 3;
    case az::ErrorKind::RemoteUnreachable:
    case az::ErrorKind::MalformedResponse:
    case az::ErrorKind::ProtocolViolation: return 4;
    default: return 1;
  }
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key = value config file");
  cmd->add_option("-s,--set", c.overrides, "override a config key, e.g. --set n_visits=100")->take_all();
}

az::ExperimentConfig build_config(const Common& c) {
  az::ExperimentConfig cfg;
  if (!c.config_path.empty()) cfg = az::load_config(c.config_path);
  for (const auto& o : c.overrides) az::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

void print_metrics(const az::ReassemblyMetrics& m) {
  std::printf("patch-wise     %.4f\nneighbor-wise  %.4f\npuzzle-wise    %d\nwell-placed    %d\n", m.patch_wise,
              m.neighbor_wise, m.puzzle_wise, m.well_placed);
}

int cmd_solve(const Common& c, int index, const std::string& render) {
  auto cfg = build_config(c);
  if (!render.empty()) cfg.render_dir = render;
  const az::InstanceSource source(cfg);
  const auto evaluator = az::make_evaluator(cfg.evaluator, cfg.master_seed);
  const auto outcome = az::solve_puzzle(cfg, source, *evaluator, index);
  std::printf("puzzle %d (%s)\n", index, outcome.source_id.c_str());
  print_metrics(outcome.metrics);
  if (cfg.attempts > 1) std::printf("selected attempt %d of %d\n", outcome.selected_attempt + 1, cfg.attempts);
  return 0;
}

int cmd_bench(const Common& c) {
  const auto cfg = build_config(c);
  const auto report = az::run_benchmark(cfg);
  az::write_report(report, cfg);
  std::cout << az::report_table(report);
  if (cfg.report_path.empty()) std::cout << az::report_json(report).dump(2) << "\n";
  return 0;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

int cmd_grid(const Common& c, const std::vector<std::string>& sweeps, const std::string& out_path) {
  const auto base = build_config(c);
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& s : sweeps) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw az::Error(az::ErrorKind::Config, "sweep must be key=v1,v2,...: " + s);
    axes.emplace_back(s.substr(0, eq), split(s.substr(eq + 1), ','));
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::vector<std::size_t> idx(axes.size(), 0);
  for (;;) {
    auto cfg = base;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& value = axes[a].second[idx[a]];
      az::apply_setting(cfg, axes[a].first, value);
      label += (label.empty() ? "" : " ") + axes[a].first + "=" + value;
    }
    cfg.report_path.clear();
    cfg.table_path.clear();
    cfg.validate();
    const auto r = az::run_benchmark(cfg);
    std::printf("%-40s patch %6.2f  neighbor %6.2f  puzzle %6.2f  %.3f s/puzzle\n", label.c_str(),
                100 * r.mean_patch_wise, 100 * r.mean_neighbor_wise, 100 * r.mean_puzzle_wise, r.mean_seconds);
    std::fflush(stdout);
    nlohmann::ordered_json row;
    for (std::size_t a = 0; a < axes.size(); ++a) row[axes[a].first] = axes[a].second[idx[a]];
    row["mean_patch_wise"] = r.mean_patch_wise;
    row["mean_neighbor_wise"] = r.mean_neighbor_wise;
    row["mean_puzzle_wise"] = r.mean_puzzle_wise;
    rows.push_back(std::move(row));

    std::size_t a = 0;
    while (a < axes.size() && ++idx[a] == axes[a].second.size()) idx[a++] = 0;
    if (a == axes.size()) break;
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << rows.dump(2) << "\n";
    if (!out) throw az::Error(az::ErrorKind::Io, "cannot write " + out_path);
  }
  return 0;
}

// Compares the configured solver against exhaustive search on every puzzle.
int cmd_oracle(const Common& c, const std::string& scorer_name) {
  const auto cfg = build_config(c);
  const az::Scorer scorer = scorer_name == "value" ? az::Scorer::ValueHead : az::Scorer::GroundTruth;
  if (scorer_name != "value" && scorer_name != "ground-truth")
    throw az::Error(az::ErrorKind::Config, "scorer must be ground-truth or value");
  const az::InstanceSource source(cfg);
  const auto evaluator = az::make_evaluator(cfg.evaluator, cfg.master_seed);
  int agree = 0;
  for (int i = 0; i < cfg.puzzles; ++i) {
    const auto instance = source.get(i);
    const auto best = az::brute_force_solve(instance, scorer, evaluator.get());
    const auto start = az::start_state(cfg, instance, i);
    const auto found = az::solve_once(start, *evaluator, cfg.search, cfg.solver);
    const double score =
        scorer == az::Scorer::GroundTruth ? az::ground_truth_reward(found) : evaluator->evaluate(found).value;
    const bool ok = score == best.score;
    agree += ok;
    std::printf("puzzle %4d  optimum %.6f  solver %.6f  %s\n", i, best.score, score, ok ? "agree" : "DIFFER");
  }
  std::printf("%d / %d puzzles reach the exhaustive optimum\n", agree, cfg.puzzles);
  return agree == cfg.puzzles ? 0 : 1;
}

int cmd_export(const Common& c, const std::string& mode, const std::string& out, int per_head) {
  const auto cfg = build_config(c);
  const az::InstanceSource source(cfg);
  std::vector<az::TrainingSample> samples;
  if (mode == "pretrain") {
    for (int i = 0; i < cfg.puzzles; ++i) {
      auto s = az::pretrain_samples(source.get(i), per_head, az::hash_combine(az::puzzle_seed(cfg.master_seed, i), 0x9e7));
      samples.insert(samples.end(), s.begin(), s.end());
    }
  } else if (mode == "mcts-visited") {
    const auto evaluator = az::make_evaluator(cfg.evaluator, cfg.master_seed);
    for (int i = 0; i < cfg.puzzles; ++i) {
      const auto instance = source.get(i);
      const auto game = az::play_game(az::start_state(cfg, instance, i), *evaluator, cfg.search);
      auto s = az::samples_from_game(game);
      samples.insert(samples.end(), s.begin(), s.end());
    }
  } else {
    throw az::Error(az::ErrorKind::Config, "mode must be pretrain or mcts-visited");
  }
  az::export_samples(samples, out);
  std::printf("wrote %zu samples to %s\n", samples.size(), out.c_str());
  return 0;
}

int cmd_gen_synthetic(const Common& c, const std::string& out_dir, int count, int size, bool instances) {
  const auto cfg = build_config(c);
  fs::create_directories(out_dir);
  const int side = size > 0 ? size : cfg.spec.canvas_side() + cfg.spec.patch_size / 2;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synthetic_%05d", i);
    const auto seed = az::hash_combine(cfg.synthetic_seed, static_cast<std::uint64_t>(i));
    az::save_png(az::generate_synthetic(side, side, seed), fs::path(out_dir) / (std::string(name) + ".png"));
    if (instances) {
      az::save_instance(*az::make_synthetic_instance(cfg.spec, seed), fs::path(out_dir) / (std::string(name) + ".azpz"));
    }
  }
  std::printf("wrote %d images to %s\n", count, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jigsaw reassembly with single-player Monte Carlo tree search"};
  app.require_subcommand(1);

  Common common;
  int index = 0;
  std::string render;
  auto* solve = app.add_subcommand("solve", "solve one puzzle and print its metrics");
  add_common(solve, common);
  solve->add_option("-i,--index", index, "puzzle index in the dataset");
  solve->add_option("--render", render, "directory for PNG renders");

  auto* bench = app.add_subcommand("bench", "run a benchmark and write the report");
  add_common(bench, common);

  std::vector<std::string> sweeps;
  std::string grid_out;
  auto* grid = app.add_subcommand("grid", "sweep config keys over value lists");
  add_common(grid, common);
  grid->add_option("--sweep", sweeps, "key=v1,v2,... (repeatable)")->required();
  grid->add_option("-o,--out", grid_out, "JSON file for the result rows");

  std::string scorer = "ground-truth";
  auto* oracle = app.add_subcommand("oracle", "check the solver against exhaustive search");
  add_common(oracle, common);
  oracle->add_option("--scorer", scorer, "ground-truth or value");

  std::string mode = "pretrain", samples_out = "samples.jsonl";
  int per_head = 16;
  auto* exp = app.add_subcommand("export-samples", "write training samples as JSON lines");
  add_common(exp, common);
  exp->add_option("--mode", mode, "pretrain or mcts-visited");
  exp->add_option("-o,--out", samples_out, "output file");
  exp->add_option("--per-head", per_head, "pretrain samples per head and puzzle");

  std::string gen_out = "synthetic";
  int count = 10, size = 0;
  bool instances = false;
  auto* gen = app.add_subcommand("gen-synthetic", "write synthetic images");
  add_common(gen, common);
  gen->add_option("-o,--out", gen_out, "output directory");
  gen->add_option("-n,--count", count, "number of images");
  gen->add_option("--size", size, "image side in pixels (default: canvas side + patch/2)");
  gen->add_flag("--instances", instances, "also write sliced puzzle instances (.azpz)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*solve) return cmd_solve(common, index, render);
    if (*bench) return cmd_bench(common);
    if (*grid) return cmd_grid(common, sweeps, grid_out);
    if (*oracle) return cmd_oracle(common, scorer);
    if (*exp) return cmd_export(common, mode, samples_out, per_head);
    if (*gen) return cmd_gen_synthetic(common, gen_out, count, size, instances);
  } catch (const az::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", az::to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
