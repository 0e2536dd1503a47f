#pragma once

// Experiment orchestration: datasets, multi-attempt solving, greedy and
// brute-force baselines, parallel benchmarks, reports and sample export.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/evaluators.hpp"
#include "alphazzle/image_io.hpp"
#include "alphazzle/mcts.hpp"
#include "alphazzle/puzzle_env.hpp"
#include "alphazzle/remote.hpp"
#include "alphazzle/serialization.hpp"
#include "json.hpp"

namespace alphazzle {

// ---------------------------------------------------------------------------
// Configuration

enum class AttemptSelection { ValueHead, GroundTruthBest, GroundTruthWorst };
enum class SolverKind { Mcts, GreedyPolicy, GreedyValue };

struct EvaluatorKind {
  std::string base = "oracle";  // oracle | noisy | remote | none
  double epsilon = 0.3;
  bool uniform_policy = false;
  std::optional<double> constant_value;
  std::string endpoint;
};

struct ExperimentConfig {
  PuzzleSpec spec;
  std::string dataset = "synthetic";  // "synthetic" or an image directory
  std::uint64_t synthetic_seed = 1;
  int puzzles = 200;
  SearchConfig search;
  EvaluatorKind evaluator;
  SolverKind solver = SolverKind::Mcts;
  int attempts = 1;
  AttemptSelection attempt_selection = AttemptSelection::ValueHead;
  int hints = 0;
  bool central_hint = false;
  int workers = 1;
  std::uint64_t master_seed = 0;
  std::string report_path;
  std::string table_path;
  std::string render_dir;

  void validate() const {
    spec.validate();
    search.validate();
    if (attempts < 1) throw Error(ErrorKind::Config, "attempts must be >= 1");
    if (puzzles < 1) throw Error(ErrorKind::Config, "puzzles must be >= 1");
    if (workers < 1) throw Error(ErrorKind::Config, "workers must be >= 1");
    if (hints < 0 || hints > spec.patches() - 1) throw Error(ErrorKind::Config, "hints must lie in [0, f-1]");
    if (central_hint && hints < 1) throw Error(ErrorKind::Config, "central_hint needs hints >= 1");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw Error(ErrorKind::Config, "bad value for " + key + ": '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "off" || value == "0" || value == "no") return false;
  throw Error(ErrorKind::Config, "bad boolean for " + key + ": '" + value + "'");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, e] : table)
    if (value == name) return e;
  throw Error(ErrorKind::Config, "bad value for " + key + ": '" + value + "'");
}

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline const char* to_string(AttemptSelection a) {
  switch (a) {
    case AttemptSelection::ValueHead: return "value_head";
    case AttemptSelection::GroundTruthBest: return "ground_truth_best";
    case AttemptSelection::GroundTruthWorst: return "ground_truth_worst";
  }
  return "?";
}

inline const char* to_string(SolverKind s) {
  switch (s) {
    case SolverKind::Mcts: return "mcts";
    case SolverKind::GreedyPolicy: return "greedy_policy";
    case SolverKind::GreedyValue: return "greedy_value";
  }
  return "?";
}

/// Applies one `key = value` setting. Unknown keys are config errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  if (key == "patch_size") cfg.spec.patch_size = parse_number<int>(key, value);
  else if (key == "patches_per_side") cfg.spec.patches_per_side = parse_number<int>(key, value);
  else if (key == "gap_size") cfg.spec.gap_size = parse_number<int>(key, value);
  else if (key == "channels") cfg.spec.channels = parse_number<int>(key, value);
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "synthetic_seed") cfg.synthetic_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "puzzles") cfg.puzzles = parse_number<int>(key, value);
  else if (key == "n_visits") cfg.search.n_visits = parse_number<int>(key, value);
  else if (key == "c") cfg.search.c = parse_number<double>(key, value);
  else if (key == "selection")
    cfg.search.selection = detail::parse_enum<Selection>(
        key, value,
        {{"uct", Selection::Uct}, {"puct", Selection::Puct}, {"sp_mcts", Selection::SpMcts}, {"sp_mix", Selection::SpMix}});
  else if (key == "w") cfg.search.w = parse_number<double>(key, value);
  else if (key == "lambda") cfg.search.lambda = parse_number<double>(key, value);
  else if (key == "reward_mode")
    cfg.search.reward_mode = detail::parse_enum<RewardMode>(key, value,
                                                            {{"ground_truth", RewardMode::GroundTruth},
                                                             {"predicted", RewardMode::Predicted},
                                                             {"constant_one", RewardMode::ConstantOne}});
  else if (key == "midgame_value") cfg.search.midgame_value = parse_bool(key, value);
  else if (key == "midgame_constant") cfg.search.midgame_constant = parse_number<double>(key, value);
  else if (key == "use_policy") cfg.search.use_policy = parse_bool(key, value);
  else if (key == "action_choice")
    cfg.search.action_choice = detail::parse_enum<ActionChoice>(
        key, value, {{"visit_count", ActionChoice::VisitCount}, {"mean_value", ActionChoice::MeanValue}});
  else if (key == "tree_per_move") cfg.search.tree_per_move = parse_bool(key, value);
  else if (key == "evaluator") {
    if (value != "oracle" && value != "noisy" && value != "remote" && value != "none")
      throw Error(ErrorKind::Config, "evaluator must be oracle, noisy, remote or none");
    cfg.evaluator.base = value;
  } else if (key == "epsilon") cfg.evaluator.epsilon = parse_number<double>(key, value);
  else if (key == "uniform_policy") cfg.evaluator.uniform_policy = parse_bool(key, value);
  else if (key == "constant_value") {
    if (value == "none" || value.empty()) cfg.evaluator.constant_value.reset();
    else cfg.evaluator.constant_value = parse_number<double>(key, value);
  } else if (key == "endpoint") cfg.evaluator.endpoint = value;
  else if (key == "solver")
    cfg.solver = detail::parse_enum<SolverKind>(key, value,
                                                {{"mcts", SolverKind::Mcts},
                                                 {"greedy_policy", SolverKind::GreedyPolicy},
                                                 {"greedy_value", SolverKind::GreedyValue}});
  else if (key == "attempts") cfg.attempts = parse_number<int>(key, value);
  else if (key == "attempt_selection")
    cfg.attempt_selection = detail::parse_enum<AttemptSelection>(key, value,
                                                                 {{"value_head", AttemptSelection::ValueHead},
                                                                  {"ground_truth_best", AttemptSelection::GroundTruthBest},
                                                                  {"ground_truth_worst", AttemptSelection::GroundTruthWorst}});
  else if (key == "hints") cfg.hints = parse_number<int>(key, value);
  else if (key == "central_hint") cfg.central_hint = parse_bool(key, value);
  else if (key == "workers") cfg.workers = parse_number<int>(key, value);
  else if (key == "master_seed") cfg.master_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "report") cfg.report_path = value;
  else if (key == "table") cfg.table_path = value;
  else if (key == "render_dir") cfg.render_dir = value;
  else throw Error(ErrorKind::Config, "unknown config key: " + key);
}

/// Accepts "key=value" (whitespace around '=' ignored).
inline void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw Error(ErrorKind::Config, "expected key=value, got '" + std::string(assignment) + "'");
  apply_setting(cfg, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Flat key-value text: one `key = value` per line, '#' starts a comment.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    try {
      apply_override(cfg, body);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(cfg));
}

/// Every setting as text, in key order; parse_config accepts it back.
inline std::map<std::string, std::string> config_echo(const ExperimentConfig& cfg) {
  using detail::format_double;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"patch_size", std::to_string(cfg.spec.patch_size)},
      {"patches_per_side", std::to_string(cfg.spec.patches_per_side)},
      {"gap_size", std::to_string(cfg.spec.gap_size)},
      {"channels", std::to_string(cfg.spec.channels)},
      {"dataset", cfg.dataset},
      {"synthetic_seed", std::to_string(cfg.synthetic_seed)},
      {"puzzles", std::to_string(cfg.puzzles)},
      {"n_visits", std::to_string(cfg.search.n_visits)},
      {"c", format_double(cfg.search.c)},
      {"selection", to_string(cfg.search.selection)},
      {"w", format_double(cfg.search.w)},
      {"lambda", format_double(cfg.search.lambda)},
      {"reward_mode", to_string(cfg.search.reward_mode)},
      {"midgame_value", b(cfg.search.midgame_value)},
      {"midgame_constant", format_double(cfg.search.midgame_constant)},
      {"use_policy", b(cfg.search.use_policy)},
      {"action_choice", to_string(cfg.search.action_choice)},
      {"tree_per_move", b(cfg.search.tree_per_move)},
      {"evaluator", cfg.evaluator.base},
      {"epsilon", format_double(cfg.evaluator.epsilon)},
      {"uniform_policy", b(cfg.evaluator.uniform_policy)},
      {"constant_value", cfg.evaluator.constant_value ? format_double(*cfg.evaluator.constant_value) : "none"},
      {"endpoint", cfg.evaluator.endpoint},
      {"solver", to_string(cfg.solver)},
      {"attempts", std::to_string(cfg.attempts)},
      {"attempt_selection", to_string(cfg.attempt_selection)},
      {"hints", std::to_string(cfg.hints)},
      {"central_hint", b(cfg.central_hint)},
      {"workers", std::to_string(cfg.workers)},
      {"master_seed", std::to_string(cfg.master_seed)},
  };
}

// ---------------------------------------------------------------------------
// Evaluators and datasets

/// Builds the configured evaluator; exclusive evaluators come back wrapped
/// in a DispatchQueue so that concurrent workers may share them.
inline EvaluatorPtr make_evaluator(const EvaluatorKind& kind, std::uint64_t seed) {
  EvaluatorPtr base;
  if (kind.base == "oracle") {
    base = std::make_shared<OracleEvaluator>();
  } else if (kind.base == "noisy") {
    base = std::make_shared<NoisyEvaluator>(kind.epsilon, hash_combine(seed, 0x401e));
  } else if (kind.base == "remote") {
    base = make_remote_evaluator(kind.endpoint);
  } else if (kind.base != "none") {
    throw Error(ErrorKind::Config, "unknown evaluator " + kind.base);
  }
  if (kind.uniform_policy || kind.constant_value) {
    base = std::make_shared<DeactivatedEvaluator>(base, kind.uniform_policy, kind.constant_value);
  } else if (!base) {
    throw Error(ErrorKind::Config, "evaluator 'none' needs uniform_policy and constant_value");
  }
  if (base->exclusive()) base = std::make_shared<DispatchQueue>(base);
  return base;
}

/// Puzzle i of the configured dataset; a pure function of (config, i).
class InstanceSource {
 public:
  explicit InstanceSource(const ExperimentConfig& cfg) : cfg_(cfg) {
    if (cfg.dataset != "synthetic") {
      images_ = list_images(cfg.dataset);
      if (images_.empty()) throw Error(ErrorKind::DatasetEmpty, "no PNG/PPM images in " + cfg.dataset);
    }
  }

  InstancePtr get(int index) const {
    if (images_.empty()) return make_synthetic_instance(cfg_.spec, hash_combine(cfg_.synthetic_seed, index));
    const auto& path = images_[static_cast<std::size_t>(index) % images_.size()];
    RasterImage img;
    try {
      img = load_image(path);
    } catch (const Error& e) {
      throw Error(ErrorKind::DatasetEmpty, e.what());
    }
    try {
      return std::make_shared<const PuzzleInstance>(
          slice_image(img, cfg_.spec, hash_combine(cfg_.master_seed ^ 0xc409, index),
                      path.filename().string() + "#" + std::to_string(index)));
    } catch (const Error& e) {
      throw Error(ErrorKind::DatasetEmpty, e.what());
    }
  }

 private:
  ExperimentConfig cfg_;
  std::vector<std::filesystem::path> images_;
};

inline std::uint64_t puzzle_seed(std::uint64_t master_seed, int index) {
  return hash_combine(master_seed, static_cast<std::uint64_t>(index) + 1);
}

// ---------------------------------------------------------------------------
// Solvers

enum class GreedyMode { Policy, Value };

/// Argmax of the masked policy, or of the value of every one-step successor.
/// Ties go to the lowest position.
inline GameState greedy_solve(const GameState& start, Evaluator& evaluator, GreedyMode mode) {
  GameState state = start;
  while (!state.is_terminal()) {
    const auto legal = legal_actions(state);
    int best = legal.front().position;
    if (mode == GreedyMode::Policy) {
      const auto policy = mask_and_renormalize(evaluator.evaluate(state).policy, legal);
      for (const Action& a : legal)
        if (policy[static_cast<std::size_t>(a.position)] > policy[static_cast<std::size_t>(best)]) best = a.position;
    } else {
      std::vector<GameState> successors;
      successors.reserve(legal.size());
      for (const Action& a : legal) successors.push_back(apply_action(state, a));
      const auto verdicts = evaluator.evaluate(successors);
      double best_value = verdicts.front().value;
      for (std::size_t i = 1; i < legal.size(); ++i) {
        if (verdicts[i].value > best_value) {
          best_value = verdicts[i].value;
          best = legal[i].position;
        }
      }
    }
    state = apply_action(state, Action{best});
  }
  return state;
}

inline GameState greedy_solve(InstancePtr instance, const PatchOrder& order, Evaluator& evaluator, GreedyMode mode) {
  return greedy_solve(initial_state(std::move(instance), order), evaluator, mode);
}

enum class Scorer { GroundTruth, ValueHead };

struct BruteForceResult {
  std::vector<int> assignment;  // position -> patch
  double score = 0.0;
  std::size_t visited = 0;
};

inline constexpr std::size_t kDefaultBruteForceCap = 362880;  // 9!

/// Complete state holding `assignment`.
inline GameState complete_state(const InstancePtr& instance, const std::vector<int>& assignment) {
  return GameState(instance, std::make_shared<const std::vector<int>>(assignment), assignment,
                   static_cast<int>(assignment.size()));
}

/// Scores every complete assignment; ties keep the lexicographically
/// smallest assignment.
inline BruteForceResult brute_force_solve(const InstancePtr& instance, Scorer scorer, Evaluator* evaluator = nullptr,
                                          std::size_t cap = kDefaultBruteForceCap) {
  const int f = instance->spec.patches();
  double leaves = 1.0;
  for (int k = 2; k <= f; ++k) leaves *= k;
  if (leaves > static_cast<double>(cap)) throw Error(ErrorKind::CapExceeded, std::to_string(f) + "! exceeds the cap");
  if (scorer == Scorer::ValueHead && !evaluator) throw Error(ErrorKind::Config, "value-head scorer needs an evaluator");

  BruteForceResult best;
  best.score = -1.0;
  std::vector<int> perm(static_cast<std::size_t>(f));
  std::iota(perm.begin(), perm.end(), 0);

  constexpr std::size_t kBatch = 1024;
  std::vector<std::vector<int>> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    std::vector<GameState> states;
    states.reserve(pending.size());
    for (const auto& a : pending) states.push_back(complete_state(instance, a));
    const auto verdicts = evaluator->evaluate(states);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (verdicts[i].value > best.score) {
        best.score = verdicts[i].value;
        best.assignment = pending[i];
      }
    }
    pending.clear();
  };

  do {
    ++best.visited;
    if (scorer == Scorer::GroundTruth) {
      const double score = perm == instance->solution ? 1.0 : 0.0;
      if (score > best.score) {
        best.score = score;
        best.assignment = perm;
      }
    } else {
      pending.push_back(perm);
      if (pending.size() == kBatch) flush();
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  flush();
  return best;
}

struct AttemptOutcome {
  GameState final_state;
  ReassemblyMetrics metrics;
  double value = 0.0;  // evaluator value of the completed canvas
};

struct AttemptsResult {
  std::vector<AttemptOutcome> attempts;
  int selected = 0;

  const AttemptOutcome& best() const { return attempts[static_cast<std::size_t>(selected)]; }
};

inline GameState solve_once(const GameState& start, Evaluator& evaluator, const SearchConfig& search,
                            SolverKind solver) {
  switch (solver) {
    case SolverKind::Mcts: return play_game(start, evaluator, search).final_state;
    case SolverKind::GreedyPolicy: return greedy_solve(start, evaluator, GreedyMode::Policy);
    case SolverKind::GreedyValue: return greedy_solve(start, evaluator, GreedyMode::Value);
  }
  throw Error(ErrorKind::Config, "unknown solver");
}

/// Plays `attempts` games from `start`, the first with the start state's own
/// patch order and the rest with fresh orders of the remaining patches,
/// distinct whenever enough permutations exist.
inline AttemptsResult solve_with_attempts(const GameState& start, Evaluator& evaluator, const SearchConfig& search,
                                          SolverKind solver, int attempts, AttemptSelection rule,
                                          std::uint64_t seed) {
  if (attempts < 1) throw Error(ErrorKind::Config, "attempts must be >= 1");
  double permutations = 1.0;
  for (int k = 2; k <= start.remaining(); ++k) permutations *= k;
  const bool distinct = static_cast<double>(attempts) <= permutations;

  Rng rng(seed);
  std::set<std::vector<int>> used;
  std::vector<GameState> starts{start};
  used.emplace(start.order().begin(), start.order().end());
  while (static_cast<int>(starts.size()) < attempts) {
    GameState candidate = with_remaining_order(start, rng);
    std::vector<int> key(candidate.order().begin(), candidate.order().end());
    if (distinct && !used.insert(key).second) continue;
    starts.push_back(std::move(candidate));
  }

  AttemptsResult result;
  for (const GameState& s : starts) {
    GameState final_state = solve_once(s, evaluator, search, solver);
    const ReassemblyMetrics metrics = compute_metrics(final_state);
    const double value = rule == AttemptSelection::ValueHead ? evaluator.evaluate(final_state).value : 0.0;
    result.attempts.push_back(AttemptOutcome{std::move(final_state), metrics, value});
  }

  auto key = [&](const AttemptOutcome& a) {
    if (rule == AttemptSelection::ValueHead) return std::pair(a.value, 0.0);
    return std::pair(a.metrics.patch_wise, a.metrics.neighbor_wise);
  };
  for (int i = 1; i < static_cast<int>(result.attempts.size()); ++i) {
    const auto k = key(result.attempts[static_cast<std::size_t>(i)]);
    const auto best = key(result.best());
    const bool better = rule == AttemptSelection::GroundTruthWorst ? k < best : k > best;
    if (better) result.selected = i;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark

struct PuzzleOutcome {
  int index = 0;
  std::string source_id;
  ReassemblyMetrics metrics;
  std::vector<ReassemblyMetrics> attempt_metrics;
  int selected_attempt = 0;
  double seconds = 0.0;
};

struct BenchmarkReport {
  double mean_patch_wise = 0.0;
  double mean_neighbor_wise = 0.0;
  double mean_puzzle_wise = 0.0;
  std::vector<int> histogram;  // puzzles by well-placed count, 0..f
  double mean_seconds = 0.0;
  std::map<std::string, std::string> config;
  std::vector<PuzzleOutcome> puzzles;
};

/// Start state of puzzle `index`: the hint sampler's state (possibly with no
/// hints), whose order is seeded per puzzle.
inline GameState start_state(const ExperimentConfig& cfg, const InstancePtr& instance, int index) {
  return sample_partial_state(instance, PartialStateRequest{cfg.hints, true, cfg.central_hint},
                              puzzle_seed(cfg.master_seed, index));
}

inline PuzzleOutcome solve_puzzle(const ExperimentConfig& cfg, const InstanceSource& source, Evaluator& evaluator,
                                  int index) {
  const auto t0 = std::chrono::steady_clock::now();
  const InstancePtr instance = source.get(index);
  const GameState start = start_state(cfg, instance, index);
  const AttemptsResult attempts =
      solve_with_attempts(start, evaluator, cfg.search, cfg.solver, cfg.attempts, cfg.attempt_selection,
                          hash_combine(puzzle_seed(cfg.master_seed, index), 0xa77e));
  PuzzleOutcome out;
  out.index = index;
  out.source_id = instance->source_id;
  out.metrics = attempts.best().metrics;
  out.selected_attempt = attempts.selected;
  for (const auto& a : attempts.attempts) out.attempt_metrics.push_back(a.metrics);
  if (!cfg.render_dir.empty()) {
    std::filesystem::create_directories(cfg.render_dir);
    std::ostringstream name;
    name << "puzzle_" << std::setw(5) << std::setfill('0') << index;
    render_canvas(attempts.best().final_state, std::filesystem::path(cfg.render_dir) / (name.str() + ".png"));
    render_canvas(complete_state(instance, instance->solution),
                  std::filesystem::path(cfg.render_dir) / (name.str() + "_truth.png"));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline BenchmarkReport aggregate(const ExperimentConfig& cfg, std::vector<PuzzleOutcome> outcomes) {
  BenchmarkReport r;
  r.config = config_echo(cfg);
  r.histogram.assign(static_cast<std::size_t>(cfg.spec.patches()) + 1, 0);
  for (const auto& o : outcomes) {
    r.mean_patch_wise += o.metrics.patch_wise;
    r.mean_neighbor_wise += o.metrics.neighbor_wise;
    r.mean_puzzle_wise += o.metrics.puzzle_wise;
    r.mean_seconds += o.seconds;
    ++r.histogram[static_cast<std::size_t>(o.metrics.well_placed)];
  }
  const double n = static_cast<double>(outcomes.size());
  r.mean_patch_wise /= n;
  r.mean_neighbor_wise /= n;
  r.mean_puzzle_wise /= n;
  r.mean_seconds /= n;
  r.puzzles = std::move(outcomes);
  return r;
}

/// Solves every puzzle of the configured dataset on a worker pool and
/// aggregates the metrics in puzzle order.
inline BenchmarkReport run_benchmark(const ExperimentConfig& cfg, EvaluatorPtr evaluator = nullptr) {
  cfg.validate();
  const InstanceSource source(cfg);
  if (!evaluator) evaluator = make_evaluator(cfg.evaluator, cfg.master_seed);
  if (evaluator->exclusive()) evaluator = std::make_shared<DispatchQueue>(evaluator);

  std::vector<PuzzleOutcome> outcomes(static_cast<std::size_t>(cfg.puzzles));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int i = next++; i < cfg.puzzles; i = next++) {
      try {
        outcomes[static_cast<std::size_t>(i)] = solve_puzzle(cfg, source, *evaluator, i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.puzzles;
      }
    }
  };
  const int threads = std::min(cfg.workers, cfg.puzzles);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return aggregate(cfg, std::move(outcomes));
}

/// Deterministic JSON: timings are left out so equal configs give equal bytes.
inline nlohmann::ordered_json report_json(const BenchmarkReport& r) {
  nlohmann::ordered_json j;
  j["mean_patch_wise"] = r.mean_patch_wise;
  j["mean_neighbor_wise"] = r.mean_neighbor_wise;
  j["mean_puzzle_wise"] = r.mean_puzzle_wise;
  j["histogram_well_placed"] = r.histogram;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  nlohmann::ordered_json puzzles = nlohmann::ordered_json::array();
  for (const auto& o : r.puzzles) {
    nlohmann::ordered_json p;
    p["index"] = o.index;
    p["source_id"] = o.source_id;
    p["patch_wise"] = o.metrics.patch_wise;
    p["neighbor_wise"] = o.metrics.neighbor_wise;
    p["puzzle_wise"] = o.metrics.puzzle_wise;
    p["selected_attempt"] = o.selected_attempt;
    puzzles.push_back(std::move(p));
  }
  j["puzzles"] = std::move(puzzles);
  return j;
}

inline std::string report_table(const BenchmarkReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "puzzles        " << r.puzzles.size() << "\n";
  out << "patch-wise     " << 100.0 * r.mean_patch_wise << " %\n";
  out << "neighbor-wise  " << 100.0 * r.mean_neighbor_wise << " %\n";
  out << "puzzle-wise    " << 100.0 * r.mean_puzzle_wise << " %\n";
  out << std::setprecision(3) << "time/puzzle    " << r.mean_seconds << " s\n";
  out << "well-placed histogram\n";
  for (std::size_t k = 0; k < r.histogram.size(); ++k) {
    out << "  " << std::setw(2) << k << "  " << std::setw(6) << r.histogram[k] << "\n";
  }
  return out.str();
}

inline void write_report(const BenchmarkReport& r, const ExperimentConfig& cfg) {
  if (!cfg.report_path.empty()) {
    std::ofstream out(cfg.report_path);
    out << report_json(r).dump(2) << "\n";
    if (!out) throw Error(ErrorKind::Io, "cannot write " + cfg.report_path);
  }
  if (!cfg.table_path.empty()) {
    std::ofstream out(cfg.table_path);
    out << report_table(r);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + cfg.table_path);
  }
}

// ---------------------------------------------------------------------------
// Training samples

enum class SampleSource { PretrainSampler, MctsVisited };

struct TrainingSample {
  std::vector<std::uint8_t> state;  // state encoding
  int target_position = 0;
  double target_value = 0.0;
  SampleSource source = SampleSource::MctsVisited;
  std::string head = "both";  // "policy", "value" or "both"

  bool operator==(const TrainingSample&) const = default;
};

inline TrainingSample make_sample(const GameState& state, SampleSource source, std::string head) {
  TrainingSample s;
  s.state = encode_state(state);
  const auto next = state.next_patch();
  s.target_position = next ? state.instance().solution_position_of(*next) : 0;
  s.target_value = value_target(state);
  s.source = source;
  s.head = std::move(head);
  return s;
}

/// Every state the played policy went through, labelled with the ground
/// truth (even when that position is already occupied).
inline std::vector<TrainingSample> samples_from_game(const GameRecord& game) {
  std::vector<TrainingSample> out;
  for (const auto& m : game.moves) out.push_back(make_sample(m.state, SampleSource::MctsVisited, "both"));
  return out;
}

/// Policy samples on correct prefixes; value samples alternating correct and
/// flawed prefixes.
inline std::vector<TrainingSample> pretrain_samples(const InstancePtr& instance, int per_head, std::uint64_t seed) {
  Rng rng(seed);
  const int f = instance->spec.patches();
  std::vector<TrainingSample> out;
  for (int k = 0; k < per_head; ++k) {
    const int hints = static_cast<int>(rng.below(static_cast<std::uint64_t>(f)));
    out.push_back(make_sample(sample_partial_state(instance, {hints, true, false}, rng.next()),
                              SampleSource::PretrainSampler, "policy"));
  }
  for (int k = 0; k < per_head; ++k) {
    const bool correct = k % 2 == 0;
    const int hints = correct ? static_cast<int>(rng.below(static_cast<std::uint64_t>(f)))
                              : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(f - 1)));
    out.push_back(make_sample(sample_partial_state(instance, {hints, correct, false}, rng.next()),
                              SampleSource::PretrainSampler, "value"));
  }
  return out;
}

inline nlohmann::ordered_json sample_json(const TrainingSample& s) {
  nlohmann::ordered_json j;
  j["source"] = s.source == SampleSource::MctsVisited ? "mcts-visited" : "pretrain-sampler";
  j["head"] = s.head;
  j["target_position"] = s.target_position;
  j["target_value"] = s.target_value;
  j["state"] = base64_encode(s.state);
  return j;
}

inline void export_samples(std::span<const TrainingSample> samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& s : samples) out << sample_json(s).dump() << "\n";
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

inline std::vector<TrainingSample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::vector<TrainingSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainingSample s;
      s.source = j.at("source").get<std::string>() == "mcts-visited" ? SampleSource::MctsVisited
                                                                      : SampleSource::PretrainSampler;
      s.head = j.at("head").get<std::string>();
      s.target_position = j.at("target_position").get<int>();
      s.target_value = j.at("target_value").get<double>();
      s.state = base64_decode(j.at("state").get<std::string>());
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Io, std::string("bad sample line: ") + e.what());
    }
  }
  return out;
}

}  // namespace alphazzle
