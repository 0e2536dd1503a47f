#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "alphazzle/harness.hpp"

using namespace alphazzle;
namespace fs = std::filesystem;

namespace {

const PuzzleSpec kTwo{4, 2, 1, 3};
const PuzzleSpec kThree{6, 3, 1, 3};

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.spec = kThree;
  cfg.puzzles = 12;
  cfg.search.n_visits = 60;
  cfg.master_seed = 5;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::Io;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto cfg = parse_config(R"(
# desk run
patch_size = 20
patches_per_side=2
gap_size = 2   # trailing comment
n_visits = 250
selection = sp_mix
lambda = 0.25
reward_mode = ground_truth
midgame_value = off
use_policy = false
action_choice = mean_value
evaluator = noisy
epsilon = 0.1
constant_value = 0.4
attempts = 3
attempt_selection = ground_truth_worst
hints = 1
central_hint = true
workers = 2
master_seed = 99
solver = greedy_value
)");
  EXPECT_EQ(cfg.spec, (PuzzleSpec{20, 2, 2, 3}));
  EXPECT_EQ(cfg.search.n_visits, 250);
  EXPECT_EQ(cfg.search.selection, Selection::SpMix);
  EXPECT_DOUBLE_EQ(cfg.search.lambda, 0.25);
  EXPECT_EQ(cfg.search.reward_mode, RewardMode::GroundTruth);
  EXPECT_FALSE(cfg.search.midgame_value);
  EXPECT_FALSE(cfg.search.use_policy);
  EXPECT_EQ(cfg.search.action_choice, ActionChoice::MeanValue);
  EXPECT_EQ(cfg.evaluator.base, "noisy");
  EXPECT_DOUBLE_EQ(cfg.evaluator.epsilon, 0.1);
  EXPECT_EQ(cfg.evaluator.constant_value, 0.4);
  EXPECT_EQ(cfg.attempts, 3);
  EXPECT_EQ(cfg.attempt_selection, AttemptSelection::GroundTruthWorst);
  EXPECT_EQ(cfg.hints, 1);
  EXPECT_TRUE(cfg.central_hint);
  EXPECT_EQ(cfg.workers, 2);
  EXPECT_EQ(cfg.master_seed, 99u);
  EXPECT_EQ(cfg.solver, SolverKind::GreedyValue);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, Defaults) {
  const ExperimentConfig cfg;
  EXPECT_EQ(cfg.spec, (PuzzleSpec{40, 3, 4, 3}));
  EXPECT_EQ(cfg.search.n_visits, 1000);
  EXPECT_DOUBLE_EQ(cfg.search.c, 1.0);
  EXPECT_EQ(cfg.search.selection, Selection::Puct);
  EXPECT_EQ(cfg.search.reward_mode, RewardMode::Predicted);
  EXPECT_EQ(cfg.search.action_choice, ActionChoice::VisitCount);
  EXPECT_DOUBLE_EQ(cfg.search.w, 0.02);
  EXPECT_TRUE(cfg.search.tree_per_move);
}

TEST(Config, Errors) {
  EXPECT_EQ(kind_of([] { parse_config("bogus = 1"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_config("n_visits = ten"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_config("n_visits"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_config("selection = greedy"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_config("midgame_value = maybe"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { parse_config("evaluator = magic"); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/config.txt"); }), ErrorKind::Config);
  try {
    parse_config("n_visits = 3\n\nc = x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  for (const char* bad : {"attempts = 0", "puzzles = 0", "workers = 0", "hints = 9", "n_visits = 0", "lambda = 1.5",
                          "central_hint = on"}) {
    EXPECT_THROW(parse_config(bad).validate(), Error) << bad;
  }
}

TEST(Config, EchoRoundTrips) {
  ExperimentConfig cfg = small_config();
  cfg.search.c = 0.1 + 0.2;  // not exactly representable in short decimal
  cfg.evaluator.constant_value = 1.0 / 3.0;
  cfg.dataset = "/some/dir";
  std::string text;
  for (const auto& [k, v] : config_echo(cfg)) text += k + " = " + v + "\n";
  EXPECT_EQ(config_echo(parse_config(text)), config_echo(cfg));
}

TEST(Evaluators, Factory) {
  EvaluatorKind k;
  EXPECT_EQ(make_evaluator(k, 0)->name(), "oracle");
  k.base = "noisy";
  EXPECT_NE(make_evaluator(k, 0)->name().find("noisy"), std::string::npos);
  k.base = "none";
  EXPECT_EQ(kind_of([&] { make_evaluator(k, 0); }), ErrorKind::Config);
  k.uniform_policy = true;
  k.constant_value = 0.5;
  EXPECT_EQ(make_evaluator(k, 0)->name(), "none+uniformP+constV(0.500000)");
  k = {};
  k.base = "remote";
  k.endpoint = std::string("exec:") + STUB_SERVER_PATH;
  const auto remote = make_evaluator(k, 0);
  EXPECT_EQ(remote->name().rfind("queued:", 0), 0u);
  k.endpoint = "tcp:127.0.0.1:1";
  EXPECT_EQ(kind_of([&] { make_evaluator(k, 0); }), ErrorKind::RemoteUnreachable);
}

TEST(Dataset, SyntheticIsPureFunctionOfIndex) {
  const auto cfg = small_config();
  const InstanceSource a(cfg), b(cfg);
  EXPECT_EQ(a.get(3)->patches, b.get(3)->patches);
  EXPECT_NE(a.get(3)->patches, a.get(4)->patches);
}

TEST(Dataset, Directory) {
  const auto dir = fresh_dir("alphazzle_dataset");
  ExperimentConfig cfg = small_config();
  cfg.dataset = dir.string();
  EXPECT_EQ(kind_of([&] { InstanceSource{cfg}; }), ErrorKind::DatasetEmpty);
  save_png(generate_synthetic(40, 40, 1), dir / "a.png");
  save_ppm(generate_synthetic(30, 36, 2), dir / "b.ppm");
  std::ofstream(dir / "notes.txt") << "ignored";
  const InstanceSource source(cfg);
  EXPECT_EQ(source.get(0)->source_id, "a.png#0");
  EXPECT_EQ(source.get(1)->source_id, "b.ppm#1");
  EXPECT_EQ(source.get(2)->source_id, "a.png#2");
  save_png(generate_synthetic(10, 10, 3), dir / "c.png");  // smaller than the canvas
  const InstanceSource with_small(cfg);
  EXPECT_EQ(kind_of([&] { with_small.get(2); }), ErrorKind::DatasetEmpty);
  cfg.dataset = (dir / "missing").string();
  EXPECT_EQ(kind_of([&] { InstanceSource{cfg}; }), ErrorKind::DatasetEmpty);
  fs::remove_all(dir);
}

TEST(Greedy, OracleSolvesInBothModes) {
  OracleEvaluator oracle;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = make_synthetic_instance(kThree, seed);
    Rng rng(seed);
    const auto order = PatchOrder::random(9, rng);
    EXPECT_EQ(ground_truth_reward(greedy_solve(inst, order, oracle, GreedyMode::Policy)), 1);
    EXPECT_EQ(ground_truth_reward(greedy_solve(inst, order, oracle, GreedyMode::Value)), 1);
  }
}

TEST(Greedy, UniformPolicyPlacesAtRandom) {
  DeactivatedEvaluator flat(nullptr, true, 0.5);
  double total = 0.0;
  constexpr int kPuzzles = 2000;
  const auto inst = make_synthetic_instance(kThree, 1);
  Rng rng(17);
  for (int i = 0; i < kPuzzles; ++i)
    total += compute_metrics(greedy_solve(inst, PatchOrder::random(9, rng), flat, GreedyMode::Policy)).patch_wise;
  EXPECT_NEAR(total / kPuzzles, 1.0 / 9.0, 0.02);
}

TEST(BruteForce, TwoByTwo) {
  const auto inst = make_synthetic_instance(kTwo, 3);
  const auto gt = brute_force_solve(inst, Scorer::GroundTruth);
  EXPECT_EQ(gt.visited, 24u);
  EXPECT_EQ(gt.assignment, inst->solution);
  EXPECT_EQ(gt.score, 1.0);
  OracleEvaluator oracle;
  const auto v = brute_force_solve(inst, Scorer::ValueHead, &oracle);
  EXPECT_EQ(v.visited, 24u);
  EXPECT_EQ(v.assignment, inst->solution);
  DeactivatedEvaluator flat(nullptr, true, 0.3);
  const auto tie = brute_force_solve(inst, Scorer::ValueHead, &flat);
  EXPECT_EQ(tie.assignment, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(kind_of([&] { brute_force_solve(inst, Scorer::ValueHead); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { brute_force_solve(make_synthetic_instance(kThree, 1), Scorer::GroundTruth, nullptr, 1000); }),
            ErrorKind::CapExceeded);
}

TEST(BruteForce, ThreeByThreeValueHead) {
  const auto inst = make_synthetic_instance(kThree, 4);
  OracleEvaluator oracle;
  const auto r = brute_force_solve(inst, Scorer::ValueHead, &oracle);
  EXPECT_EQ(r.visited, 362880u);
  EXPECT_EQ(r.assignment, inst->solution);
}

TEST(Attempts, SingleAttemptIsPlayGame) {
  const auto inst = make_synthetic_instance(kThree, 5);
  NoisyEvaluator noisy(0.3, 2);
  SearchConfig search;
  search.n_visits = 80;
  const GameState start = sample_partial_state(inst, {0, true, false}, 9);
  const auto r = solve_with_attempts(start, noisy, search, SolverKind::Mcts, 1, AttemptSelection::ValueHead, 1);
  ASSERT_EQ(r.attempts.size(), 1u);
  const auto game = play_game(start, noisy, search);
  EXPECT_TRUE(std::ranges::equal(r.best().final_state.assignment(), game.final_state.assignment()));
}

TEST(Attempts, DistinctOrdersAndSelectionRules) {
  const auto inst = make_synthetic_instance(kThree, 6);
  NoisyEvaluator noisy(0.3, 3);
  SearchConfig search;
  search.n_visits = 30;
  const GameState start = sample_partial_state(inst, {6, true, false}, 2);  // 3! = 6 orders
  const auto all = solve_with_attempts(start, noisy, search, SolverKind::Mcts, 6, AttemptSelection::GroundTruthBest, 4);
  std::set<std::vector<int>> orders;
  for (const auto& a : all.attempts) orders.emplace(a.final_state.order().begin(), a.final_state.order().end());
  EXPECT_EQ(orders.size(), 6u);

  double previous = -1.0;
  for (int k = 1; k <= 6; ++k) {
    const auto best = solve_with_attempts(start, noisy, search, SolverKind::Mcts, k, AttemptSelection::GroundTruthBest, 4);
    const auto worst =
        solve_with_attempts(start, noisy, search, SolverKind::Mcts, k, AttemptSelection::GroundTruthWorst, 4);
    const auto value = solve_with_attempts(start, noisy, search, SolverKind::Mcts, k, AttemptSelection::ValueHead, 4);
    for (const auto& a : best.attempts) EXPECT_GE(best.best().metrics.patch_wise, a.metrics.patch_wise);
    for (const auto& a : worst.attempts) EXPECT_LE(worst.best().metrics.patch_wise, a.metrics.patch_wise);
    for (const auto& a : value.attempts) EXPECT_GE(value.best().value, a.value);
    EXPECT_LE(value.best().metrics.patch_wise, best.best().metrics.patch_wise);
    EXPECT_GE(best.best().metrics.patch_wise, previous);
    previous = best.best().metrics.patch_wise;
  }
  // More attempts than orders: repeats are allowed.
  EXPECT_EQ(solve_with_attempts(start, noisy, search, SolverKind::GreedyPolicy, 9, AttemptSelection::ValueHead, 4)
                .attempts.size(),
            9u);
}

TEST(Benchmark, OracleSolvesEverything) {
  ExperimentConfig cfg = small_config();
  cfg.search.reward_mode = RewardMode::GroundTruth;
  const auto r = run_benchmark(cfg);
  EXPECT_DOUBLE_EQ(r.mean_puzzle_wise, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_patch_wise, 1.0);
  ASSERT_EQ(r.histogram.size(), 10u);
  EXPECT_EQ(r.histogram[9], 12);
  EXPECT_EQ(r.puzzles.size(), 12u);
}

TEST(Benchmark, ReportSanityAndWorkerIndependence) {
  ExperimentConfig cfg = small_config();
  cfg.evaluator.base = "noisy";
  cfg.hints = 2;
  const auto one = run_benchmark(cfg);
  int total = 0, solved = 0;
  for (int h : one.histogram) total += h;
  for (const auto& p : one.puzzles) solved += p.metrics.puzzle_wise;
  EXPECT_EQ(total, cfg.puzzles);
  EXPECT_EQ(one.histogram[9], solved);
  EXPECT_GE(one.mean_patch_wise, 0.0);
  EXPECT_LE(one.mean_patch_wise, 1.0);
  cfg.workers = 3;
  const auto three = run_benchmark(cfg);
  auto results = [](const BenchmarkReport& r) {
    auto j = report_json(r);
    j.erase("config");
    return j.dump();
  };
  EXPECT_EQ(results(one), results(three));
  const std::string table = report_table(one);
  EXPECT_NE(table.find("patch-wise"), std::string::npos);
  EXPECT_NE(table.find("well-placed histogram"), std::string::npos);
}

TEST(Benchmark, WritesReportsAndRenders) {
  const auto dir = fresh_dir("alphazzle_bench");
  ExperimentConfig cfg = small_config();
  cfg.puzzles = 2;
  cfg.report_path = (dir / "report.json").string();
  cfg.table_path = (dir / "table.txt").string();
  cfg.render_dir = (dir / "renders").string();
  const auto r = run_benchmark(cfg);
  write_report(r, cfg);
  std::ifstream in(cfg.report_path);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["puzzles"].size(), 2u);
  EXPECT_EQ(j["config"]["n_visits"], "60");
  EXPECT_TRUE(fs::exists(dir / "table.txt"));
  EXPECT_TRUE(fs::exists(dir / "renders" / "puzzle_00001.png"));
  EXPECT_TRUE(fs::exists(dir / "renders" / "puzzle_00001_truth.png"));
  fs::remove_all(dir);
}

TEST(Benchmark, EmptyDatasetFails) {
  const auto dir = fresh_dir("alphazzle_empty");
  ExperimentConfig cfg = small_config();
  cfg.dataset = dir.string();
  EXPECT_EQ(kind_of([&] { run_benchmark(cfg); }), ErrorKind::DatasetEmpty);
  fs::remove_all(dir);
}

TEST(Samples, PretrainContracts) {
  const auto inst = make_synthetic_instance(kThree, 7);
  const auto samples = pretrain_samples(inst, 40, 3);
  ASSERT_EQ(samples.size(), 80u);
  int flawed_value = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto d = decode_state(s.state);
    int wrong = 0;
    for (int pos = 0; pos < 9; ++pos) wrong += d.assignment[pos] != kEmpty && d.assignment[pos] != inst->solution[pos];
    ASSERT_GE(s.target_position, 0);
    ASSERT_LT(s.target_position, 9);
    ASSERT_EQ(s.source, SampleSource::PretrainSampler);
    if (s.head == "policy") {
      EXPECT_EQ(wrong, 0);
      EXPECT_EQ(s.target_position, inst->solution_position_of(d.next_patch));
    } else {
      EXPECT_EQ(s.head, "value");
      EXPECT_EQ(wrong > 0, (i - 40) % 2 == 1);
      EXPECT_EQ(s.target_value == 0.0, wrong > 0);
      flawed_value += wrong > 0;
    }
  }
  EXPECT_EQ(flawed_value, 20);
}

TEST(Samples, MctsVisitedFollowValueTargets) {
  const auto inst = make_synthetic_instance(kThree, 8);
  OracleEvaluator oracle;
  SearchConfig search;
  search.n_visits = 50;
  const auto game = play_game(inst, PatchOrder::identity(9), oracle, search);
  const auto samples = samples_from_game(game);
  ASSERT_EQ(samples.size(), 9u);
  for (std::size_t t = 0; t < samples.size(); ++t) {
    EXPECT_EQ(samples[t].source, SampleSource::MctsVisited);
    EXPECT_DOUBLE_EQ(samples[t].target_value, 0.5 + 0.5 * static_cast<double>(t) / 8.0);
  }
  EXPECT_DOUBLE_EQ(samples.back().target_value, 1.0);
}

TEST(Samples, ExportRoundTrip) {
  const auto dir = fresh_dir("alphazzle_samples");
  const auto inst = make_synthetic_instance(kThree, 9);
  auto samples = pretrain_samples(inst, 5, 1);
  NoisyEvaluator noisy(0.3, 1);
  SearchConfig search;
  search.n_visits = 20;
  const auto game = samples_from_game(play_game(inst, PatchOrder::identity(9), noisy, search));
  samples.insert(samples.end(), game.begin(), game.end());
  export_samples(samples, dir / "s.jsonl");
  EXPECT_EQ(load_samples(dir / "s.jsonl"), samples);
  std::ofstream(dir / "bad.jsonl") << "{\"source\": 3}\n";
  EXPECT_EQ(kind_of([&] { load_samples(dir / "bad.jsonl"); }), ErrorKind::Io);
  fs::remove_all(dir);
}
