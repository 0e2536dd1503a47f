#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>

#include "alphazzle/mcts.hpp"

using namespace alphazzle;

namespace {

const PuzzleSpec kTwo{4, 2, 1, 3};
const PuzzleSpec kThree{6, 3, 1, 3};

class CountingOracle final : public Evaluator {
 public:
  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    calls += static_cast<int>(states.size());
    for (const auto& s : states)
      if (s.is_terminal()) ++terminal_calls;
    return OracleEvaluator().evaluate(states);
  }
  std::string name() const override { return "counting"; }
  int calls = 0;
  int terminal_calls = 0;
};

SearchNode fixture_node(int visits, std::vector<Edge> edges) {
  const auto inst = make_synthetic_instance(kTwo, 1);
  SearchNode n{initial_state(inst, PatchOrder::identity(4)), std::move(edges), visits, false, 0.0};
  return n;
}

Edge edge(int position, double prior, int visits, double q, double q_max = 0.0, double sum_sq = 0.0) {
  Edge e;
  e.position = position;
  e.prior = prior;
  e.visits = visits;
  e.q = q;
  e.q_max = q_max;
  e.sum_sq = sum_sq;
  return e;
}

// Walks the tree and checks the node/edge invariants.
void check_tree(const SearchTree& tree) {
  for (int i = 0; i < tree.size(); ++i) {
    const SearchNode& n = tree.node(i);
    if (n.terminal) continue;
    if (n.visits == 0) continue;
    ASSERT_EQ(n.visits, n.sum_edge_visits() + 1) << "node " << i;
    for (const Edge& e : n.edges) {
      ASSERT_GE(e.q, 0.0);
      ASSERT_LE(e.q, 1.0);
      ASSERT_LE(e.q_max, 1.0);
      ASSERT_GE(e.sigma(), 0.0);
      if (e.visits > 0) {
        ASSERT_GE(e.q_max + 1e-12, e.q);
      }
    }
  }
}

std::vector<PatchOrder> all_orders(int f) {
  std::vector<PatchOrder> out;
  PatchOrder o = PatchOrder::identity(f);
  do out.push_back(o);
  while (std::next_permutation(o.order.begin(), o.order.end()));
  return out;
}

}  // namespace

TEST(SelectScore, PuctUnvisited) {
  const SearchNode n = fixture_node(1, {edge(0, 0.25, 0, 0.0)});
  SearchConfig cfg;
  cfg.selection = Selection::Puct;
  cfg.c = 1.0;
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), 0.25, 1e-12);
}

TEST(SelectScore, PuctVisited) {
  const SearchNode n = fixture_node(10, {edge(0, 0.4, 3, 0.6)});
  SearchConfig cfg;
  cfg.c = 2.0;
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), 0.6 + 2.0 * 0.4 * std::sqrt(10.0) / 4.0, 1e-12);
}

TEST(SelectScore, Uct) {
  const SearchNode n = fixture_node(2, {edge(0, 0.1, 1, 0.5), edge(1, 0.9, 0, 0.0)});
  SearchConfig cfg;
  cfg.selection = Selection::Uct;
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), 0.5 + std::sqrt(std::log(2.0)), 1e-12);
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), 1.3326, 1e-4);
  EXPECT_TRUE(std::isinf(select_score(n, n.edges[1], cfg)));
}

TEST(SelectScore, SpMcts) {
  // Values backed up: 0.2, 0.6 -> Q 0.4, Q_max 0.6, sigma 0.2.
  const SearchNode n = fixture_node(5, {edge(0, 0.3, 2, 0.4, 0.6, 0.04 + 0.36)});
  SearchConfig cfg;
  cfg.selection = Selection::SpMcts;
  cfg.c = 0.5;
  cfg.w = 0.02;
  const double uct = 0.4 + 0.5 * std::sqrt(std::log(5.0) / 2.0);
  EXPECT_NEAR(n.edges[0].sigma(), 0.2, 1e-12);
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), uct + 0.02 * 0.6 + 0.2, 1e-12);
}

TEST(SelectScore, SpMctsDegeneratesToUct) {
  Rng rng(3);
  SearchConfig sp, uct;
  sp.selection = Selection::SpMcts;
  sp.w = 0.0;
  uct.selection = Selection::Uct;
  for (int trial = 0; trial < 200; ++trial) {
    const double q = static_cast<double>(rng.below(65)) / 64.0;  // exact squares
    const int visits = 1 + static_cast<int>(rng.below(50));
    // sigma = 0: every backed-up value equals q.
    const SearchNode n = fixture_node(visits + 1 + static_cast<int>(rng.below(20)),
                                      {edge(0, rng.uniform(), visits, q, q, visits * q * q)});
    ASSERT_EQ(select_score(n, n.edges[0], sp), select_score(n, n.edges[0], uct));
  }
}

TEST(SelectScore, SpMix) {
  const SearchNode n = fixture_node(7, {edge(0, 0.3, 3, 0.2, 0.9)});
  SearchConfig cfg;
  cfg.selection = Selection::SpMix;
  cfg.lambda = 0.25;
  cfg.c = 1.5;
  EXPECT_NEAR(select_score(n, n.edges[0], cfg), 0.75 * 0.2 + 0.25 * 0.9 + 1.5 * std::sqrt(std::log(7.0) / 3.0),
              1e-12);
}

TEST(SelectScore, ArgmaxInvariantUnderScalingC) {
  const SearchNode n = fixture_node(13, {edge(0, 0.25, 3, 0.3), edge(1, 0.25, 3, 0.7), edge(2, 0.25, 3, 0.5)});
  for (Selection sel : {Selection::Uct, Selection::Puct, Selection::SpMcts}) {
    for (double c : {0.1, 1.0, 7.5}) {
      SearchConfig cfg;
      cfg.selection = sel;
      cfg.c = c;
      cfg.w = 0.0;
      int best = 0;
      for (int i = 1; i < 3; ++i)
        if (select_score(n, n.edges[i], cfg) > select_score(n, n.edges[best], cfg)) best = i;
      EXPECT_EQ(best, 1);
    }
  }
}

TEST(Backpropagate, Examples) {
  const auto inst = make_synthetic_instance(kTwo, 1);
  SearchTree tree(initial_state(inst, PatchOrder::identity(4)));
  tree.root().visits = 3;
  tree.root().edges = {edge(0, 0.5, 2, 0.6, 0.8, 0.36 + 0.36)};
  const PathStep step{0, 0};
  backpropagate(tree, std::span(&step, 1), 0.9);
  EXPECT_NEAR(tree.root().edges[0].q, 0.7, 1e-12);
  EXPECT_EQ(tree.root().edges[0].visits, 3);
  EXPECT_EQ(tree.root().visits, 4);
  EXPECT_DOUBLE_EQ(tree.root().edges[0].q_max, 0.9);

  std::vector<double> values{0.2, 0.4, 0.9};
  do {
    tree.root().visits = 1;
    tree.root().edges = {edge(0, 0.5, 0, 0.0)};
    for (double v : values) backpropagate(tree, std::span(&step, 1), v);
    EXPECT_NEAR(tree.root().edges[0].q, 0.5, 1e-12);
    EXPECT_DOUBLE_EQ(tree.root().edges[0].q_max, 0.9);
  } while (std::next_permutation(values.begin(), values.end()));

  tree.root().edges = {edge(0, 0.5, 0, 0.0)};
  for (int k = 0; k < 3; ++k) backpropagate(tree, std::span(&step, 1), 0.5);
  EXPECT_NEAR(tree.root().edges[0].sigma(), 0.0, 1e-12);
}

TEST(Backpropagate, FirstVisitOverwrites) {
  const auto inst = make_synthetic_instance(kTwo, 1);
  SearchTree tree(initial_state(inst, PatchOrder::identity(4)));
  tree.root().visits = 1;
  tree.root().edges = {edge(0, 0.5, 0, 0.0, 0.0)};
  const PathStep step{0, 0};
  backpropagate(tree, std::span(&step, 1), 0.3);
  EXPECT_EQ(tree.root().edges[0].q, 0.3);
  EXPECT_EQ(tree.root().edges[0].q_max, 0.3);
  EXPECT_EQ(tree.root().edges[0].visits, 1);
}

TEST(Search, BudgetIsExact) {
  const auto inst = make_synthetic_instance(kThree, 2);
  NoisyEvaluator noisy(0.3, 5);
  for (Selection sel : {Selection::Puct, Selection::Uct, Selection::SpMcts, Selection::SpMix}) {
    for (RewardMode mode : {RewardMode::GroundTruth, RewardMode::Predicted, RewardMode::ConstantOne}) {
      for (int budget : {1, 2, 17, 300}) {
        SearchConfig cfg;
        cfg.selection = sel;
        cfg.reward_mode = mode;
        cfg.n_visits = budget;
        SearchTree tree(sample_partial_state(inst, {5, true, false}, budget));
        const auto r = Searcher(noisy, cfg).run(tree);
        ASSERT_EQ(tree.root().sum_edge_visits(), budget - 1);
        ASSERT_EQ(std::accumulate(r.visits.begin(), r.visits.end(), 0), budget - 1);
        ASSERT_EQ(r.stats.iterations, budget);
        check_tree(tree);
      }
    }
  }
}

TEST(Search, SingleVisitPolicyIsOneHot) {
  const auto inst = make_synthetic_instance(kThree, 3);
  SearchConfig cfg;
  cfg.n_visits = 1;
  const GameState root = initial_state(inst, PatchOrder{{5, 0, 1, 2, 3, 4, 6, 7, 8}});
  const auto r = run_search(root, *std::make_shared<OracleEvaluator>(), cfg);
  EXPECT_EQ(std::count_if(r.policy.begin(), r.policy.end(), [](double x) { return x != 0.0; }), 1);
  EXPECT_EQ(r.chosen.position, 5);  // prior argmax
}

TEST(Search, TiesGoToLowestPosition) {
  const auto inst = make_synthetic_instance(kThree, 3);
  DeactivatedEvaluator flat(nullptr, true, 0.5);
  SearchConfig cfg;
  cfg.n_visits = 1;
  GameState s = initial_state(inst, PatchOrder::identity(9));
  s = apply_action(s, Action{0});
  EXPECT_EQ(run_search(s, flat, cfg).chosen.position, 1);
  cfg.n_visits = 9;
  cfg.action_choice = ActionChoice::MeanValue;
  EXPECT_EQ(run_search(s, flat, cfg).chosen.position, 1);
}

TEST(Search, TerminalRoot) {
  const auto inst = make_synthetic_instance(kTwo, 3);
  GameState s = initial_state(inst, PatchOrder::identity(4));
  for (int k = 0; k < 4; ++k) s = apply_action(s, Action{k});
  OracleEvaluator oracle;
  try {
    run_search(s, oracle, SearchConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CalledOnTerminal);
  }
  SearchConfig bad;
  bad.lambda = 2.0;
  EXPECT_THROW(Searcher(oracle, bad), Error);
}

TEST(Search, OracleTwoByTwoPicksSolutionForEveryOrder) {
  OracleEvaluator oracle;
  SearchConfig cfg;
  cfg.n_visits = 50;
  cfg.reward_mode = RewardMode::GroundTruth;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto inst = make_synthetic_instance(kTwo, seed);
    for (const auto& order : all_orders(4)) {
      const auto r = run_search(initial_state(inst, order), oracle, cfg);
      EXPECT_EQ(r.chosen.position, inst->solution_position_of(order.order[0]));
    }
  }
}

TEST(Search, UninformedTwoByTwoEnumeratesTheTree) {
  // Brute-force count of the tree: 1 + 4 + 4*3 + 4*3*2 + 4!.
  int nodes = 0;
  std::function<void(int)> count = [&](int empty) {
    ++nodes;
    for (int k = 0; k < empty; ++k) count(empty - 1);
  };
  count(4);
  ASSERT_EQ(nodes, 65);

  DeactivatedEvaluator flat(nullptr, true, 0.5);
  SearchConfig cfg;
  cfg.use_policy = false;
  cfg.midgame_value = false;
  cfg.reward_mode = RewardMode::GroundTruth;
  cfg.selection = Selection::Uct;
  cfg.action_choice = ActionChoice::MeanValue;
  cfg.n_visits = 1000;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = make_synthetic_instance(kTwo, seed);
    Rng rng(seed);
    const GameState root = initial_state(inst, PatchOrder::random(4, rng));
    SearchTree tree(root);
    const auto r = Searcher(flat, cfg).run(tree);
    EXPECT_EQ(tree.size(), nodes);
    check_tree(tree);

    // Follow the solution down: Q_max is 1 along the path and the last edge
    // only ever saw the solved reward.
    int at = 0;
    while (!tree.node(at).terminal) {
      const SearchNode& n = tree.node(at);
      const int target = inst->solution_position_of(*n.state.next_patch());
      const auto it = std::find_if(n.edges.begin(), n.edges.end(), [&](const Edge& e) { return e.position == target; });
      ASSERT_NE(it, n.edges.end());
      EXPECT_DOUBLE_EQ(it->q_max, 1.0);
      if (n.edges.size() == 1) {
        EXPECT_DOUBLE_EQ(it->q, 1.0);
      }
      at = it->child;
    }
    EXPECT_EQ(ground_truth_reward(tree.node(at).state), 1);
    EXPECT_EQ(r.chosen.position, inst->solution_position_of(root.order()[0]));
  }
}

TEST(Search, PredictedModeEvaluatesEachTerminalOnce) {
  const auto inst = make_synthetic_instance(kTwo, 4);
  CountingOracle ev;
  SearchConfig cfg;
  cfg.n_visits = 400;
  cfg.selection = Selection::Uct;
  SearchTree tree(initial_state(inst, PatchOrder::identity(4)));
  const auto r = Searcher(ev, cfg).run(tree);
  int terminals = 0;
  for (int i = 0; i < tree.size(); ++i) terminals += tree.node(i).terminal;
  EXPECT_GT(terminals, 0);
  EXPECT_EQ(ev.calls, tree.size());
  EXPECT_EQ(ev.terminal_calls, terminals);
  EXPECT_GT(r.stats.terminal_revisits, 0);

  CountingOracle gt;
  cfg.reward_mode = RewardMode::GroundTruth;
  SearchTree tree2(initial_state(inst, PatchOrder::identity(4)));
  Searcher(gt, cfg).run(tree2);
  EXPECT_EQ(gt.terminal_calls, 0);
}

TEST(Search, ConstantOneRewardsEveryTerminal) {
  const auto inst = make_synthetic_instance(kTwo, 4);
  DeactivatedEvaluator flat(nullptr, true, 0.0);
  SearchConfig cfg;
  cfg.reward_mode = RewardMode::ConstantOne;
  cfg.n_visits = 200;
  SearchTree tree(apply_action(apply_action(initial_state(inst, PatchOrder::identity(4)), Action{3}), Action{0}));
  Searcher(flat, cfg).run(tree);
  for (int i = 0; i < tree.size(); ++i)
    if (tree.node(i).terminal) {
      EXPECT_EQ(tree.node(i).leaf_value, 1.0);
    }
}

TEST(PlayGame, OracleSolvesAndRecordsTargets) {
  OracleEvaluator oracle;
  SearchConfig cfg;
  cfg.n_visits = 100;
  cfg.reward_mode = RewardMode::GroundTruth;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = make_synthetic_instance(kThree, seed);
    Rng rng(seed);
    const auto game = play_game(inst, PatchOrder::random(9, rng), oracle, cfg);
    EXPECT_EQ(ground_truth_reward(game.final_state), 1);
    ASSERT_EQ(game.moves.size(), 9u);
    for (std::size_t t = 0; t < game.moves.size(); ++t) {
      const auto& m = game.moves[t];
      EXPECT_EQ(m.target_position, m.chosen.position);
      EXPECT_DOUBLE_EQ(m.value_target, 0.5 + 0.5 * static_cast<double>(t) / 8.0);
      EXPECT_NEAR(std::accumulate(m.policy.begin(), m.policy.end(), 0.0), 1.0, 1e-12);
    }
  }
}

TEST(PlayGame, SubtreeReuseAlsoSolves) {
  OracleEvaluator oracle;
  SearchConfig cfg;
  cfg.n_visits = 60;
  cfg.tree_per_move = false;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = make_synthetic_instance(kThree, seed);
    Rng rng(seed);
    EXPECT_EQ(ground_truth_reward(play_game(inst, PatchOrder::random(9, rng), oracle, cfg).final_state), 1);
  }
}

TEST(PlayGame, SubtreeKeepsStatistics) {
  const auto inst = make_synthetic_instance(kThree, 6);
  OracleEvaluator oracle;
  SearchConfig cfg;
  cfg.n_visits = 200;
  SearchTree tree(initial_state(inst, PatchOrder::identity(9)));
  const auto r = Searcher(oracle, cfg).run(tree);
  const auto& e = *std::find_if(tree.root().edges.begin(), tree.root().edges.end(),
                                [&](const Edge& x) { return x.position == r.chosen.position; });
  const SearchTree sub = tree.subtree(r.chosen.position);
  EXPECT_EQ(sub.root().visits, tree.node(e.child).visits);
  EXPECT_TRUE(sub.root().state == tree.node(e.child).state);
  check_tree(sub);
}

TEST(PlayGame, UninformedPlayIsRandomPlacement) {
  DeactivatedEvaluator flat(nullptr, true, 0.5);
  SearchConfig cfg;
  cfg.n_visits = 10;
  cfg.reward_mode = RewardMode::ConstantOne;
  double total = 0.0;
  constexpr int kPuzzles = 500;
  for (int i = 0; i < kPuzzles; ++i) {
    const auto inst = make_synthetic_instance(kThree, 1000 + i);
    Rng rng(i);
    total += compute_metrics(play_game(inst, PatchOrder::random(9, rng), flat, cfg).final_state).patch_wise;
  }
  EXPECT_NEAR(total / kPuzzles, 1.0 / 9.0, 0.03);
}

TEST(PlayGame, Deterministic) {
  const auto inst = make_synthetic_instance(kThree, 8);
  NoisyEvaluator noisy(0.3, 1);
  SearchConfig cfg;
  cfg.n_visits = 150;
  const auto order = PatchOrder{{3, 1, 4, 0, 5, 8, 2, 6, 7}};
  const auto a = play_game(inst, order, noisy, cfg);
  const auto b = play_game(inst, order, noisy, cfg);
  EXPECT_TRUE(a.final_state == b.final_state);
  for (std::size_t t = 0; t < a.moves.size(); ++t) {
    EXPECT_EQ(a.moves[t].visits, b.moves[t].visits);
    EXPECT_EQ(a.moves[t].policy, b.moves[t].policy);
  }
}
