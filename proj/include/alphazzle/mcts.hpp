#pragma once

// Single-player MCTS with one-node expansion, evaluator-driven leaf values
// and configurable terminal reward resolution.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/evaluators.hpp"
#include "alphazzle/puzzle_env.hpp"

namespace alphazzle {

enum class Selection { Uct, Puct, SpMcts, SpMix };
enum class RewardMode { GroundTruth, Predicted, ConstantOne };
enum class ActionChoice { VisitCount, MeanValue };

inline const char* to_string(Selection s) {
  switch (s) {
    case Selection::Uct: return "uct";
    case Selection::Puct: return "puct";
    case Selection::SpMcts: return "sp_mcts";
    case Selection::SpMix: return "sp_mix";
  }
  return "?";
}

inline const char* to_string(RewardMode m) {
  switch (m) {
    case RewardMode::GroundTruth: return "ground_truth";
    case RewardMode::Predicted: return "predicted";
    case RewardMode::ConstantOne: return "constant_one";
  }
  return "?";
}

inline const char* to_string(ActionChoice a) { return a == ActionChoice::VisitCount ? "visit_count" : "mean_value"; }

struct SearchConfig {
  int n_visits = 1000;
  double c = 1.0;
  Selection selection = Selection::Puct;
  double w = 0.02;      // weight of Q_max in SpMcts
  double lambda = 0.5;  // Q / Q_max mix in SpMix
  RewardMode reward_mode = RewardMode::Predicted;
  bool midgame_value = true;
  double midgame_constant = 1.0;  // leaf value when midgame_value is off
  bool use_policy = true;
  ActionChoice action_choice = ActionChoice::VisitCount;
  bool tree_per_move = true;

  void validate() const {
    if (n_visits < 1 || c < 0.0 || w < 0.0 || lambda < 0.0 || lambda > 1.0 || midgame_constant < 0.0 ||
        midgame_constant > 1.0) {
      throw Error(ErrorKind::Config, "search config out of range (n_visits>=1, c>=0, w>=0, lambda in [0,1])");
    }
  }
};

/// Statistics of one action out of a node.
struct Edge {
  int position = 0;
  double prior = 0.0;
  int visits = 0;
  double q = 0.0;
  double q_max = 0.0;
  double sum_sq = 0.0;
  int child = -1;

  double sigma() const {
    if (visits == 0) return 0.0;
    return std::sqrt(std::max(0.0, sum_sq / visits - q * q));
  }
};

struct SearchNode {
  GameState state;
  std::vector<Edge> edges;  // ascending position
  int visits = 0;
  bool terminal = false;
  double leaf_value = 0.0;  // value backed up when the node was created

  int sum_edge_visits() const {
    int total = 0;
    for (const auto& e : edges) total += e.visits;
    return total;
  }
};

/// Score used to pick an edge during selection. Unvisited edges score +inf
/// under the UCT family; under PUCT their Q is taken as 0.
inline double select_score(const SearchNode& node, const Edge& edge, const SearchConfig& cfg) {
  const double n_parent = static_cast<double>(node.visits);
  if (cfg.selection == Selection::Puct) {
    return edge.q + cfg.c * edge.prior * std::sqrt(n_parent) / (1.0 + edge.visits);
  }
  if (edge.visits == 0) return std::numeric_limits<double>::infinity();
  const double explore = cfg.c * std::sqrt(std::log(n_parent) / edge.visits);
  switch (cfg.selection) {
    case Selection::Uct: return edge.q + explore;
    case Selection::SpMcts: return edge.q + explore + cfg.w * edge.q_max + edge.sigma();
    case Selection::SpMix: return (1.0 - cfg.lambda) * edge.q + cfg.lambda * edge.q_max + explore;
    case Selection::Puct: break;
  }
  return edge.q;
}

/// One step of a descent: the node and the index of the edge taken out of it.
struct PathStep {
  int node = 0;
  int edge = 0;
};

/// Search tree stored as an index arena. Node 0 is the root.
class SearchTree {
 public:
  explicit SearchTree(GameState root) { nodes_.push_back(make_node(std::move(root))); }

  SearchNode& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  const SearchNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  SearchNode& root() { return nodes_.front(); }
  const SearchNode& root() const { return nodes_.front(); }
  int size() const { return static_cast<int>(nodes_.size()); }
  bool root_expanded() const { return root().visits > 0; }

  int add_node(GameState state) {
    nodes_.push_back(make_node(std::move(state)));
    return size() - 1;
  }

  /// Subtree under the root's edge at `position`, re-rooted.
  SearchTree subtree(int position) const {
    const auto& edges = root().edges;
    const auto it = std::find_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.position == position; });
    if (it == edges.end() || it->child < 0) {
      return SearchTree(apply_action(root().state, Action{position}));
    }
    SearchTree out;
    std::vector<int> remap(nodes_.size(), -1);
    std::vector<int> stack{it->child};
    std::vector<int> order;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      remap[static_cast<std::size_t>(i)] = static_cast<int>(order.size());
      order.push_back(i);
      for (const auto& e : node(i).edges)
        if (e.child >= 0) stack.push_back(e.child);
    }
    for (int i : order) {
      SearchNode copy = node(i);
      for (auto& e : copy.edges)
        if (e.child >= 0) e.child = remap[static_cast<std::size_t>(e.child)];
      out.nodes_.push_back(std::move(copy));
    }
    return out;
  }

 private:
  SearchTree() = default;

  static SearchNode make_node(GameState state) {
    const bool terminal = state.is_terminal();
    return SearchNode{std::move(state), {}, 0, terminal, 0.0};
  }

  std::vector<SearchNode> nodes_;
};

/// Incremental mean/max/second-moment update along a descent path.
inline void backpropagate(SearchTree& tree, std::span<const PathStep> path, double value) {
  for (const PathStep& step : path) {
    SearchNode& n = tree.node(step.node);
    Edge& e = n.edges[static_cast<std::size_t>(step.edge)];
    if (e.visits == 0) {
      e.q = value;
      e.q_max = value;
      e.visits = 1;
    } else {
      e.q = (e.visits * e.q + value) / (e.visits + 1);
      e.q_max = std::max(e.q_max, value);
      ++e.visits;
    }
    e.sum_sq += value * value;
    ++n.visits;
  }
}

struct SearchStats {
  int iterations = 0;
  int nodes_created = 0;
  int evaluator_calls = 0;
  int terminal_revisits = 0;
  int max_depth = 0;
};

struct SearchResult {
  std::vector<int> visits;     // N(a|root) per position
  std::vector<double> q;       // Q(a|root) per position, 0 when unvisited
  std::vector<double> policy;  // visit distribution (pi_MCTS)
  Action chosen;
  SearchStats stats;
};

namespace detail {

inline int argmax_edge(const std::vector<Edge>& edges, auto&& key) {
  int best = -1;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(edges.size()); ++i) {
    const auto k = key(edges[static_cast<std::size_t>(i)]);
    if (!k) continue;
    if (best < 0 || *k > best_value) {
      best = i;
      best_value = *k;
    }
  }
  return best;
}

}  // namespace detail

/// Runs one search from the tree's root. The first visit of a fresh root
/// evaluates and expands it; each remaining visit performs one
/// select / expand-one / evaluate / backpropagate iteration.
class Searcher {
 public:
  Searcher(Evaluator& evaluator, const SearchConfig& cfg) : evaluator_(evaluator), cfg_(cfg) { cfg_.validate(); }

  SearchResult run(SearchTree& tree) {
    if (tree.root().terminal) throw Error(ErrorKind::CalledOnTerminal, "search started from a terminal root");
    stats_ = {};
    int budget = cfg_.n_visits;
    if (!tree.root_expanded()) {
      expand(tree, 0);
      tree.root().visits = 1;
      ++stats_.iterations;
      --budget;
    }
    std::vector<PathStep> path;
    for (int i = 0; i < budget; ++i) {
      path.clear();
      const double value = descend(tree, path);
      backpropagate(tree, path, value);
      ++stats_.iterations;
      stats_.max_depth = std::max(stats_.max_depth, static_cast<int>(path.size()));
    }
    return summarize(tree);
  }

 private:
  double descend(SearchTree& tree, std::vector<PathStep>& path) {
    int current = 0;
    for (;;) {
      SearchNode& n = tree.node(current);
      if (n.terminal) {
        ++n.visits;
        ++stats_.terminal_revisits;
        return n.leaf_value;
      }
      const int edge_index = pick_edge(n);
      path.push_back({current, edge_index});
      const int child = n.edges[static_cast<std::size_t>(edge_index)].child;
      if (child >= 0) {
        current = child;
        continue;
      }
      // Copy before add_node: growing the arena invalidates `n`.
      GameState next = apply_action(n.state, Action{n.edges[static_cast<std::size_t>(edge_index)].position});
      const int created = tree.add_node(std::move(next));
      tree.node(current).edges[static_cast<std::size_t>(edge_index)].child = created;
      ++stats_.nodes_created;
      return expand(tree, created);
    }
  }

  int pick_edge(const SearchNode& n) const {
    return detail::argmax_edge(n.edges, [&](const Edge& e) { return std::optional(select_score(n, e, cfg_)); });
  }

  /// Evaluates a freshly created node, creates its edges and returns the
  /// value to back up.
  double expand(SearchTree& tree, int index) {
    SearchNode& n = tree.node(index);
    n.visits = 1;
    if (n.terminal) {
      switch (cfg_.reward_mode) {
        case RewardMode::GroundTruth: n.leaf_value = ground_truth_reward(n.state); break;
        case RewardMode::ConstantOne: n.leaf_value = 1.0; break;
        case RewardMode::Predicted:
          n.leaf_value = evaluator_.evaluate(n.state).value;
          ++stats_.evaluator_calls;
          break;
      }
      return n.leaf_value;
    }
    const auto legal = legal_actions(n.state);
    std::vector<double> priors;
    double value = cfg_.midgame_constant;
    if (cfg_.use_policy || cfg_.midgame_value) {
      const EvaluatorVerdict verdict = evaluator_.evaluate(n.state);
      ++stats_.evaluator_calls;
      if (cfg_.use_policy) priors = mask_and_renormalize(verdict.policy, legal);
      if (cfg_.midgame_value) value = verdict.value;
    }
    n.edges.reserve(legal.size());
    for (const Action& a : legal) {
      Edge e;
      e.position = a.position;
      e.prior = priors.empty() ? 1.0 / static_cast<double>(legal.size()) : priors[static_cast<std::size_t>(a.position)];
      n.edges.push_back(e);
    }
    n.leaf_value = value;
    return value;
  }

  SearchResult summarize(const SearchTree& tree) const {
    const SearchNode& root = tree.root();
    const int p = root.state.spec().positions();
    SearchResult r;
    r.visits.assign(static_cast<std::size_t>(p), 0);
    r.q.assign(static_cast<std::size_t>(p), 0.0);
    r.policy.assign(static_cast<std::size_t>(p), 0.0);
    for (const Edge& e : root.edges) {
      r.visits[static_cast<std::size_t>(e.position)] = e.visits;
      r.q[static_cast<std::size_t>(e.position)] = e.q;
    }
    int best = -1;
    if (cfg_.action_choice == ActionChoice::VisitCount) {
      best = detail::argmax_edge(root.edges, [](const Edge& e) {
        return e.visits > 0 ? std::optional<double>(e.visits) : std::nullopt;
      });
    } else {
      best = detail::argmax_edge(root.edges,
                                 [](const Edge& e) { return e.visits > 0 ? std::optional(e.q) : std::nullopt; });
    }
    if (best < 0) {
      // No edge visited (budget of one): fall back on the prior.
      best = detail::argmax_edge(root.edges, [](const Edge& e) { return std::optional(e.prior); });
    }
    r.chosen = Action{root.edges[static_cast<std::size_t>(best)].position};
    const int total = root.sum_edge_visits();
    if (total > 0) {
      for (const Edge& e : root.edges) r.policy[static_cast<std::size_t>(e.position)] = static_cast<double>(e.visits) / total;
    } else {
      r.policy[static_cast<std::size_t>(r.chosen.position)] = 1.0;
    }
    r.stats = stats_;
    return r;
  }

  Evaluator& evaluator_;
  SearchConfig cfg_;
  SearchStats stats_;
};

inline SearchResult run_search(const GameState& root, Evaluator& evaluator, const SearchConfig& cfg) {
  SearchTree tree(root);
  return Searcher(evaluator, cfg).run(tree);
}

struct MoveRecord {
  GameState state;  // before the move
  std::vector<double> policy;
  std::vector<int> visits;
  Action chosen;
  int target_position = 0;  // ground-truth position of the patch placed
  double value_target = 0.0;
};

struct GameRecord {
  GameState final_state;
  std::vector<MoveRecord> moves;
};

/// Plays from `start` to the end of the game, one search per move.
inline GameRecord play_game(const GameState& start, Evaluator& evaluator, const SearchConfig& cfg) {
  Searcher searcher(evaluator, cfg);
  std::vector<MoveRecord> moves;
  GameState state = start;
  std::optional<SearchTree> tree;
  while (!state.is_terminal()) {
    if (!tree) tree.emplace(state);
    SearchResult result = searcher.run(*tree);
    const int next_patch = *state.next_patch();
    moves.push_back(MoveRecord{state, std::move(result.policy), std::move(result.visits), result.chosen,
                               state.instance().solution_position_of(next_patch), value_target(state)});
    GameState next = apply_action(state, result.chosen);
    if (cfg.tree_per_move || next.is_terminal()) {
      tree.reset();
    } else {
      tree.emplace(tree->subtree(result.chosen.position));
    }
    state = std::move(next);
  }
  return GameRecord{std::move(state), std::move(moves)};
}

inline GameRecord play_game(InstancePtr instance, const PatchOrder& order, Evaluator& evaluator,
                            const SearchConfig& cfg) {
  return play_game(initial_state(std::move(instance), order), evaluator, cfg);
}

}  // namespace alphazzle
