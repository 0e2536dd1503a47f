#pragma once

// Deterministic jigsaw environment: square puzzles cut from a raster image,
// reassembled one patch at a time in a fixed patch order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/image.hpp"
#include "alphazzle/random.hpp"

namespace alphazzle {

inline constexpr int kEmpty = -1;

/// Geometry shared by every puzzle of one family.
struct PuzzleSpec {
  int patch_size = 40;
  int patches_per_side = 3;
  int gap_size = 4;
  int channels = 3;  // 4 appends an occupancy plane to the canvas

  int positions() const { return patches_per_side * patches_per_side; }
  int patches() const { return positions(); }
  int canvas_side() const { return patches_per_side * patch_size + (patches_per_side - 1) * gap_size; }
  int cell_stride() const { return patch_size + gap_size; }

  void validate() const {
    if (patch_size < 1 || patches_per_side < 2 || gap_size < 0 || (channels != 3 && channels != 4)) {
      throw Error(ErrorKind::InvalidSpec, "patch_size>=1, patches_per_side>=2, gap_size>=0, channels in {3,4}");
    }
  }

  bool operator==(const PuzzleSpec&) const = default;
};

/// One ground-truth puzzle. Patches hold 3 channels normalized to [-1, 1].
struct PuzzleInstance {
  PuzzleSpec spec;
  std::vector<Tensor> patches;
  std::vector<int> solution;  // position -> patch index
  std::string source_id;

  int solution_position_of(int patch) const {
    const auto it = std::find(solution.begin(), solution.end(), patch);
    return static_cast<int>(it - solution.begin());
  }
};

using InstancePtr = std::shared_ptr<const PuzzleInstance>;

/// The fixed sequence in which patches are handed to the agent.
struct PatchOrder {
  std::vector<int> order;

  static PatchOrder identity(int f) {
    PatchOrder o;
    o.order.resize(static_cast<std::size_t>(f));
    std::iota(o.order.begin(), o.order.end(), 0);
    return o;
  }

  static PatchOrder random(int f, Rng& rng) {
    PatchOrder o = identity(f);
    rng.shuffle(std::span<int>(o.order));
    return o;
  }

  bool is_permutation_of(int f) const {
    if (static_cast<int>(order.size()) != f) return false;
    std::vector<bool> seen(static_cast<std::size_t>(f), false);
    for (int v : order) {
      if (v < 0 || v >= f || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = true;
    }
    return true;
  }

  bool operator==(const PatchOrder&) const = default;
};

struct Action {
  int position = 0;
  bool operator==(const Action&) const = default;
};

struct ReassemblyMetrics {
  double patch_wise = 0.0;
  double neighbor_wise = 0.0;
  int puzzle_wise = 0;
  int well_placed = 0;
};

/// Partial reassembly. Placed patches are always order[0, turn); the canvas
/// is a pure function of (instance, assignment) and is rendered on request.
class GameState {
 public:
  GameState(InstancePtr instance, std::shared_ptr<const std::vector<int>> order, std::vector<int> assignment,
            int turn)
      : instance_(std::move(instance)), order_(std::move(order)), assignment_(std::move(assignment)), turn_(turn) {}

  const PuzzleInstance& instance() const { return *instance_; }
  const InstancePtr& instance_ptr() const { return instance_; }
  const PuzzleSpec& spec() const { return instance_->spec; }
  std::span<const int> assignment() const { return assignment_; }
  std::span<const int> order() const { return *order_; }
  const std::shared_ptr<const std::vector<int>>& order_ptr() const { return order_; }
  int turn() const { return turn_; }

  std::optional<int> next_patch() const {
    if (turn_ >= static_cast<int>(order_->size())) return std::nullopt;
    return (*order_)[static_cast<std::size_t>(turn_)];
  }

  int remaining() const { return static_cast<int>(order_->size()) - turn_; }

  bool is_terminal() const {
    if (!next_patch()) return true;
    return std::none_of(assignment_.begin(), assignment_.end(), [](int v) { return v == kEmpty; });
  }

  bool is_empty_at(int position) const { return assignment_[static_cast<std::size_t>(position)] == kEmpty; }

  /// Zero-valued canvas with every placed patch copied into its cell.
  Tensor canvas() const {
    const PuzzleSpec& s = spec();
    const int side = s.canvas_side();
    Tensor out(side, side, s.channels);
    const int n = s.patches_per_side;
    for (int pos = 0; pos < s.positions(); ++pos) {
      const int patch = assignment_[static_cast<std::size_t>(pos)];
      if (patch == kEmpty) continue;
      const Tensor& src = instance_->patches[static_cast<std::size_t>(patch)];
      const int oy = (pos / n) * s.cell_stride();
      const int ox = (pos % n) * s.cell_stride();
      for (int y = 0; y < s.patch_size; ++y) {
        for (int x = 0; x < s.patch_size; ++x) {
          for (int c = 0; c < 3; ++c) out.at(oy + y, ox + x, c) = src.at(y, x, c);
          if (s.channels == 4) out.at(oy + y, ox + x, 3) = 1.0f;
        }
      }
    }
    return out;
  }

  bool operator==(const GameState& other) const {
    return instance_ == other.instance_ && *order_ == *other.order_ && assignment_ == other.assignment_ &&
           turn_ == other.turn_;
  }

  // Used by apply_action only.
  std::vector<int>& mutable_assignment() { return assignment_; }
  void advance_turn() { ++turn_; }

 private:
  InstancePtr instance_;
  std::shared_ptr<const std::vector<int>> order_;
  std::vector<int> assignment_;
  int turn_ = 0;
};

/// Cuts a random canvas_side^2 crop into patches. Gap bands are discarded
/// and the solution is the identity placement.
inline PuzzleInstance slice_image(const RasterImage& image, const PuzzleSpec& spec, std::uint64_t crop_seed,
                                  std::string source_id = {}) {
  spec.validate();
  const int side = spec.canvas_side();
  if (image.width < side || image.height < side) {
    throw Error(ErrorKind::ImageTooSmall, "need " + std::to_string(side) + "x" + std::to_string(side) + ", got " +
                                              std::to_string(image.width) + "x" + std::to_string(image.height));
  }
  Rng rng(crop_seed);
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(image.width - side + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(image.height - side + 1)));

  PuzzleInstance inst;
  inst.spec = spec;
  inst.source_id = std::move(source_id);
  const int n = spec.patches_per_side;
  for (int pos = 0; pos < spec.positions(); ++pos) {
    Tensor patch(spec.patch_size, spec.patch_size, 3);
    const int oy = y0 + (pos / n) * spec.cell_stride();
    const int ox = x0 + (pos % n) * spec.cell_stride();
    for (int y = 0; y < spec.patch_size; ++y)
      for (int x = 0; x < spec.patch_size; ++x)
        for (int c = 0; c < 3; ++c) patch.at(y, x, c) = normalize_pixel(image.at(ox + x, oy + y, c));
    inst.patches.push_back(std::move(patch));
    inst.solution.push_back(pos);
  }
  return inst;
}

inline GameState initial_state(InstancePtr instance, const PatchOrder& order) {
  const int f = instance->spec.patches();
  if (!order.is_permutation_of(f)) throw Error(ErrorKind::InvalidOrder, "order is not a permutation of 0..f-1");
  std::vector<int> assignment(static_cast<std::size_t>(instance->spec.positions()), kEmpty);
  return GameState(std::move(instance), std::make_shared<const std::vector<int>>(order.order), std::move(assignment),
                   0);
}

/// Empty positions in ascending order.
inline std::vector<Action> legal_actions(const GameState& state) {
  if (state.is_terminal()) throw Error(ErrorKind::CalledOnTerminal, "legal_actions on a terminal state");
  std::vector<Action> out;
  const auto assignment = state.assignment();
  for (int pos = 0; pos < static_cast<int>(assignment.size()); ++pos)
    if (assignment[static_cast<std::size_t>(pos)] == kEmpty) out.push_back({pos});
  return out;
}

inline GameState apply_action(const GameState& state, Action action) {
  if (state.is_terminal()) throw Error(ErrorKind::CalledOnTerminal, "apply_action on a terminal state");
  const int p = state.spec().positions();
  if (action.position < 0 || action.position >= p || !state.is_empty_at(action.position)) {
    throw Error(ErrorKind::OccupiedPosition, "position " + std::to_string(action.position) + " is not empty");
  }
  GameState next = state;
  next.mutable_assignment()[static_cast<std::size_t>(action.position)] = *state.next_patch();
  next.advance_turn();
  return next;
}

/// Count of placed patches sitting at their solution position, and whether
/// any placed patch is misplaced.
inline std::pair<int, bool> placement_summary(const GameState& state) {
  const auto assignment = state.assignment();
  const auto& solution = state.instance().solution;
  int correct = 0;
  bool flawed = false;
  for (std::size_t pos = 0; pos < assignment.size(); ++pos) {
    if (assignment[pos] == kEmpty) continue;
    if (assignment[pos] == solution[pos]) {
      ++correct;
    } else {
      flawed = true;
    }
  }
  return {correct, flawed};
}

inline int ground_truth_reward(const GameState& state) {
  if (!state.is_terminal()) throw Error(ErrorKind::NonTerminalState, "reward requested before the end of the game");
  const auto assignment = state.assignment();
  const auto& solution = state.instance().solution;
  return std::equal(assignment.begin(), assignment.end(), solution.begin(), solution.end()) ? 1 : 0;
}

/// Neighbor-wise score counts adjacent position pairs whose patches are
/// adjacent in the same arrangement in the ground truth.
inline ReassemblyMetrics compute_metrics(const GameState& state) {
  if (!state.is_terminal()) throw Error(ErrorKind::NonTerminalState, "metrics requested before the end of the game");
  const PuzzleInstance& inst = state.instance();
  const int n = inst.spec.patches_per_side;
  const int p = inst.spec.positions();
  const auto assignment = state.assignment();

  std::vector<int> truth_pos(static_cast<std::size_t>(p));
  for (int pos = 0; pos < p; ++pos) truth_pos[static_cast<std::size_t>(inst.solution[static_cast<std::size_t>(pos)])] = pos;

  auto pair_ok = [&](int a, int b, int dr, int dc) {
    const int pa = assignment[static_cast<std::size_t>(a)];
    const int pb = assignment[static_cast<std::size_t>(b)];
    if (pa == kEmpty || pb == kEmpty) return false;
    const int ta = truth_pos[static_cast<std::size_t>(pa)];
    const int tb = truth_pos[static_cast<std::size_t>(pb)];
    return tb / n - ta / n == dr && tb % n - ta % n == dc;
  };

  int good_pairs = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int pos = r * n + c;
      if (c + 1 < n && pair_ok(pos, pos + 1, 0, 1)) ++good_pairs;
      if (r + 1 < n && pair_ok(pos, pos + n, 1, 0)) ++good_pairs;
    }
  }

  ReassemblyMetrics m;
  m.well_placed = placement_summary(state).first;
  m.patch_wise = static_cast<double>(m.well_placed) / p;
  m.neighbor_wise = static_cast<double>(good_pairs) / (2.0 * n * (n - 1));
  m.puzzle_wise = ground_truth_reward(state);
  return m;
}

/// Value target: 0 on any mistake, 1 on a solved puzzle, otherwise
/// 0.5 + 0.5 * i / (f - 1) for i correctly placed patches.
inline double value_target(const GameState& state) {
  const auto [correct, flawed] = placement_summary(state);
  if (flawed) return 0.0;
  if (state.is_terminal()) return 1.0;
  const int f = state.spec().patches();
  return 0.5 + 0.5 * static_cast<double>(correct) / static_cast<double>(f - 1);
}

struct PartialStateRequest {
  int hints = 0;
  bool correct = true;
  bool central = false;  // the first hint is the patch belonging at the center
};

/// State with exactly `hints` patches already placed, in a seeded random
/// order. Incorrect requests contain at least one misplacement.
inline GameState sample_partial_state(InstancePtr instance, const PartialStateRequest& req, std::uint64_t seed) {
  const PuzzleSpec& spec = instance->spec;
  const int f = spec.patches();
  const int p = spec.positions();
  if (req.hints < 0 || req.hints > f - 1 || (!req.correct && req.hints == 0) || (req.central && req.hints == 0)) {
    throw Error(ErrorKind::HintsOutOfRange, "hints=" + std::to_string(req.hints) + " with f=" + std::to_string(f));
  }
  Rng rng(seed);
  PatchOrder order = PatchOrder::random(f, rng);
  if (req.central) {
    const int n = spec.patches_per_side;
    const int center_patch = instance->solution[static_cast<std::size_t>((n / 2) * n + n / 2)];
    auto it = std::find(order.order.begin(), order.order.end(), center_patch);
    std::rotate(order.order.begin(), it, it + 1);
  }

  std::vector<int> assignment(static_cast<std::size_t>(p), kEmpty);
  if (req.correct) {
    for (int k = 0; k < req.hints; ++k) {
      const int patch = order.order[static_cast<std::size_t>(k)];
      assignment[static_cast<std::size_t>(instance->solution_position_of(patch))] = patch;
    }
  } else {
    std::vector<int> positions(static_cast<std::size_t>(p));
    std::iota(positions.begin(), positions.end(), 0);
    for (;;) {
      rng.shuffle(std::span<int>(positions));
      bool any_wrong = false;
      for (int k = 0; k < req.hints; ++k) {
        const int patch = order.order[static_cast<std::size_t>(k)];
        const int pos = positions[static_cast<std::size_t>(k)];
        if (instance->solution[static_cast<std::size_t>(pos)] != patch) any_wrong = true;
      }
      if (any_wrong) break;
    }
    for (int k = 0; k < req.hints; ++k)
      assignment[static_cast<std::size_t>(positions[static_cast<std::size_t>(k)])] =
          order.order[static_cast<std::size_t>(k)];
  }
  return GameState(std::move(instance), std::make_shared<const std::vector<int>>(std::move(order.order)),
                   std::move(assignment), req.hints);
}

/// Same placed patches, new order for the patches still to come.
inline GameState with_remaining_order(const GameState& state, Rng& rng) {
  std::vector<int> order(state.order().begin(), state.order().end());
  rng.shuffle(std::span<int>(order).subspan(static_cast<std::size_t>(state.turn())));
  return GameState(state.instance_ptr(), std::make_shared<const std::vector<int>>(std::move(order)),
                   std::vector<int>(state.assignment().begin(), state.assignment().end()), state.turn());
}

/// Seeded texture: smooth colour gradients, a few soft blobs and pixel noise,
/// so neighbouring patches are distinguishable without a dataset.
inline RasterImage generate_synthetic(int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  RasterImage img(width, height);
  double base[3], gx[3], gy[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = rng.uniform(40.0, 215.0);
    gx[c] = rng.uniform(-120.0, 120.0) / width;
    gy[c] = rng.uniform(-120.0, 120.0) / height;
  }
  struct Blob {
    double cx, cy, radius, amp[3];
  };
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.cx = rng.uniform(0.0, width);
    b.cy = rng.uniform(0.0, height);
    b.radius = rng.uniform(0.08, 0.3) * std::min(width, height);
    for (double& a : b.amp) a = rng.uniform(-90.0, 90.0);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = base[c] + gx[c] * (x - width / 2.0) + gy[c] * (y - height / 2.0);
        for (const auto& b : blobs) {
          const double d2 = ((x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy)) / (b.radius * b.radius);
          v += b.amp[c] * std::exp(-d2);
        }
        v += rng.uniform(-8.0, 8.0);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return img;
}

/// Synthetic puzzle: a generated image exactly canvas-sized plus margin.
inline InstancePtr make_synthetic_instance(const PuzzleSpec& spec, std::uint64_t seed) {
  const int side = spec.canvas_side() + spec.patch_size / 2;
  RasterImage img = generate_synthetic(side, side, seed);
  return std::make_shared<const PuzzleInstance>(
      slice_image(img, spec, hash_combine(seed, 0xc40b), "synthetic:" + std::to_string(seed)));
}

}  // namespace alphazzle
