#pragma once

// Policy/value evaluators. Every evaluator is batch-first: it receives a
// span of states and returns one verdict per state, in order.

#include <algorithm>
#include <bit>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "alphazzle/error.hpp"
#include "alphazzle/puzzle_env.hpp"
#include "alphazzle/random.hpp"

namespace alphazzle {

struct EvaluatorVerdict {
  std::vector<double> policy;  // one entry per board position
  double value = 0.0;

  bool operator==(const EvaluatorVerdict&) const = default;
};

/// True when the verdict satisfies the probability-vector and value bounds.
inline bool is_well_formed(const EvaluatorVerdict& v, int positions, double tol = 1e-6) {
  if (static_cast<int>(v.policy.size()) != positions) return false;
  double sum = 0.0;
  for (double x : v.policy) {
    if (!(x >= 0.0)) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= tol && v.value >= 0.0 && v.value <= 1.0;
}

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) = 0;

  EvaluatorVerdict evaluate(const GameState& state) { return evaluate(std::span<const GameState>(&state, 1)).front(); }

  /// Exclusive evaluators must not be called concurrently; the harness routes
  /// them through a DispatchQueue.
  virtual bool exclusive() const { return false; }

  virtual std::string name() const = 0;
};

using EvaluatorPtr = std::shared_ptr<Evaluator>;

inline std::vector<double> uniform_policy(int positions) {
  return std::vector<double>(static_cast<std::size_t>(positions), 1.0 / positions);
}

/// Zeroes illegal entries and renormalizes; falls back to uniform over the
/// legal actions when no mass remains.
inline std::vector<double> mask_and_renormalize(std::span<const double> policy, std::span<const Action> legal) {
  if (legal.empty()) throw Error(ErrorKind::EmptyLegalSet, "no legal action to renormalize over");
  std::vector<double> out(policy.size(), 0.0);
  double mass = 0.0;
  for (const Action& a : legal) {
    const double v = std::max(0.0, policy[static_cast<std::size_t>(a.position)]);
    out[static_cast<std::size_t>(a.position)] = v;
    mass += v;
  }
  if (mass <= 0.0) {
    for (const Action& a : legal) out[static_cast<std::size_t>(a.position)] = 1.0 / static_cast<double>(legal.size());
  } else {
    for (const Action& a : legal) out[static_cast<std::size_t>(a.position)] /= mass;
  }
  return out;
}

/// Ground-truth evaluator: one-hot at the next patch's solution position and
/// the exact value target.
class OracleEvaluator final : public Evaluator {
 public:
  using Evaluator::evaluate;

  static EvaluatorVerdict verdict(const GameState& state) {
    const int p = state.spec().positions();
    EvaluatorVerdict v;
    if (const auto next = state.next_patch()) {
      v.policy.assign(static_cast<std::size_t>(p), 0.0);
      v.policy[static_cast<std::size_t>(state.instance().solution_position_of(*next))] = 1.0;
    } else {
      v.policy = uniform_policy(p);
    }
    v.value = value_target(state);
    return v;
  }

  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    std::vector<EvaluatorVerdict> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(verdict(s));
    return out;
  }

  std::string name() const override { return "oracle"; }
};

/// Stable identity of an instance, independent of where it lives in memory.
inline std::uint64_t instance_fingerprint(const PuzzleInstance& inst) {
  std::uint64_t h = 0x5eedULL;
  for (char c : inst.source_id) h = hash_combine(h, static_cast<unsigned char>(c));
  for (const Tensor& patch : inst.patches) {
    h = hash_combine(h, std::bit_cast<std::uint32_t>(patch.data.front()));
    h = hash_combine(h, std::bit_cast<std::uint32_t>(patch.data[patch.data.size() / 2]));
  }
  return h;
}

/// Hash of the observable state: placed patches and the patch to place.
inline std::uint64_t state_key(const GameState& state, std::uint64_t seed) {
  std::uint64_t h = hash_combine(seed, instance_fingerprint(state.instance()));
  for (int v : state.assignment()) h = hash_combine(h, static_cast<std::uint64_t>(v + 1));
  return hash_combine(h, static_cast<std::uint64_t>(state.next_patch().value_or(-1) + 1));
}

/// Oracle corrupted at rate epsilon. The corruption is a deterministic
/// function of (seed, observable state), so repeated queries agree and the
/// evaluator is safe to share between threads.
///
/// Policy: with probability epsilon the peak moves to a random legal
/// position; the result is (1 - epsilon) on the peak plus epsilon spread
/// uniformly.
/// Value: a state with m misplaced patches is read as mistake-free with
/// probability (epsilon / 10) * epsilon^(m - 1), then uniform noise of width
/// epsilon is added and the result clamped to [0, 1].
class NoisyEvaluator final : public Evaluator {
 public:
  using Evaluator::evaluate;

  NoisyEvaluator(double epsilon, std::uint64_t seed) : epsilon_(epsilon), seed_(seed) {
    if (epsilon < 0.0 || epsilon > 1.0) throw Error(ErrorKind::Config, "epsilon must lie in [0, 1]");
  }

  static int misplaced(const GameState& state) {
    int m = 0;
    const auto& solution = state.instance().solution;
    for (std::size_t i = 0; i < state.assignment().size(); ++i) {
      const int a = state.assignment()[i];
      if (a != -1 && a != solution[i]) ++m;
    }
    return m;
  }

  /// Probability of reading a state with m misplaced patches as correct.
  double overlook_rate(int m) const { return m == 0 ? 0.0 : epsilon_ / 10.0 * std::pow(epsilon_, m - 1); }

  EvaluatorVerdict verdict(const GameState& state) const {
    const int p = state.spec().positions();
    Rng rng(state_key(state, seed_));
    EvaluatorVerdict v;
    if (const auto next = state.next_patch()) {
      int peak = state.instance().solution_position_of(*next);
      if (rng.uniform() < epsilon_) {
        const auto legal = legal_actions(state);
        peak = legal[rng.below(legal.size())].position;
      }
      v.policy.assign(static_cast<std::size_t>(p), epsilon_ / p);
      v.policy[static_cast<std::size_t>(peak)] += 1.0 - epsilon_;
    } else {
      v.policy = uniform_policy(p);
    }
    double value = value_target(state);
    if (rng.uniform() < overlook_rate(misplaced(state))) {
      value = state.is_terminal() ? 1.0 : 0.5 + 0.5 * state.turn() / (state.spec().patches() - 1.0);
    }
    v.value = std::clamp(value + rng.uniform(-epsilon_ / 2.0, epsilon_ / 2.0), 0.0, 1.0);
    return v;
  }

  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    std::vector<EvaluatorVerdict> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(verdict(s));
    return out;
  }

  double epsilon() const { return epsilon_; }
  std::string name() const override { return "noisy(" + std::to_string(epsilon_) + ")"; }

 private:
  double epsilon_;
  std::uint64_t seed_;
};

/// Replaces the policy by 1/p ("P deactivated") and/or the value by a
/// constant ("V deactivated"). Without a base evaluator both overrides are
/// mandatory.
class DeactivatedEvaluator final : public Evaluator {
 public:
  using Evaluator::evaluate;

  DeactivatedEvaluator(EvaluatorPtr base, bool uniform, std::optional<double> constant_value)
      : base_(std::move(base)), uniform_(uniform), constant_(constant_value) {
    if (constant_ && (*constant_ < 0.0 || *constant_ > 1.0)) throw Error(ErrorKind::Config, "constant value not in [0,1]");
    if (!base_ && (!uniform_ || !constant_)) throw Error(ErrorKind::Config, "no base evaluator to fall back on");
  }

  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    std::vector<EvaluatorVerdict> out;
    if (base_) {
      out = base_->evaluate(states);
    } else {
      out.resize(states.size());
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (uniform_) out[i].policy = uniform_policy(states[i].spec().positions());
      if (constant_) out[i].value = *constant_;
    }
    return out;
  }

  bool exclusive() const override { return base_ && base_->exclusive(); }

  std::string name() const override {
    std::string n = base_ ? base_->name() : std::string("none");
    if (uniform_) n += "+uniformP";
    if (constant_) n += "+constV(" + std::to_string(*constant_) + ")";
    return n;
  }

 private:
  EvaluatorPtr base_;
  bool uniform_;
  std::optional<double> constant_;
};

/// Serializes calls to an exclusive evaluator. Requests from concurrent
/// callers are gathered into one batch per dispatch, up to max_batch states.
class DispatchQueue final : public Evaluator {
 public:
  using Evaluator::evaluate;

  explicit DispatchQueue(EvaluatorPtr inner, std::size_t max_batch = 256)
      : inner_(std::move(inner)), max_batch_(max_batch), worker_([this] { run(); }) {}

  ~DispatchQueue() override {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  DispatchQueue(const DispatchQueue&) = delete;
  DispatchQueue& operator=(const DispatchQueue&) = delete;

  std::vector<EvaluatorVerdict> evaluate(std::span<const GameState> states) override {
    Request req{std::vector<GameState>(states.begin(), states.end()), {}};
    auto result = req.promise.get_future();
    {
      std::lock_guard lock(mutex_);
      pending_.push_back(std::move(req));
    }
    cv_.notify_one();
    return result.get();
  }

  std::size_t dispatches() const {
    std::lock_guard lock(mutex_);
    return dispatches_;
  }

  std::string name() const override { return "queued:" + inner_->name(); }

 private:
  struct Request {
    std::vector<GameState> states;
    std::promise<std::vector<EvaluatorVerdict>> promise;
  };

  void run() {
    for (;;) {
      std::vector<Request> batch;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return stopping_ || !pending_.empty(); });
        if (pending_.empty()) return;
        std::size_t total = 0;
        while (!pending_.empty() && (batch.empty() || total + pending_.front().states.size() <= max_batch_)) {
          total += pending_.front().states.size();
          batch.push_back(std::move(pending_.front()));
          pending_.pop_front();
        }
        ++dispatches_;
      }
      std::vector<GameState> states;
      for (const auto& r : batch) states.insert(states.end(), r.states.begin(), r.states.end());
      try {
        auto verdicts = inner_->evaluate(states);
        if (verdicts.size() != states.size()) throw Error(ErrorKind::MalformedResponse, "batch size mismatch");
        std::size_t offset = 0;
        for (auto& r : batch) {
          const auto first = verdicts.begin() + static_cast<std::ptrdiff_t>(offset);
          r.promise.set_value({first, first + static_cast<std::ptrdiff_t>(r.states.size())});
          offset += r.states.size();
        }
      } catch (...) {
        for (auto& r : batch) r.promise.set_exception(std::current_exception());
      }
    }
  }

  EvaluatorPtr inner_;
  std::size_t max_batch_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Request> pending_;
  bool stopping_ = false;
  std::size_t dispatches_ = 0;
  std::thread worker_;
};

}  // namespace alphazzle
