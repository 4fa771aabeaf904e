#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "astro/errors.hpp"
#include "astro/metrics.hpp"
#include "astro/nn.hpp"
#include "astro/rng.hpp"
#include "astro/score_set.hpp"

// Adaptive decision-threshold optimization: a small DQN walks tau over [0,1]
// in +-0.01 steps, rewarded by the validation F1 at the new threshold, and the
// best threshold observed is returned. A brute-force grid scan is provided as
// an independent oracle for auditing the learned policy.
namespace astro {

// Classification rule: label 1 iff score >= tau (ties count as positive).
inline std::vector<int> apply_threshold(const ScoreSet& scores, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw ValidationError("apply_threshold: tau must lie in [0,1], got " +
                          std::to_string(tau));
  std::vector<int> pred(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) pred[i] = scores.scores[i] >= tau ? 1 : 0;
  return pred;
}

// F1 with every zero-denominator case defined as 0.
inline double f1_reward(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size())
    throw ValidationError("f1_reward: prediction/truth length mismatch");
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i] && !truth[i]) ++fp;
    else if (!pred[i] && truth[i]) ++fn;
  }
  const double denom = static_cast<double>(2 * tp + fp + fn);
  return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
}

// O(log V) F1 evaluation at any tau: scores are sorted once; thresholding is
// a binary search plus prefix-sum lookups. Exactly equivalent to
// f1_reward(apply_threshold(scores, tau), labels).
class F1Evaluator {
 public:
  explicit F1Evaluator(const ScoreSet& s) {
    std::vector<size_t> idx(s.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return s.scores[a] < s.scores[b]; });
    sorted_scores_.reserve(s.size());
    prefix_pos_.assign(s.size() + 1, 0);
    for (size_t k = 0; k < idx.size(); ++k) {
      sorted_scores_.push_back(s.scores[idx[k]]);
      prefix_pos_[k + 1] = prefix_pos_[k] + static_cast<size_t>(s.labels[idx[k]]);
    }
    total_pos_ = prefix_pos_.back();
  }

  double f1_at(double tau) const {
    const size_t cut = static_cast<size_t>(
        std::lower_bound(sorted_scores_.begin(), sorted_scores_.end(), tau) -
        sorted_scores_.begin());
    const size_t predicted_pos = sorted_scores_.size() - cut;
    const size_t tp = total_pos_ - prefix_pos_[cut];
    const size_t fp = predicted_pos - tp;
    const size_t fn = total_pos_ - tp;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }

  // Distinct observed scores: the breakpoints of the piecewise-constant F1.
  std::vector<double> breakpoints() const {
    std::vector<double> b(sorted_scores_);
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
  }

 private:
  std::vector<double> sorted_scores_;
  std::vector<size_t> prefix_pos_;
  size_t total_pos_ = 0;
};

// Exhaustive threshold scan over {0, step, 2*step, ..., 1}; returns the lowest
// tau attaining the maximum F1.
struct GridResult {
  double tau_best = 0.0;
  double f1_best = 0.0;
};

inline GridResult grid_oracle(const ScoreSet& scores, double step = 0.001) {
  if (scores.size() == 0) throw ValidationError("grid_oracle: empty score set");
  if (!(step > 0.0 && step <= 1.0)) throw ValidationError("grid_oracle: bad step");
  F1Evaluator eval(scores);
  GridResult best;
  best.tau_best = 0.0;
  best.f1_best = eval.f1_at(0.0);
  const auto n_steps = static_cast<size_t>(std::llround(1.0 / step));
  for (size_t k = 1; k <= n_steps; ++k) {
    const double tau = std::min(1.0, static_cast<double>(k) * step);
    const double f1 = eval.f1_at(tau);
    if (f1 > best.f1_best) {
      best.f1_best = f1;
      best.tau_best = tau;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Q-learning pieces

// Regression target r + gamma * max_a' Q(s', a').
inline double q_target(double reward, double gamma, double q_next_max) {
  return reward + gamma * q_next_max;
}

// Tabular blend (1 - alpha) * Q + alpha * target; realized in the network by
// the MSE gradient step size.
inline double td_blend(double q, double target, double alpha) {
  return (1.0 - alpha) * q + alpha * target;
}

// Three affine layers with ReLU between: scalar threshold in, one value per
// action out. Trained by plain SGD on the MSE toward the TD target.
class QNet {
 public:
  QNet(const std::vector<size_t>& hidden, uint64_t seed) {
    if (hidden.size() != 2) throw ValidationError("qnet: expected two hidden widths");
    Rng rng(seed);
    w1_ = store_.add("q1.w", {1, hidden[0]});
    b1_ = store_.add("q1.b", {hidden[0]});
    w2_ = store_.add("q2.w", {hidden[0], hidden[1]});
    b2_ = store_.add("q2.b", {hidden[1]});
    w3_ = store_.add("q3.w", {hidden[1], kActions});
    b3_ = store_.add("q3.b", {kActions});
    init_uniform_fanin(store_.value(w1_), 1, rng);
    init_uniform_fanin(store_.value(w2_), hidden[0], rng);
    init_uniform_fanin(store_.value(w3_), hidden[1], rng);
  }

  static constexpr size_t kActions = 3;

  // Q-values for a batch of states (thresholds fed directly).
  void evaluate(const std::vector<double>& states, std::vector<double>& q_out) {
    forward(states);
    q_out.assign(q3_.begin(), q3_.begin() + states.size() * kActions);
  }

  std::array<double, kActions> q_values(double state) {
    std::vector<double> s{state}, q;
    evaluate(s, q);
    return {q[0], q[1], q[2]};
  }

  // One MSE gradient step: targets apply only to the taken actions.
  void update_batch(const std::vector<double>& states, const std::vector<int>& actions,
                    const std::vector<double>& targets, double lr) {
    const size_t n = states.size();
    forward(states);
    store_.zero_grad();
    std::vector<double> dq(n * kActions, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double q = q3_[i * kActions + static_cast<size_t>(actions[i])];
      dq[i * kActions + static_cast<size_t>(actions[i])] =
          2.0 * (q - targets[i]) / static_cast<double>(n);
    }
    std::vector<double> d2(n * store_.value(w2_).shape[1]);
    std::vector<double> d1(n * store_.value(w1_).shape[1]);
    linear_backward(h2_.data(), dq.data(), n, store_.value(w3_), store_.grad(w3_),
                    store_.grad(b3_), d2.data());
    relu_backward_inplace(h2_.data(), d2.data(), d2.size());
    linear_backward(h1_.data(), d2.data(), n, store_.value(w2_), store_.grad(w2_),
                    store_.grad(b2_), d1.data());
    relu_backward_inplace(h1_.data(), d1.data(), d1.size());
    linear_backward(states.data(), d1.data(), n, store_.value(w1_), store_.grad(w1_),
                    store_.grad(b1_), nullptr);
    for (size_t id = 0; id < store_.count(); ++id) {
      auto& e = store_.entry(id);
      for (size_t i = 0; i < e.value.numel(); ++i) e.value.data[i] -= lr * e.grad.data[i];
    }
  }

  ParamStore& params() { return store_; }

 private:
  void forward(const std::vector<double>& states) {
    const size_t n = states.size();
    h1_.resize(n * store_.value(w1_).shape[1]);
    h2_.resize(n * store_.value(w2_).shape[1]);
    q3_.resize(n * kActions);
    linear_forward(states.data(), n, store_.value(w1_), store_.value(b1_), h1_.data());
    relu_forward_inplace(h1_.data(), h1_.size());
    linear_forward(h1_.data(), n, store_.value(w2_), store_.value(b2_), h2_.data());
    relu_forward_inplace(h2_.data(), h2_.size());
    linear_forward(h2_.data(), n, store_.value(w3_), store_.value(b3_), q3_.data());
  }

  ParamStore store_;
  size_t w1_, b1_, w2_, b2_, w3_, b3_;
  std::vector<double> h1_, h2_, q3_;
};

// ---------------------------------------------------------------------------
// The tuning loop

struct TunerConfig {
  double tau0 = 0.5;
  size_t episodes = 50;
  size_t steps_per_episode = 100;
  double step_size = 0.01;       // xi: action magnitude
  double gamma = 0.9;
  double qnet_lr = 1e-3;
  std::vector<size_t> qnet_hidden = {64, 64};
  size_t replay_capacity = 10000;
  size_t replay_batch = 32;
  double epsilon_start = 1.0;
  double epsilon_min = 0.05;
  double epsilon_decay = 0.95;   // multiplicative, per episode

  void validate() const {
    if (!(tau0 >= 0.0 && tau0 <= 1.0)) throw ValidationError("tuner: tau0 must be in [0,1]");
    if (episodes == 0 || steps_per_episode == 0)
      throw ValidationError("tuner: episode budget must be positive");
    if (!(step_size > 0.0 && step_size <= 1.0))
      throw ValidationError("tuner: step size must be in (0,1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("tuner: gamma must be in [0,1)");
    if (replay_batch == 0 || replay_capacity < replay_batch)
      throw ValidationError("tuner: replay sizes inconsistent");
  }
};

struct TuneStep {
  size_t episode = 0;
  double tau = 0.0;     // threshold after the action
  double action = 0.0;  // -xi, 0 or +xi
  double reward = 0.0;  // F1 at tau
};

struct TuneResult {
  double tau_star = 0.0;
  double best_f1 = 0.0;
  std::vector<TuneStep> trace;
};

struct Transition {
  double s, s_next;
  int action;
  double reward;
};

// Epsilon-greedy threshold walk. Each step nudges tau by {-xi, 0, +xi}
// (clipped to [0,1]), relabels the validation scores, takes the F1 as reward,
// stores the transition and trains the Q-network on a replay mini-batch. The
// best (tau, F1) observed across all steps -- including the starting
// threshold -- is returned. Fully deterministic under seed.
inline TuneResult tune(const ScoreSet& scores, const TunerConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (scores.size() == 0) throw ValidationError("tune: empty score set");
  if (!scores.has_both_classes())
    throw ValidationError("tune: both classes required, F1 is degenerate otherwise");

  F1Evaluator eval(scores);
  QNet qnet(cfg.qnet_hidden, derive_seed(seed, 0x31));
  Rng rng(derive_seed(seed, 0x32));
  std::vector<Transition> replay;
  replay.reserve(std::min<size_t>(cfg.replay_capacity, 4096));
  size_t replay_next = 0;

  const double actions[QNet::kActions] = {-cfg.step_size, 0.0, cfg.step_size};
  double tau = cfg.tau0;

  TuneResult result;
  result.tau_star = tau;
  result.best_f1 = eval.f1_at(tau);
  result.trace.reserve(cfg.episodes * cfg.steps_per_episode);

  std::vector<double> batch_states, batch_targets, q_flat;
  std::vector<int> batch_actions;
  std::vector<double> next_states;

  double epsilon = cfg.epsilon_start;
  for (size_t ep = 0; ep < cfg.episodes; ++ep) {
    for (size_t step = 0; step < cfg.steps_per_episode; ++step) {
      int a;
      if (rng.uniform() < epsilon) {
        a = static_cast<int>(rng.below(QNet::kActions));
      } else {
        const auto q = qnet.q_values(tau);
        a = 0;
        for (int k = 1; k < static_cast<int>(QNet::kActions); ++k)
          if (q[static_cast<size_t>(k)] > q[static_cast<size_t>(a)]) a = k;
      }
      const double tau_next = std::clamp(tau + actions[a], 0.0, 1.0);
      const double reward = eval.f1_at(tau_next);

      if (replay.size() < cfg.replay_capacity) {
        replay.push_back({tau, tau_next, a, reward});
      } else {
        replay[replay_next] = {tau, tau_next, a, reward};
        replay_next = (replay_next + 1) % cfg.replay_capacity;
      }

      if (replay.size() >= cfg.replay_batch) {
        batch_states.clear();
        batch_actions.clear();
        batch_targets.clear();
        next_states.clear();
        for (size_t k = 0; k < cfg.replay_batch; ++k) {
          const auto& tr = replay[rng.below(replay.size())];
          batch_states.push_back(tr.s);
          batch_actions.push_back(tr.action);
          next_states.push_back(tr.s_next);
          batch_targets.push_back(tr.reward);  // gamma term added below
        }
        qnet.evaluate(next_states, q_flat);
        for (size_t k = 0; k < cfg.replay_batch; ++k) {
          double q_max = q_flat[k * QNet::kActions];
          for (size_t j = 1; j < QNet::kActions; ++j)
            q_max = std::max(q_max, q_flat[k * QNet::kActions + j]);
          batch_targets[k] = q_target(batch_targets[k], cfg.gamma, q_max);
        }
        qnet.update_batch(batch_states, batch_actions, batch_targets, cfg.qnet_lr);
      }

      if (reward > result.best_f1) {
        result.best_f1 = reward;
        result.tau_star = tau_next;
      }
      result.trace.push_back({ep, tau_next, actions[a], reward});
      tau = tau_next;
    }
    epsilon = std::max(cfg.epsilon_min, epsilon * cfg.epsilon_decay);
  }
  return result;
}

}  // namespace astro
