#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absrl/errors.hpp"
#include "absrl/nn/adam.hpp"
#include "absrl/nn/mlp.hpp"
#include "absrl/random.hpp"
#include "absrl/residual_pg.hpp"
#include "absrl/toy_env.hpp"

namespace absrl {

struct QConfig {
  std::vector<std::size_t> hidden{256, 128, 64};
  double learning_rate = 1e-4;
  double gamma = 1.0;
  std::size_t replay_capacity = 10'000;
  std::size_t target_sync = 100;  // updates between hard target copies
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.5;  // share of training spent annealing
};

/// A batch of transitions laid out per level. `next_states` may be left
/// empty when every transition is terminal.
template <typename Scalar>
struct QBatch {
  std::vector<nn::Matrix<Scalar>> states;
  std::vector<nn::Matrix<Scalar>> next_states;
  std::vector<std::size_t> actions;
  std::vector<Scalar> rewards;
  std::vector<bool> terminal;

  std::size_t size() const { return actions.size(); }
};

template <typename Scalar>
struct QGradients {
  std::vector<nn::MlpParams<Scalar>> levels;
  std::vector<double> level_loss;  // mean squared TD error per optimized loss
  double loss = 0.0;
};

/// Per-level residual action-value networks Q_1^res..Q_n^res with target
/// copies. The cumulative value is Q_i = sum_{k >= i} Q_k^res; Q_1 drives
/// behaviour. The residual method regresses each level on its own target;
/// every other method regresses Q_1 on the ordinary Q-learning target.
template <typename Scalar>
class QEnsemble {
 public:
  using Matrix = nn::Matrix<Scalar>;
  using Vector = nn::Vector<Scalar>;

  QEnsemble(Method method, std::size_t level_count, std::size_t input_dim, std::size_t action_count,
            const QConfig& config, Rng& rng)
      : method_(method), config_(config), action_count_(action_count) {
    if (level_count == 0) throw LevelMismatch("QEnsemble needs at least one level");
    if ((method == Method::kBase || method == Method::kOracle) && level_count != 1) {
      throw LevelMismatch("base and oracle ensembles carry exactly one network");
    }
    if (config.target_sync == 0) throw ConfigInvalid("target_sync must be positive");
    const nn::MlpShape shape{input_dim, config.hidden, action_count};
    for (std::size_t i = 0; i < level_count; ++i) online_.push_back(nn::make_mlp<Scalar>(shape, rng));
    target_ = online_;
    const nn::AdamOptions adam{.learning_rate = config.learning_rate};
    for (const auto& p : online_) opt_.emplace_back(p, adam);
  }

  Method method() const { return method_; }
  std::size_t levels() const { return online_.size(); }
  std::size_t action_count() const { return action_count_; }
  const QConfig& config() const { return config_; }
  std::uint64_t updates() const { return updates_; }

  std::vector<nn::MlpParams<Scalar>>& online_params() { return online_; }
  const std::vector<nn::MlpParams<Scalar>>& online_params() const { return online_; }
  const std::vector<nn::MlpParams<Scalar>>& target_params() const { return target_; }

  /// Q_k^res(s_k, .) per level from the online (or target) networks.
  std::vector<Matrix> residual_values(std::span<const Matrix> inputs, bool use_target = false) const {
    check_levels(inputs.size());
    const auto& nets = use_target ? target_ : online_;
    std::vector<Matrix> out;
    out.reserve(nets.size());
    for (std::size_t i = 0; i < nets.size(); ++i) out.push_back(nn::forward(nets[i], inputs[i]).output);
    return out;
  }

  /// Cumulative Q_i(s, .) for i = 1..n (index 0 is the behaviour value).
  std::vector<Matrix> q_values(std::span<const Matrix> inputs, bool use_target = false) const {
    return PolicyEnsemble<Scalar>::suffix_sums(residual_values(inputs, use_target));
  }

  Matrix behaviour_values(std::span<const Matrix> inputs) const { return q_values(inputs).front(); }

  /// Per-level regression targets from the target networks:
  ///   y_i = r - (Q_{i+1}(s, a) - g Q_{i+1}(s', a)) + g max_a' Q_i^res(s'_i, a')
  /// with g = gamma on non-terminal transitions and 0 otherwise, Q_{n+1} = 0.
  std::vector<Vector> residual_targets(const QBatch<Scalar>& batch) const {
    const Eigen::Index b_count = check_batch(batch);
    const std::size_t n = online_.size();
    const auto q_now = q_values(batch.states, true);
    std::vector<Matrix> res_next, q_next;
    if (needs_next(batch)) {
      res_next = residual_values(batch.next_states, true);
      q_next = PolicyEnsemble<Scalar>::suffix_sums(res_next);
    }
    std::vector<Vector> y(n, Vector(b_count));
    for (Eigen::Index b = 0; b < b_count; ++b) {
      const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(b)]);
      const Scalar r = batch.rewards[static_cast<std::size_t>(b)];
      const Scalar g = discount(batch, b);
      for (std::size_t i = 0; i < n; ++i) {
        Scalar target = r;
        if (i + 1 < n) {
          const Scalar next_upper = g != Scalar(0) ? q_next[i + 1](a, b) : Scalar(0);
          target -= q_now[i + 1](a, b) - g * next_upper;
        }
        if (g != Scalar(0)) target += g * res_next[i].col(b).maxCoeff();
        y[i][b] = target;
      }
    }
    return y;
  }

  /// Ordinary target r + g max_a' Q_1(s', a') from the target networks.
  Vector joint_targets(const QBatch<Scalar>& batch) const {
    const Eigen::Index b_count = check_batch(batch);
    std::vector<Matrix> q_next;
    if (needs_next(batch)) q_next = q_values(batch.next_states, true);
    Vector y(b_count);
    for (Eigen::Index b = 0; b < b_count; ++b) {
      const Scalar g = discount(batch, b);
      y[b] = batch.rewards[static_cast<std::size_t>(b)];
      if (g != Scalar(0)) y[b] += g * q_next[0].col(b).maxCoeff();
    }
    return y;
  }

  /// Gradients of the batch-averaged squared TD error(s).
  QGradients<Scalar> gradients(const QBatch<Scalar>& batch) const {
    const Eigen::Index b_count = check_batch(batch);
    const std::size_t n = online_.size();
    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(b_count);
    const bool residual = method_ == Method::kResidual;

    std::vector<nn::ForwardResult<Scalar>> fwd;
    fwd.reserve(n);
    std::vector<Matrix> res;
    for (std::size_t i = 0; i < n; ++i) {
      fwd.push_back(nn::forward(online_[i], batch.states[i]));
      res.push_back(fwd.back().output);
    }

    QGradients<Scalar> out;
    std::vector<Matrix> upstream(n, Matrix::Zero(static_cast<Eigen::Index>(action_count_), b_count));
    if (residual) {
      const auto y = residual_targets(batch);
      out.level_loss.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index b = 0; b < b_count; ++b) {
          const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(b)]);
          const Scalar err = res[i](a, b) - y[i][b];
          upstream[i](a, b) = Scalar(2) * err * inv_batch;
          out.level_loss[i] += static_cast<double>(err * err);
        }
      }
    } else {
      const auto y = joint_targets(batch);
      const Matrix q1 = PolicyEnsemble<Scalar>::suffix_sums(res).front();
      out.level_loss.assign(1, 0.0);
      for (Eigen::Index b = 0; b < b_count; ++b) {
        const auto a = static_cast<Eigen::Index>(batch.actions[static_cast<std::size_t>(b)]);
        const Scalar err = q1(a, b) - y[b];
        for (auto& u : upstream) u(a, b) = Scalar(2) * err * inv_batch;
        out.level_loss[0] += static_cast<double>(err * err);
      }
    }
    for (auto& l : out.level_loss) {
      l /= static_cast<double>(b_count);
      out.loss += l;
    }
    if (!std::isfinite(out.loss)) throw NonFiniteLoss("Q loss is not finite");
    out.levels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.levels.push_back(nn::backward(online_[i], fwd[i].cache, upstream[i]).grads);
    return out;
  }

  /// One optimizer step per level; targets are re-synced every target_sync updates.
  double update(const QBatch<Scalar>& batch) {
    const auto g = gradients(batch);
    for (std::size_t i = 0; i < online_.size(); ++i) opt_[i].step(online_[i], g.levels[i]);
    if (++updates_ % config_.target_sync == 0) sync_targets();
    return g.loss;
  }

  void sync_targets() { target_ = online_; }

 private:
  void check_levels(std::size_t given) const {
    if (given != online_.size()) {
      throw LevelMismatch("expected " + std::to_string(online_.size()) + " level inputs, got " +
                          std::to_string(given));
    }
  }

  Eigen::Index check_batch(const QBatch<Scalar>& batch) const {
    check_levels(batch.states.size());
    const auto b_count = static_cast<Eigen::Index>(batch.actions.size());
    if (b_count == 0) throw ShapeMismatch("QBatch is empty");
    if (batch.rewards.size() != batch.actions.size() || batch.terminal.size() != batch.actions.size()) {
      throw ShapeMismatch("QBatch field sizes differ");
    }
    for (const auto& x : batch.states) {
      if (x.cols() != b_count) throw ShapeMismatch("QBatch state batch size");
    }
    for (std::size_t a : batch.actions) {
      if (a >= action_count_) throw InvalidAction("QBatch action out of range");
    }
    if (needs_next(batch)) {
      check_levels(batch.next_states.size());
      for (const auto& x : batch.next_states) {
        if (x.cols() != b_count) throw ShapeMismatch("QBatch next-state batch size");
      }
    }
    return b_count;
  }

  bool needs_next(const QBatch<Scalar>& batch) const {
    if (config_.gamma == 0.0) return false;
    for (bool t : batch.terminal) {
      if (!t) return true;
    }
    return false;
  }

  Scalar discount(const QBatch<Scalar>& batch, Eigen::Index b) const {
    return batch.terminal[static_cast<std::size_t>(b)] ? Scalar(0) : static_cast<Scalar>(config_.gamma);
  }

  Method method_;
  QConfig config_;
  std::size_t action_count_;
  std::vector<nn::MlpParams<Scalar>> online_;
  std::vector<nn::MlpParams<Scalar>> target_;
  std::vector<nn::Adam<Scalar>> opt_;
  std::uint64_t updates_ = 0;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigInvalid("replay capacity must be positive");
    items_.reserve(capacity);
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& operator[](std::size_t i) const { return items_.at(i); }

  std::vector<T> sample(std::size_t count, Rng& rng) const {
    if (items_.empty()) throw EmptySet("cannot sample from an empty replay buffer");
    std::vector<T> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.push_back(items_[uniform_index(rng, items_.size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<T> items_;
};

/// Greedy over `values` with probability 1 - epsilon, uniform otherwise.
/// Always consumes one draw for the coin, plus one when exploring.
template <typename Derived>
std::size_t act_epsilon_greedy(const Eigen::MatrixBase<Derived>& values, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigInvalid("epsilon must lie in [0, 1]");
  if (uniform01(rng) < epsilon) return uniform_index(rng, static_cast<std::size_t>(values.size()));
  return argmax_lowest(values);
}

/// Linear anneal from epsilon_start to epsilon_end over the first
/// epsilon_fraction of `total` iterations, then constant.
double epsilon_at(const QConfig& config, std::size_t iteration, std::size_t total);

struct QTrainSpec {
  Method method = Method::kResidual;
  std::size_t episodes = 5000;  // training iterations, one batch each
  std::size_t eval_freq = 100;
  std::size_t eval_samples = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  QConfig q;
};

/// One-step toy transition; the episode always terminates.
struct ToyTransition {
  LeafId leaf = 0;
  std::uint32_t action = 0;
  float reward = 0.0f;
};

class QAgent {
 public:
  QAgent(const ToyEnv& env, Method method, const QConfig& config, Rng& init_rng);

  const QEnsemble<float>& ensemble() const { return ensemble_; }
  QEnsemble<float>& ensemble() { return ensemble_; }
  const std::vector<std::size_t>& observed() const { return observed_; }

  std::vector<nn::Matrix<float>> inputs(std::span<const LeafId> leaves) const;

  /// Collects batch_size transitions with epsilon-greedy behaviour, stores
  /// them, and performs one update once the buffer holds a full batch.
  void train_step(std::size_t batch_size, double epsilon, Rng& rng);

  const ReplayBuffer<ToyTransition>& replay() const { return replay_; }

 private:
  const ToyEnv* env_;
  std::vector<std::size_t> observed_;
  QEnsemble<float> ensemble_;
  ReplayBuffer<ToyTransition> replay_;
};

/// Mean reward of greedy actions from Q_1 over `episodes` fresh episodes.
double evaluate_q(const QAgent& agent, const ToyEnv& env, Split split, std::size_t episodes, Rng& rng);

std::vector<EvalRow> train_q(const ToyEnv& env, const QTrainSpec& spec, const EvalSink& sink = {});

}  // namespace absrl
