#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absrl/errors.hpp"
#include "absrl/nn/adam.hpp"
#include "absrl/nn/mlp.hpp"
#include "absrl/nn/softmax.hpp"
#include "absrl/random.hpp"
#include "absrl/toy_env.hpp"

namespace absrl {

/// How a learner consumes the observation hierarchy.
///   base:     one network on the leaf level only
///   oracle:   one network on the decision level only
///   sum:      one network per level, logits summed, ordinary gradient
///   residual: one network per level, level i trained through pi_i only
enum class Method { kBase, kOracle, kSum, kResidual };

const char* to_string(Method method);
/// Throws ConfigInvalid for unknown names.
Method parse_method(std::string_view name);

/// Observation levels (1-based) a method reads from an n-level hierarchy.
std::vector<std::size_t> observed_levels(Method method, std::size_t level_count,
                                         std::size_t oracle_level);

struct PolicyConfig {
  std::vector<std::size_t> policy_hidden{256, 128, 64};
  std::vector<std::size_t> value_hidden{128};
  double learning_rate = 1e-4;
  double entropy_beta = 1.0;
  double gamma = 1.0;
};

/// Loss components of one batch, each averaged over the batch.
struct PolicyLossStats {
  std::vector<double> level_policy_loss;  // -A log pi_i(a), one per level
  double policy_loss = 0.0;               // the term actually optimized (sum: level 1 only)
  double entropy = 0.0;                   // mean H(pi_1)
  double value_loss = 0.0;                // mean (G - V)^2
};

template <typename Scalar>
struct PolicyGradients {
  std::vector<nn::MlpParams<Scalar>> levels;
  nn::MlpParams<Scalar> value;
  PolicyLossStats stats;
};

/// Per-level policy networks NN_1..NN_n (independent weights) plus a value
/// network. Level 1 is the least abstract level the ensemble reads.
template <typename Scalar>
class PolicyEnsemble {
 public:
  using Matrix = nn::Matrix<Scalar>;
  using Vector = nn::Vector<Scalar>;

  PolicyEnsemble(Method method, std::size_t level_count, std::size_t input_dim,
                 std::size_t value_input_dim, std::size_t action_count, const PolicyConfig& config,
                 Rng& rng)
      : method_(method), config_(config), action_count_(action_count) {
    if (level_count == 0) throw LevelMismatch("PolicyEnsemble needs at least one level");
    if ((method == Method::kBase || method == Method::kOracle) && level_count != 1) {
      throw LevelMismatch("base and oracle ensembles carry exactly one network");
    }
    const nn::MlpShape policy_shape{input_dim, config.policy_hidden, action_count};
    for (std::size_t i = 0; i < level_count; ++i) {
      levels_.push_back(nn::make_mlp<Scalar>(policy_shape, rng));
    }
    value_ = nn::make_mlp<Scalar>({value_input_dim, config.value_hidden, 1}, rng);
    const nn::AdamOptions adam{.learning_rate = config.learning_rate};
    for (const auto& p : levels_) level_opt_.emplace_back(p, adam);
    value_opt_.emplace_back(value_, adam);
  }

  Method method() const { return method_; }
  std::size_t levels() const { return levels_.size(); }
  std::size_t action_count() const { return action_count_; }
  const PolicyConfig& config() const { return config_; }

  std::vector<nn::MlpParams<Scalar>>& level_params() { return levels_; }
  const std::vector<nn::MlpParams<Scalar>>& level_params() const { return levels_; }
  nn::MlpParams<Scalar>& value_params() { return value_; }
  const nn::MlpParams<Scalar>& value_params() const { return value_; }

  /// z_i = NN_i(x_i) for every level; `inputs[i]` is input_dim x batch.
  std::vector<Matrix> level_logits(std::span<const Matrix> inputs) const {
    check_levels(inputs.size());
    std::vector<Matrix> out;
    out.reserve(levels_.size());
    for (std::size_t i = 0; i < levels_.size(); ++i) out.push_back(nn::forward(levels_[i], inputs[i]).output);
    return out;
  }

  /// pi_i = softmax(sum_{k >= i} z_k), 1-based i. pi_1 is the behaviour policy.
  Matrix abstract_policy(std::span<const Matrix> inputs, std::size_t i) const {
    if (i < 1 || i > levels_.size()) throw LevelMismatch("abstract_policy: level out of range");
    const auto z = level_logits(inputs);
    return nn::softmax_columns<Scalar>(suffix_sums(z)[i - 1]);
  }

  Matrix policy(std::span<const Matrix> inputs) const { return abstract_policy(inputs, 1); }

  Matrix value(const Matrix& value_input) const { return nn::forward(value_, value_input).output; }

  /// Suffix sums S_i = sum_{k >= i} z_k.
  static std::vector<Matrix> suffix_sums(const std::vector<Matrix>& z) {
    std::vector<Matrix> s(z.size());
    for (std::size_t i = z.size(); i-- > 0;) s[i] = (i + 1 == z.size()) ? z[i] : Matrix(z[i] + s[i + 1]);
    return s;
  }

  /// Gradients of the batch-averaged loss. With `residual` false every level
  /// receives the gradient of -A log pi_1(a) - beta H(pi_1); with `residual`
  /// true level i receives the gradient of -A log pi_i(a) - beta H(pi_1),
  /// other levels' logits held constant. The value network always regresses
  /// on the returns, and the advantage A = G - V is a constant.
  PolicyGradients<Scalar> gradients(std::span<const Matrix> inputs, const Matrix& value_input,
                                    std::span<const std::size_t> actions,
                                    std::span<const Scalar> returns, bool residual) const {
    check_levels(inputs.size());
    const Eigen::Index batch = static_cast<Eigen::Index>(actions.size());
    if (batch == 0) throw ShapeMismatch("gradients: empty batch");
    if (returns.size() != actions.size()) throw ShapeMismatch("gradients: returns/actions size");
    for (const auto& x : inputs) {
      if (x.cols() != batch) throw ShapeMismatch("gradients: level input batch size");
    }
    const std::size_t n = levels_.size();
    const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
    const Scalar beta = static_cast<Scalar>(config_.entropy_beta);

    std::vector<nn::ForwardResult<Scalar>> fwd;
    fwd.reserve(n);
    std::vector<Matrix> z;
    for (std::size_t i = 0; i < n; ++i) {
      fwd.push_back(nn::forward(levels_[i], inputs[i]));
      z.push_back(fwd.back().output);
    }
    const auto sums = suffix_sums(z);
    auto value_fwd = nn::forward(value_, value_input);
    if (value_fwd.output.cols() != batch) throw ShapeMismatch("gradients: value input batch size");

    PolicyGradients<Scalar> out;
    out.stats.level_policy_loss.assign(n, 0.0);

    // Per-level log pi_i; only level 1 is needed for the sum update.
    std::vector<Matrix> log_pi(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0 || residual) log_pi[i] = nn::log_softmax_columns<Scalar>(sums[i]);
    }
    const Matrix pi1 = log_pi[0].array().exp();

    // Entropy part: d(-beta H)/dS_1 = beta * pi (log pi + H), shared by all levels.
    Matrix entropy_grad(action_count_, batch);
    Vector advantage(batch);
    Matrix value_grad(1, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const std::size_t a = actions[static_cast<std::size_t>(b)];
      if (a >= action_count_) throw InvalidAction("gradients: action out of range");
      const Scalar g = returns[static_cast<std::size_t>(b)];
      const Scalar v = value_fwd.output(0, b);
      advantage[b] = g - v;
      value_grad(0, b) = Scalar(2) * (v - g) * inv_batch;
      out.stats.value_loss += static_cast<double>((g - v) * (g - v));
      Scalar h = 0;
      for (Eigen::Index k = 0; k < pi1.rows(); ++k) h -= pi1(k, b) * log_pi[0](k, b);
      out.stats.entropy += static_cast<double>(h);
      entropy_grad.col(b) = beta * pi1.col(b).cwiseProduct((log_pi[0].col(b).array() + h).matrix());
    }

    out.levels.reserve(n);
    Matrix upstream(action_count_, batch);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t level = residual ? i : 0;
      const Matrix pi_level = residual ? Matrix(log_pi[i].array().exp()) : pi1;
      for (Eigen::Index b = 0; b < batch; ++b) {
        const std::size_t a = actions[static_cast<std::size_t>(b)];
        // d(-A log pi(a))/dz = -A (e_a - pi)
        upstream.col(b) = advantage[b] * pi_level.col(b);
        upstream(static_cast<Eigen::Index>(a), b) -= advantage[b];
        if (residual || i == 0) {
          out.stats.level_policy_loss[i] -=
              static_cast<double>(advantage[b] * log_pi[level](static_cast<Eigen::Index>(a), b));
        }
      }
      upstream = (upstream + entropy_grad) * inv_batch;
      out.levels.push_back(nn::backward(levels_[i], fwd[i].cache, upstream).grads);
    }
    out.value = nn::backward(value_, value_fwd.cache, value_grad).grads;

    const double nb = static_cast<double>(batch);
    for (auto& l : out.stats.level_policy_loss) l /= nb;
    out.stats.entropy /= nb;
    out.stats.value_loss /= nb;
    if (residual) {
      for (double l : out.stats.level_policy_loss) out.stats.policy_loss += l;
    } else {
      out.stats.policy_loss = out.stats.level_policy_loss[0];
    }
    const double total = out.stats.policy_loss - config_.entropy_beta * out.stats.entropy +
                         out.stats.value_loss;
    if (!std::isfinite(total)) throw NonFiniteLoss("policy loss is not finite");
    return out;
  }

  /// One optimizer step per network.
  void apply(const PolicyGradients<Scalar>& grads) {
    for (std::size_t i = 0; i < levels_.size(); ++i) level_opt_[i].step(levels_[i], grads.levels[i]);
    value_opt_.front().step(value_, grads.value);
  }

  PolicyLossStats sum_update(std::span<const Matrix> inputs, const Matrix& value_input,
                             std::span<const std::size_t> actions, std::span<const Scalar> returns) {
    auto g = gradients(inputs, value_input, actions, returns, false);
    apply(g);
    return g.stats;
  }

  PolicyLossStats residual_update(std::span<const Matrix> inputs, const Matrix& value_input,
                                  std::span<const std::size_t> actions,
                                  std::span<const Scalar> returns) {
    auto g = gradients(inputs, value_input, actions, returns, true);
    apply(g);
    return g.stats;
  }

  /// Dispatches on the method tag (only the residual method uses the
  /// residual update).
  PolicyLossStats update(std::span<const Matrix> inputs, const Matrix& value_input,
                         std::span<const std::size_t> actions, std::span<const Scalar> returns) {
    return method_ == Method::kResidual ? residual_update(inputs, value_input, actions, returns)
                                        : sum_update(inputs, value_input, actions, returns);
  }

 private:
  void check_levels(std::size_t given) const {
    if (given != levels_.size()) {
      throw LevelMismatch("expected " + std::to_string(levels_.size()) + " level inputs, got " +
                          std::to_string(given));
    }
  }

  Method method_;
  PolicyConfig config_;
  std::size_t action_count_;
  std::vector<nn::MlpParams<Scalar>> levels_;
  nn::MlpParams<Scalar> value_;
  std::vector<nn::Adam<Scalar>> level_opt_;
  std::vector<nn::Adam<Scalar>> value_opt_;
};

/// Draws an action from a probability column by inverse CDF.
template <typename Derived>
std::size_t sample_categorical(const Eigen::MatrixBase<Derived>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += static_cast<double>(probs(k));
    if (u < acc) return static_cast<std::size_t>(k);
  }
  return static_cast<std::size_t>(probs.size() - 1);
}

/// Lowest index among the maxima.
template <typename Derived>
std::size_t argmax_lowest(const Eigen::MatrixBase<Derived>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < values.size(); ++k) {
    if (values(k) > values(best)) best = k;
  }
  return static_cast<std::size_t>(best);
}

struct TrainSpec {
  Method method = Method::kResidual;
  std::size_t episodes = 5000;  // training iterations, one batch each
  std::size_t eval_freq = 100;
  std::size_t eval_samples = 20;
  std::size_t batch_size = 32;
  bool greedy_eval = false;
  std::uint64_t seed = 0;
  PolicyConfig policy;
};

struct EvalRow {
  std::size_t episode = 0;
  Split split = Split::kTrain;
  double mean_reward = 0.0;
  double wall_clock_seconds = 0.0;
};

using EvalSink = std::function<void(const EvalRow&)>;

/// Policy learner bound to a toy environment: selects the observation
/// levels for its method and feeds them to the ensemble in float.
class PolicyAgent {
 public:
  PolicyAgent(const ToyEnv& env, Method method, const PolicyConfig& config, Rng& init_rng);

  const PolicyEnsemble<float>& ensemble() const { return ensemble_; }
  PolicyEnsemble<float>& ensemble() { return ensemble_; }
  const std::vector<std::size_t>& observed() const { return observed_; }

  /// Inputs for `leaves`, one matrix per ensemble level.
  std::vector<nn::Matrix<float>> inputs(std::span<const LeafId> leaves) const;
  nn::Matrix<float> value_inputs(std::span<const LeafId> leaves) const;

  std::size_t act(LeafId leaf, Rng& rng, bool greedy) const;

  /// Samples a batch from the train split, acts with pi_1, and updates.
  PolicyLossStats train_step(std::size_t batch_size, Rng& rng);

 private:
  const ToyEnv* env_;
  std::vector<std::size_t> observed_;
  PolicyEnsemble<float> ensemble_;
};

/// Mean reward of `episodes` fresh episodes from `split`.
double evaluate(const PolicyAgent& agent, const ToyEnv& env, Split split, std::size_t episodes,
                Rng& rng, bool greedy = false);

/// Full training loop; emits train and test rows every eval_freq iterations.
std::vector<EvalRow> train(const ToyEnv& env, const TrainSpec& spec, const EvalSink& sink = {});

}  // namespace absrl
