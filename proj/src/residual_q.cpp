#include "absrl/residual_q.hpp"

#include <algorithm>
#include <chrono>

namespace absrl {
namespace {

constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kTrainStream = 22;
constexpr std::uint64_t kEvalStream = 23;

}  // namespace

double epsilon_at(const QConfig& config, std::size_t iteration, std::size_t total) {
  const double horizon = config.epsilon_fraction * static_cast<double>(total);
  if (horizon <= 0.0) return config.epsilon_end;
  const double frac = std::min(1.0, static_cast<double>(iteration) / horizon);
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

QAgent::QAgent(const ToyEnv& env, Method method, const QConfig& config, Rng& init_rng)
    : env_(&env),
      observed_(observed_levels(method, env.levels(), env.oracle_level())),
      ensemble_(method, observed_.size(), env.embedding_dim(), env.action_count(), config, init_rng),
      replay_(config.replay_capacity) {}

std::vector<nn::Matrix<float>> QAgent::inputs(std::span<const LeafId> leaves) const {
  return env_->gather_levels(observed_, leaves);
}

void QAgent::train_step(std::size_t batch_size, double epsilon, Rng& rng) {
  std::vector<LeafId> leaves(batch_size);
  for (auto& l : leaves) l = env_->sample_leaf(Split::kTrain, rng);
  const nn::Matrix<float> q = ensemble_.behaviour_values(inputs(leaves));
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t a = act_epsilon_greedy(q.col(static_cast<Eigen::Index>(b)), epsilon, rng);
    const double r = env_->step(leaves[b], a).reward;
    replay_.push({leaves[b], static_cast<std::uint32_t>(a), static_cast<float>(r)});
  }
  if (replay_.size() < batch_size) return;

  const auto sampled = replay_.sample(batch_size, rng);
  QBatch<float> batch;
  std::vector<LeafId> batch_leaves;
  batch_leaves.reserve(batch_size);
  for (const auto& t : sampled) {
    batch_leaves.push_back(t.leaf);
    batch.actions.push_back(t.action);
    batch.rewards.push_back(t.reward);
    batch.terminal.push_back(true);
  }
  batch.states = inputs(batch_leaves);
  ensemble_.update(batch);
}

double evaluate_q(const QAgent& agent, const ToyEnv& env, Split split, std::size_t episodes, Rng& rng) {
  if (episodes == 0) return 0.0;
  std::vector<LeafId> leaves(episodes);
  for (auto& l : leaves) l = env.sample_leaf(split, rng);
  const nn::Matrix<float> q = agent.ensemble().behaviour_values(agent.inputs(leaves));
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    total += env.step(leaves[e], argmax_lowest(q.col(static_cast<Eigen::Index>(e)))).reward;
  }
  return total / static_cast<double>(episodes);
}

std::vector<EvalRow> train_q(const ToyEnv& env, const QTrainSpec& spec, const EvalSink& sink) {
  if (spec.batch_size == 0 || spec.eval_freq == 0) throw ConfigInvalid("batch_size and eval_freq must be positive");
  Rng init_rng = make_rng(spec.seed, kInitStream);
  Rng train_rng = make_rng(spec.seed, kTrainStream);
  Rng eval_rng = make_rng(spec.seed, kEvalStream);
  QAgent agent(env, spec.method, spec.q, init_rng);

  std::vector<EvalRow> rows;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t episode = 1; episode <= spec.episodes; ++episode) {
    agent.train_step(spec.batch_size, epsilon_at(spec.q, episode - 1, spec.episodes), train_rng);
    if (episode % spec.eval_freq != 0) continue;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (Split split : {Split::kTrain, Split::kTest}) {
      EvalRow row{episode, split, evaluate_q(agent, env, split, spec.eval_samples, eval_rng), elapsed};
      if (sink) sink(row);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace absrl
