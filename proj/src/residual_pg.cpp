#include "absrl/residual_pg.hpp"

#include <chrono>

namespace absrl {
namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kTrainStream = 12;
constexpr std::uint64_t kEvalStream = 13;

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::kBase: return "base";
    case Method::kOracle: return "oracle";
    case Method::kSum: return "sum";
    case Method::kResidual: return "residual";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "base") return Method::kBase;
  if (name == "oracle") return Method::kOracle;
  if (name == "sum") return Method::kSum;
  if (name == "residual") return Method::kResidual;
  throw ConfigInvalid("unknown method '" + std::string(name) + "'");
}

std::vector<std::size_t> observed_levels(Method method, std::size_t level_count,
                                         std::size_t oracle_level) {
  switch (method) {
    case Method::kBase: return {1};
    case Method::kOracle:
      if (oracle_level < 1 || oracle_level > level_count) {
        throw LevelMismatch("oracle level outside the observation hierarchy");
      }
      return {oracle_level};
    case Method::kSum:
    case Method::kResidual: {
      std::vector<std::size_t> all(level_count);
      for (std::size_t k = 0; k < level_count; ++k) all[k] = k + 1;
      return all;
    }
  }
  return {};
}

PolicyAgent::PolicyAgent(const ToyEnv& env, Method method, const PolicyConfig& config, Rng& init_rng)
    : env_(&env),
      observed_(observed_levels(method, env.levels(), env.oracle_level())),
      ensemble_(method, observed_.size(), env.embedding_dim(), env.embedding_dim(),
                env.action_count(), config, init_rng) {}

std::vector<nn::Matrix<float>> PolicyAgent::inputs(std::span<const LeafId> leaves) const {
  return env_->gather_levels(observed_, leaves);
}

nn::Matrix<float> PolicyAgent::value_inputs(std::span<const LeafId> leaves) const {
  nn::Matrix<float> out;
  env_->gather(leaves, 1, out);
  return out;
}

std::size_t PolicyAgent::act(LeafId leaf, Rng& rng, bool greedy) const {
  const LeafId one[] = {leaf};
  const auto x = inputs(one);
  const nn::Matrix<float> pi = ensemble_.policy(x);
  return greedy ? argmax_lowest(pi.col(0)) : sample_categorical(pi.col(0), rng);
}

PolicyLossStats PolicyAgent::train_step(std::size_t batch_size, Rng& rng) {
  std::vector<LeafId> leaves(batch_size);
  for (auto& l : leaves) l = env_->sample_leaf(Split::kTrain, rng);
  const auto x = inputs(leaves);
  const nn::Matrix<float> pi = ensemble_.policy(x);
  std::vector<std::size_t> actions(batch_size);
  std::vector<float> returns(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    actions[b] = sample_categorical(pi.col(static_cast<Eigen::Index>(b)), rng);
    // One-step episodes: G = gamma^0 * r.
    returns[b] = static_cast<float>(env_->step(leaves[b], actions[b]).reward);
  }
  return ensemble_.update(x, value_inputs(leaves), actions, returns);
}

double evaluate(const PolicyAgent& agent, const ToyEnv& env, Split split, std::size_t episodes,
                Rng& rng, bool greedy) {
  if (episodes == 0) return 0.0;
  std::vector<LeafId> leaves(episodes);
  for (auto& l : leaves) l = env.sample_leaf(split, rng);
  const nn::Matrix<float> pi = agent.ensemble().policy(agent.inputs(leaves));
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto col = pi.col(static_cast<Eigen::Index>(e));
    const std::size_t a = greedy ? argmax_lowest(col) : sample_categorical(col, rng);
    total += env.step(leaves[e], a).reward;
  }
  return total / static_cast<double>(episodes);
}

std::vector<EvalRow> train(const ToyEnv& env, const TrainSpec& spec, const EvalSink& sink) {
  if (spec.batch_size == 0 || spec.eval_freq == 0) throw ConfigInvalid("batch_size and eval_freq must be positive");
  Rng init_rng = make_rng(spec.seed, kInitStream);
  Rng train_rng = make_rng(spec.seed, kTrainStream);
  Rng eval_rng = make_rng(spec.seed, kEvalStream);
  PolicyAgent agent(env, spec.method, spec.policy, init_rng);

  std::vector<EvalRow> rows;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t episode = 1; episode <= spec.episodes; ++episode) {
    agent.train_step(spec.batch_size, train_rng);
    if (episode % spec.eval_freq != 0) continue;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (Split split : {Split::kTrain, Split::kTest}) {
      EvalRow row{episode, split, evaluate(agent, env, split, spec.eval_samples, eval_rng, spec.greedy_eval),
                  elapsed};
      if (sink) sink(row);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace absrl
