#include "absrl/toy_env.hpp"

#include <cstdio>

#include "absrl/errors.hpp"
#include "absrl/symbol_store.hpp"

namespace absrl {
namespace {

constexpr std::uint64_t kStructureStream = 1;
constexpr std::uint64_t kEmbeddingStream = 2;
constexpr std::size_t kMaxNodes = 20'000'000;

}  // namespace

void ToyEnvSpec::validate() const {
  if (branching.empty()) throw InvalidSpec("branching must list at least one depth");
  for (std::size_t b : branching) {
    if (b == 0) throw InvalidSpec("branching factors must be positive");
  }
  if (action_count < 2) throw InvalidSpec("action_count must be at least 2");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 1.0)) throw InvalidSpec("noise_sigma must lie in [0, 1]");
  if (decision_level >= branching.size()) {
    throw InvalidSpec("decision_level " + std::to_string(decision_level) +
                      " must be below the tree height " + std::to_string(branching.size()));
  }
  if (embedding_dim == 0) throw InvalidSpec("embedding_dim must be positive");
  if (test_leaves_per_node == 0) throw InvalidSpec("test_leaves_per_node must be positive");
  double nodes = 1, width = 1;
  for (std::size_t b : branching) {
    width *= static_cast<double>(b);
    nodes += width;
  }
  if (nodes > static_cast<double>(kMaxNodes)) throw InvalidSpec("tree too large");
}

void to_json(nlohmann::json& j, const ToyEnvSpec& spec) {
  j = nlohmann::json{{"branching", spec.branching},
                     {"action_count", spec.action_count},
                     {"noise_sigma", spec.noise_sigma},
                     {"decision_level", spec.decision_level},
                     {"embedding_dim", spec.embedding_dim},
                     {"seed", spec.seed},
                     {"test_leaves_per_node", spec.test_leaves_per_node}};
}

void from_json(const nlohmann::json& j, ToyEnvSpec& spec) {
  ToyEnvSpec d;
  spec.branching = j.value("branching", d.branching);
  spec.action_count = j.value("action_count", d.action_count);
  spec.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  spec.decision_level = j.value("decision_level", d.decision_level);
  spec.embedding_dim = j.value("embedding_dim", d.embedding_dim);
  spec.seed = j.value("seed", d.seed);
  spec.test_leaves_per_node = j.value("test_leaves_per_node", d.test_leaves_per_node);
}

const char* to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

ToyEnv ToyEnv::generate(const ToyEnvSpec& spec) {
  spec.validate();
  ToyEnv env;
  env.spec_ = spec;
  const std::size_t height = spec.branching.size();

  // Nodes: root, inner depths 1..height-1, then train leaves, then test leaves.
  std::vector<std::size_t> parent{0};
  std::vector<std::size_t> depth_of{0};
  env.node_symbols_.push_back(Symbol("root"));
  std::vector<std::size_t> frontier{0};
  for (std::size_t d = 1; d <= height; ++d) {
    std::vector<std::size_t> next;
    std::size_t index = 0;
    for (std::size_t p : frontier) {
      for (std::size_t c = 0; c < spec.branching[d - 1]; ++c, ++index) {
        const std::string name =
            d == height ? "leaf_" + std::to_string(index) : "c" + std::to_string(d) + "_" + std::to_string(index);
        next.push_back(env.node_symbols_.size());
        env.node_symbols_.push_back(Symbol(name));
        parent.push_back(p);
        depth_of.push_back(d);
      }
    }
    if (d < height) frontier = std::move(next);
    else {
      for (std::size_t node : next) {
        env.train_leaves_.push_back(static_cast<LeafId>(env.leaf_nodes_.size()));
        env.leaf_nodes_.push_back(node);
      }
    }
  }
  // `frontier` now holds the deepest inner nodes.
  std::size_t test_index = 0;
  for (std::size_t p : frontier) {
    for (std::size_t t = 0; t < spec.test_leaves_per_node; ++t, ++test_index) {
      const std::size_t node = env.node_symbols_.size();
      env.node_symbols_.push_back(Symbol("test_leaf_" + std::to_string(test_index)));
      parent.push_back(p);
      depth_of.push_back(height);
      env.test_leaves_.push_back(static_cast<LeafId>(env.leaf_nodes_.size()));
      env.leaf_nodes_.push_back(node);
    }
  }

  std::vector<std::pair<Symbol, Symbol>> edges;
  edges.reserve(env.node_symbols_.size());
  for (std::size_t i = 1; i < env.node_symbols_.size(); ++i) {
    edges.emplace_back(env.node_symbols_[i], env.node_symbols_[parent[i]]);
  }
  env.tree_ = ClassTree::from_edges(edges, {.strict = true});

  env.chains_.resize(env.leaf_nodes_.size());
  for (std::size_t leaf = 0; leaf < env.leaf_nodes_.size(); ++leaf) {
    auto& chain = env.chains_[leaf];
    std::size_t node = env.leaf_nodes_[leaf];
    for (std::size_t k = 1; k <= height; ++k) {
      chain.push_back(static_cast<std::uint32_t>(node));
      node = parent[node];
    }
  }

  Rng rng = make_rng(spec.seed, kStructureStream);
  const std::size_t decision_depth = height - spec.decision_level;
  std::vector<std::size_t> action_of_node(env.node_symbols_.size(), 0);
  for (std::size_t i = 0; i < env.node_symbols_.size(); ++i) {
    if (depth_of[i] != decision_depth) continue;
    action_of_node[i] = uniform_index(rng, spec.action_count);
    env.class_actions_.emplace_back(env.node_symbols_[i], action_of_node[i]);
  }
  for (std::size_t leaf = 0; leaf < env.leaf_nodes_.size(); ++leaf) {
    const std::size_t decision_node = env.chains_[leaf][spec.decision_level];
    const std::size_t class_action = action_of_node[decision_node];
    std::size_t action = class_action;
    // One uniform draw per leaf regardless of the outcome keeps the stream aligned.
    if (uniform01(rng) < spec.noise_sigma) action = uniform_index(rng, spec.action_count);
    env.leaf_class_action_.push_back(class_action);
    env.optimal_.push_back(action);
  }

  EmbeddingTable table(spec.embedding_dim, mix_seed(spec.seed ^ mix_seed(kEmbeddingStream)));
  env.embeddings_.resize(static_cast<Eigen::Index>(spec.embedding_dim),
                         static_cast<Eigen::Index>(env.node_symbols_.size()));
  for (std::size_t i = 0; i < env.node_symbols_.size(); ++i) {
    env.embeddings_.col(static_cast<Eigen::Index>(i)) = table.embed(env.node_symbols_[i]);
  }
  env.embeddings_f_ = env.embeddings_.cast<float>();
  return env;
}

const Symbol& ToyEnv::leaf_symbol(LeafId leaf) const {
  return node_symbols_.at(leaf_nodes_.at(leaf));
}

std::size_t ToyEnv::optimal_action(LeafId leaf) const { return optimal_.at(leaf); }

std::size_t ToyEnv::class_action_of(LeafId leaf) const { return leaf_class_action_.at(leaf); }

std::size_t ToyEnv::node_at_level(LeafId leaf, std::size_t level) const {
  if (level < 1 || level > levels()) {
    throw LevelMismatch("observation level " + std::to_string(level) + " outside 1.." +
                        std::to_string(levels()));
  }
  return chains_.at(leaf)[level - 1];
}

HierObservation ToyEnv::observe(LeafId leaf) const {
  HierObservation obs;
  obs.levels.reserve(levels());
  for (std::size_t k = 1; k <= levels(); ++k) {
    obs.levels.emplace_back(embeddings_.col(static_cast<Eigen::Index>(node_at_level(leaf, k))));
  }
  return obs;
}

void ToyEnv::gather(std::span<const LeafId> leaves, std::size_t level, Eigen::MatrixXf& out) const {
  out.resize(embeddings_f_.rows(), static_cast<Eigen::Index>(leaves.size()));
  for (std::size_t b = 0; b < leaves.size(); ++b) {
    out.col(static_cast<Eigen::Index>(b)) =
        embeddings_f_.col(static_cast<Eigen::Index>(node_at_level(leaves[b], level)));
  }
}

std::vector<Eigen::MatrixXf> ToyEnv::gather_levels(std::span<const std::size_t> levels,
                                                   std::span<const LeafId> leaves) const {
  std::vector<Eigen::MatrixXf> out(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) gather(leaves, levels[i], out[i]);
  return out;
}

LeafId ToyEnv::sample_leaf(Split split, Rng& rng) const {
  const auto& pool = leaves(split);
  if (pool.empty()) throw InvalidSpec("split has no leaves");
  return pool[uniform_index(rng, pool.size())];
}

std::pair<HierObservation, LeafId> ToyEnv::sample_episode(Split split, Rng& rng) const {
  const LeafId leaf = sample_leaf(split, rng);
  return {observe(leaf), leaf};
}

StepResult ToyEnv::step(LeafId leaf, std::size_t action) const {
  if (leaf >= optimal_.size()) throw InvalidAction("unknown leaf " + std::to_string(leaf));
  if (action >= spec_.action_count) {
    throw InvalidAction("action " + std::to_string(action) + " outside 0.." +
                        std::to_string(spec_.action_count - 1));
  }
  return {action == optimal_[leaf] ? 1.0 : 0.0, true};
}

nlohmann::json ToyEnv::snapshot() const {
  nlohmann::json j;
  j["spec"] = spec_;
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& [child, parent] : tree_.edges()) edges.push_back({child.str(), parent.str()});
  auto& classes = j["class_actions"] = nlohmann::json::array();
  for (const auto& [node, action] : class_actions_) classes.push_back({node.str(), action});
  auto leaf_rows = [&](const std::vector<LeafId>& ids) {
    nlohmann::json rows = nlohmann::json::array();
    for (LeafId id : ids) rows.push_back({leaf_symbol(id).str(), optimal_[id]});
    return rows;
  };
  j["train_leaves"] = leaf_rows(train_leaves_);
  j["test_leaves"] = leaf_rows(test_leaves_);
  const std::string_view bytes(reinterpret_cast<const char*>(embeddings_f_.data()),
                               static_cast<std::size_t>(embeddings_f_.size()) * sizeof(float));
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  j["embedding_checksum"] = hex;
  return j;
}

}  // namespace absrl
