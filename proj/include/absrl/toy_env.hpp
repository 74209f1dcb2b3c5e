#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "absrl/class_tree.hpp"
#include "absrl/random.hpp"

namespace absrl {

struct ToyEnvSpec {
  std::vector<std::size_t> branching{7, 10, 8, 8};
  std::size_t action_count = 5;
  double noise_sigma = 0.0;
  // Abstraction steps above the leaves whose nodes carry the class actions:
  // 1 = parents of leaves, 2 = grandparents, ...
  std::size_t decision_level = 2;
  std::size_t embedding_dim = 300;
  std::uint64_t seed = 0;
  // New unseen leaves attached below each deepest inner node.
  std::size_t test_leaves_per_node = 1;

  /// Throws InvalidSpec.
  void validate() const;
};

void to_json(nlohmann::json& j, const ToyEnvSpec& spec);
void from_json(const nlohmann::json& j, ToyEnvSpec& spec);

enum class Split { kTrain, kTest };

const char* to_string(Split split);

/// Index of a leaf in the environment's leaf table (train and test leaves
/// share one table).
using LeafId = std::uint32_t;

/// One vector per abstraction level: level 1 is the leaf itself, level n
/// the most abstract ancestor below the root.
struct HierObservation {
  std::vector<Eigen::VectorXd> levels;
  std::size_t size() const { return levels.size(); }
  const Eigen::VectorXd& level(std::size_t k) const { return levels.at(k - 1); }
};

struct StepResult {
  double reward = 0.0;
  bool terminal = true;
};

/// One-step benchmark over a rooted tree. Each episode draws a leaf; the
/// reward is 1 for the leaf's optimal action and 0 otherwise. Immutable
/// after generate(); all sampling goes through caller-owned generators.
class ToyEnv {
 public:
  static ToyEnv generate(const ToyEnvSpec& spec);

  const ToyEnvSpec& spec() const { return spec_; }
  const ClassTree& tree() const { return tree_; }

  /// Number of observation levels n (= tree height; the root is constant and
  /// not observed).
  std::size_t levels() const { return tree_.height(); }
  std::size_t embedding_dim() const { return spec_.embedding_dim; }
  std::size_t action_count() const { return spec_.action_count; }
  /// Observation level seen by the oracle (decision_level + 1).
  std::size_t oracle_level() const { return spec_.decision_level + 1; }

  const std::vector<LeafId>& leaves(Split split) const {
    return split == Split::kTrain ? train_leaves_ : test_leaves_;
  }
  std::size_t leaf_count() const { return leaf_nodes_.size(); }
  const Symbol& leaf_symbol(LeafId leaf) const;
  std::size_t optimal_action(LeafId leaf) const;
  /// Class action of the decision-level ancestor of `leaf`.
  std::size_t class_action_of(LeafId leaf) const;
  const std::vector<std::pair<Symbol, std::size_t>>& class_actions() const { return class_actions_; }

  /// Tree node index (column of node_embeddings()) observed at `level` (1-based).
  std::size_t node_at_level(LeafId leaf, std::size_t level) const;
  const Eigen::MatrixXd& node_embeddings() const { return embeddings_; }
  const Eigen::MatrixXf& node_embeddings_f() const { return embeddings_f_; }

  HierObservation observe(LeafId leaf) const;

  /// Copies the level-`level` embeddings of `leaves` into the columns of `out`.
  void gather(std::span<const LeafId> leaves, std::size_t level, Eigen::MatrixXf& out) const;
  /// gather() for each of `levels` in turn.
  std::vector<Eigen::MatrixXf> gather_levels(std::span<const std::size_t> levels,
                                             std::span<const LeafId> leaves) const;

  LeafId sample_leaf(Split split, Rng& rng) const;
  std::pair<HierObservation, LeafId> sample_episode(Split split, Rng& rng) const;

  /// Throws InvalidAction for an out-of-range action or leaf.
  StepResult step(LeafId leaf, std::size_t action) const;

  /// Deterministic description of the generated environment. Embeddings are
  /// represented by an FNV-1a checksum of their f32 bytes.
  nlohmann::json snapshot() const;

 private:
  ToyEnvSpec spec_;
  ClassTree tree_;
  std::vector<Symbol> node_symbols_;
  std::vector<std::size_t> leaf_nodes_;            // leaf id -> node index
  std::vector<std::vector<std::uint32_t>> chains_;  // leaf id -> node index per level
  std::vector<std::size_t> optimal_;
  std::vector<std::size_t> leaf_class_action_;
  std::vector<std::pair<Symbol, std::size_t>> class_actions_;
  std::vector<LeafId> train_leaves_;
  std::vector<LeafId> test_leaves_;
  Eigen::MatrixXd embeddings_;
  Eigen::MatrixXf embeddings_f_;
};

}  // namespace absrl
