#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "absrl/symbol.hpp"

namespace absrl {

/// Superclass chain of one object, nearest superclass first, root last.
using Chain = std::vector<Symbol>;
using ChainList = std::vector<std::pair<Symbol, Chain>>;

struct TreeBuildOptions {
  // Throw ConflictingParent instead of keeping the first-seen parent.
  bool strict = false;
  // Root used when every chain is empty.
  Symbol default_root = Symbol("entity");
};

/// Rooted tree whose leaves are objects and whose inner nodes are classes.
/// The root has depth 0; height() is the maximum depth over all nodes.
/// Immutable once built.
class ClassTree {
 public:
  using BuildOptions = TreeBuildOptions;

  /// Merges superclass chains into one tree. Equal class names become one
  /// node; objects with an empty chain hang directly below the root.
  static ClassTree from_chains(const ChainList& chains, const BuildOptions& options);
  static ClassTree from_chains(const ChainList& chains) { return from_chains(chains, {}); }
  static ClassTree from_chains(const std::map<Symbol, Chain>& chains,
                               const BuildOptions& options = {});

  /// Builds from child -> parent edges. Every leaf becomes an object.
  static ClassTree from_edges(const std::vector<std::pair<Symbol, Symbol>>& edges,
                              const BuildOptions& options = {});

  const Symbol& root() const { return nodes_.front().name; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t height() const { return height_; }

  bool contains(const Symbol& s) const { return index_.contains(s); }
  /// Parent of `s`; nullopt for the root. Throws UnknownSymbol.
  std::optional<Symbol> parent(const Symbol& s) const;
  std::vector<Symbol> children(const Symbol& s) const;
  std::size_t depth(const Symbol& s) const;
  bool is_object(const Symbol& s) const;

  const std::vector<Symbol>& objects() const { return objects_; }
  /// All node names in construction order (root first).
  std::vector<Symbol> nodes() const;
  std::vector<Symbol> nodes_at_depth(std::size_t depth) const;
  /// |C_k| for k = 0..height().
  std::vector<std::size_t> layer_sizes() const;
  /// child -> parent pairs in construction order.
  std::vector<std::pair<Symbol, Symbol>> edges() const;
  /// Ancestor of `s` at `depth` (s itself when depth(s) <= depth).
  Symbol ancestor_at_depth(const Symbol& s, std::size_t depth) const;

  /// Non-fatal issues met while building (e.g. first-seen parent kept).
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Re-checks every structural invariant; throws InvalidTree on violation.
  void validate() const;

 private:
  using NodeId = std::uint32_t;
  struct Node {
    Symbol name;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;
    std::size_t depth = 0;
    bool object = false;
  };

  NodeId id_of(const Symbol& s) const;
  NodeId add_node(const Symbol& s);
  void finalize();

  std::vector<Node> nodes_;
  std::unordered_map<Symbol, NodeId> index_;
  std::vector<Symbol> objects_;
  std::size_t height_ = 0;
  std::vector<std::string> warnings_;
};

/// Which depths collapse_layers() splices out. Either an explicit list or
/// the automatic rule: drop depth k when |C_k| / |C_{k+1}| > ratio.
struct CollapseSpec {
  std::vector<std::size_t> depths;
  std::optional<double> ratio;

  static CollapseSpec explicit_depths(std::vector<std::size_t> d) { return {std::move(d), {}}; }
  static CollapseSpec automatic(double ratio = 0.9) { return {{}, ratio}; }
};

/// Depths the automatic rule would remove. Depths holding objects and the
/// root are never selected.
std::vector<std::size_t> auto_collapse_depths(const ClassTree& tree, double ratio);

/// Splices out every node at the selected depths, re-parenting its children
/// to its parent. Throws CannotCollapseRoot / CannotCollapseLeafLayer.
ClassTree collapse_layers(const ClassTree& tree, const CollapseSpec& spec);

/// Level-i entity abstraction: parent(e) when depth(e) == L + 1 - i, else e.
/// Requires 1 <= i <= L.
Symbol entity_abstraction(const ClassTree& tree, std::size_t level, const Symbol& e);

/// Image of a state (set of symbols) under entity_abstraction.
SymbolSet state_abstraction(const ClassTree& tree, std::size_t level, const SymbolSet& state);

/// Target of one entity map entry: a single symbol (tree mode) or a class set.
using SymbolTarget = std::variant<Symbol, SymbolSet>;

/// Precomputed entity maps for levels 1..n.
class AbstractionHierarchy {
 public:
  /// Tree mode: n = L, map i tabulates entity_abstraction(tree, i, .).
  static AbstractionHierarchy from_tree(const ClassTree& tree);

  /// Class-set mode: `sets[obj][i-1]` is the level-i class set of obj. All
  /// objects must provide the same number of non-empty levels.
  static AbstractionHierarchy from_class_sets(const std::map<Symbol, std::vector<SymbolSet>>& sets);

  std::size_t levels() const { return maps_.size(); }
  bool tree_mode() const { return tree_mode_; }

  /// Level-i image of `s` (1-based level). Symbols outside the vocabulary
  /// throw UnknownSymbol.
  const SymbolTarget& map(std::size_t level, const Symbol& s) const;

  /// Tree mode only: s_0 = object, s_k = map_k(s_{k-1}) for k = 1..n.
  std::vector<Symbol> chain(const Symbol& object) const;

  /// Tree mode only: image of a state after applying maps 1..level in order.
  SymbolSet abstract_state(std::size_t level, const SymbolSet& state) const;

  const std::vector<Symbol>& vocabulary() const { return vocabulary_; }

 private:
  bool tree_mode_ = true;
  std::vector<std::unordered_map<Symbol, SymbolTarget>> maps_;
  std::vector<Symbol> vocabulary_;
};

inline AbstractionHierarchy build_hierarchy(const ClassTree& tree) {
  return AbstractionHierarchy::from_tree(tree);
}

/// `child<TAB>parent` per line, construction order.
void write_tree_tsv(const ClassTree& tree, std::ostream& out);
void write_tree_tsv(const ClassTree& tree, const std::filesystem::path& path);
ClassTree read_tree_tsv(std::istream& in);
ClassTree read_tree_tsv(const std::filesystem::path& path);

}  // namespace absrl
