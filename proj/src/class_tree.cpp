#include "absrl/class_tree.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "absrl/errors.hpp"

namespace absrl {

std::string normalize_symbol(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

Symbol::Symbol(std::string_view raw) : name_(normalize_symbol(raw)) {
  if (name_.empty()) throw EmptyInput("symbol is empty after normalization");
}

// ---------------------------------------------------------------------------
// ClassTree

ClassTree::NodeId ClassTree::id_of(const Symbol& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) throw UnknownSymbol("symbol not in class tree: " + s.str());
  return it->second;
}

ClassTree::NodeId ClassTree::add_node(const Symbol& s) {
  auto [it, inserted] = index_.try_emplace(s, static_cast<NodeId>(nodes_.size()));
  if (inserted) nodes_.push_back(Node{s, std::nullopt, {}, 0, false});
  return it->second;
}

void ClassTree::finalize() {
  // Depths by BFS from the root; anything not reached sits on a cycle or a
  // second component.
  std::vector<bool> seen(nodes_.size(), false);
  std::deque<NodeId> queue{0};
  seen[0] = true;
  nodes_[0].depth = 0;
  height_ = 0;
  std::size_t reached = 1;
  while (!queue.empty()) {
    const NodeId id = queue.front();
    queue.pop_front();
    for (NodeId c : nodes_[id].children) {
      if (seen[c]) throw InvalidTree("node reached twice: " + nodes_[c].name.str());
      seen[c] = true;
      ++reached;
      nodes_[c].depth = nodes_[id].depth + 1;
      height_ = std::max(height_, nodes_[c].depth);
      queue.push_back(c);
    }
  }
  if (reached != nodes_.size()) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!seen[i]) throw InvalidTree("node not reachable from root: " + nodes_[i].name.str());
    }
  }
  objects_.clear();
  for (const auto& n : nodes_) {
    if (n.object) objects_.push_back(n.name);
  }
}

ClassTree ClassTree::from_chains(const std::map<Symbol, Chain>& chains, const BuildOptions& options) {
  return from_chains(ChainList(chains.begin(), chains.end()), options);
}

ClassTree ClassTree::from_chains(const ChainList& chains, const BuildOptions& options) {
  if (chains.empty()) throw EmptyInput("from_chains: no chains");

  std::optional<Symbol> root;
  for (const auto& [object, chain] : chains) {
    if (chain.empty()) continue;
    if (!root) {
      root = chain.back();
    } else if (chain.back() != *root) {
      throw InvalidTree("chain of '" + object.str() + "' ends at '" + chain.back().str() +
                        "', expected root '" + root->str() + "'");
    }
  }

  ClassTree tree;
  tree.add_node(root.value_or(options.default_root));

  SymbolSet classes;
  for (const auto& [object, chain] : chains) classes.insert(chain.begin(), chain.end());

  SymbolSet objects_seen;
  for (const auto& [object, chain] : chains) {
    if (!objects_seen.insert(object).second) {
      tree.warnings_.push_back("duplicate object '" + object.str() + "' ignored");
      continue;
    }
    if (classes.contains(object)) {
      throw InvalidTree("object '" + object.str() + "' also appears as a superclass");
    }
    // Root-to-leaf path: reversed chain, then the object itself.
    std::vector<Symbol> path(chain.rbegin(), chain.rend());
    path.push_back(object);
    if (path.size() == 1) path.insert(path.begin(), tree.root());
    SymbolSet unique(path.begin(), path.end());
    if (unique.size() != path.size()) {
      throw InvalidTree("chain of '" + object.str() + "' repeats a symbol");
    }
    for (std::size_t k = 1; k < path.size(); ++k) {
      const Symbol& parent = path[k - 1];
      const Symbol& child = path[k];
      const NodeId parent_id = tree.add_node(parent);
      const bool existed = tree.contains(child);
      const NodeId child_id = tree.add_node(child);
      Node& node = tree.nodes_[child_id];
      if (child_id == 0) throw InvalidTree("root '" + child.str() + "' appears below another node");
      if (existed && node.parent.has_value()) {
        if (*node.parent != parent_id) {
          const std::string msg = "'" + child.str() + "' has parents '" +
                                  tree.nodes_[*node.parent].name.str() + "' and '" + parent.str() +
                                  "'";
          if (options.strict) throw ConflictingParent(msg);
          tree.warnings_.push_back(msg + "; keeping the first");
        }
        continue;
      }
      node.parent = parent_id;
      tree.nodes_[parent_id].children.push_back(child_id);
    }
    tree.nodes_[tree.id_of(object)].object = true;
  }
  tree.finalize();
  return tree;
}

ClassTree ClassTree::from_edges(const std::vector<std::pair<Symbol, Symbol>>& edges,
                                const BuildOptions& options) {
  if (edges.empty()) throw EmptyInput("from_edges: no edges");
  // child -> parent, first edge wins
  std::unordered_map<Symbol, Symbol> parent_of;
  std::unordered_map<Symbol, std::vector<Symbol>> children_of;
  std::vector<Symbol> order;
  SymbolSet known;
  std::vector<std::string> warnings;
  auto remember = [&](const Symbol& s) {
    if (known.insert(s).second) order.push_back(s);
  };
  for (const auto& [child, parent] : edges) {
    if (child == parent) throw InvalidTree("self-loop on '" + child.str() + "'");
    remember(parent);
    remember(child);
    auto it = parent_of.find(child);
    if (it != parent_of.end()) {
      if (it->second != parent) {
        const std::string msg =
            "'" + child.str() + "' has parents '" + it->second.str() + "' and '" + parent.str() + "'";
        if (options.strict) throw ConflictingParent(msg);
        warnings.push_back(msg + "; keeping the first");
      }
      continue;
    }
    parent_of.emplace(child, parent);
    children_of[parent].push_back(child);
  }
  std::vector<Symbol> roots;
  for (const auto& s : order) {
    if (!parent_of.contains(s)) roots.push_back(s);
  }
  if (roots.size() != 1) {
    throw InvalidTree("expected exactly one root, found " + std::to_string(roots.size()));
  }

  ClassTree tree;
  tree.warnings_ = std::move(warnings);
  std::deque<Symbol> queue{roots.front()};
  tree.add_node(roots.front());
  while (!queue.empty()) {
    const Symbol current = queue.front();
    queue.pop_front();
    const NodeId pid = tree.id_of(current);
    auto it = children_of.find(current);
    if (it == children_of.end()) {
      tree.nodes_[pid].object = pid != 0;
      continue;
    }
    for (const auto& c : it->second) {
      const NodeId cid = tree.add_node(c);
      tree.nodes_[cid].parent = pid;
      tree.nodes_[pid].children.push_back(cid);
      queue.push_back(c);
    }
  }
  if (tree.nodes_.size() != order.size()) {
    throw InvalidTree("edges contain a cycle detached from the root");
  }
  tree.finalize();
  return tree;
}

std::optional<Symbol> ClassTree::parent(const Symbol& s) const {
  const auto& node = nodes_[id_of(s)];
  if (!node.parent) return std::nullopt;
  return nodes_[*node.parent].name;
}

std::vector<Symbol> ClassTree::children(const Symbol& s) const {
  std::vector<Symbol> out;
  for (NodeId c : nodes_[id_of(s)].children) out.push_back(nodes_[c].name);
  return out;
}

std::size_t ClassTree::depth(const Symbol& s) const { return nodes_[id_of(s)].depth; }

bool ClassTree::is_object(const Symbol& s) const { return nodes_[id_of(s)].object; }

std::vector<Symbol> ClassTree::nodes() const {
  std::vector<Symbol> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.name);
  return out;
}

std::vector<Symbol> ClassTree::nodes_at_depth(std::size_t depth) const {
  std::vector<Symbol> out;
  for (const auto& n : nodes_) {
    if (n.depth == depth) out.push_back(n.name);
  }
  return out;
}

std::vector<std::size_t> ClassTree::layer_sizes() const {
  std::vector<std::size_t> sizes(height_ + 1, 0);
  for (const auto& n : nodes_) ++sizes[n.depth];
  return sizes;
}

std::vector<std::pair<Symbol, Symbol>> ClassTree::edges() const {
  std::vector<std::pair<Symbol, Symbol>> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    if (n.parent) out.emplace_back(n.name, nodes_[*n.parent].name);
  }
  return out;
}

Symbol ClassTree::ancestor_at_depth(const Symbol& s, std::size_t depth) const {
  NodeId id = id_of(s);
  while (nodes_[id].depth > depth) id = *nodes_[id].parent;
  return nodes_[id].name;
}

void ClassTree::validate() const {
  if (nodes_.empty()) throw InvalidTree("empty tree");
  if (nodes_[0].parent) throw InvalidTree("root has a parent");
  std::size_t max_depth = 0;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!n.parent) throw InvalidTree("second root: " + n.name.str());
    if (n.depth != nodes_[*n.parent].depth + 1) throw InvalidTree("depth mismatch at " + n.name.str());
    max_depth = std::max(max_depth, n.depth);
    // Parent-following must reach the root within height() steps.
    NodeId id = static_cast<NodeId>(i);
    std::size_t steps = 0;
    while (nodes_[id].parent) {
      id = *nodes_[id].parent;
      if (++steps > height_) throw InvalidTree("cycle through " + n.name.str());
    }
    if (n.object && !n.children.empty()) throw InvalidTree("object is not a leaf: " + n.name.str());
  }
  if (max_depth != height_) throw InvalidTree("height out of date");
}

// ---------------------------------------------------------------------------
// Collapsing

std::vector<std::size_t> auto_collapse_depths(const ClassTree& tree, double ratio) {
  const auto sizes = tree.layer_sizes();
  std::vector<bool> has_object(sizes.size(), false);
  for (const auto& o : tree.objects()) has_object[tree.depth(o)] = true;
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k + 1 < sizes.size(); ++k) {
    if (has_object[k]) continue;
    if (static_cast<double>(sizes[k]) / static_cast<double>(sizes[k + 1]) > ratio) out.push_back(k);
  }
  return out;
}

ClassTree collapse_layers(const ClassTree& tree, const CollapseSpec& spec) {
  std::vector<std::size_t> depths =
      spec.ratio ? auto_collapse_depths(tree, *spec.ratio) : spec.depths;
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  if (depths.empty()) return tree;
  std::vector<bool> removed(tree.height() + 1, false);
  for (std::size_t d : depths) {
    if (d == 0) throw CannotCollapseRoot("cannot collapse depth 0 (root)");
    if (d > tree.height()) continue;
    removed[d] = true;
  }
  for (const auto& o : tree.objects()) {
    if (removed[tree.depth(o)]) {
      throw CannotCollapseLeafLayer("collapsing depth " + std::to_string(tree.depth(o)) +
                                    " would delete object '" + o.str() + "'");
    }
  }
  std::vector<std::pair<Symbol, Symbol>> edges;
  for (const auto& [child, parent] : tree.edges()) {
    if (removed[tree.depth(child)]) continue;
    Symbol p = parent;
    while (removed[tree.depth(p)]) p = *tree.parent(p);
    edges.emplace_back(child, p);
  }
  if (edges.empty()) return tree;
  ClassTree out = ClassTree::from_edges(edges, {.strict = true});
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Abstraction functions

Symbol entity_abstraction(const ClassTree& tree, std::size_t level, const Symbol& e) {
  const std::size_t height = tree.height();
  if (level < 1 || level > height) {
    throw LevelMismatch("entity_abstraction: level " + std::to_string(level) +
                        " outside 1.." + std::to_string(height));
  }
  if (tree.depth(e) == height + 1 - level) return *tree.parent(e);
  return e;
}

SymbolSet state_abstraction(const ClassTree& tree, std::size_t level, const SymbolSet& state) {
  SymbolSet out;
  for (const auto& e : state) out.insert(entity_abstraction(tree, level, e));
  return out;
}

AbstractionHierarchy AbstractionHierarchy::from_tree(const ClassTree& tree) {
  AbstractionHierarchy h;
  h.tree_mode_ = true;
  h.vocabulary_ = tree.nodes();
  h.maps_.resize(tree.height());
  for (std::size_t i = 1; i <= tree.height(); ++i) {
    auto& m = h.maps_[i - 1];
    m.reserve(h.vocabulary_.size());
    for (const auto& s : h.vocabulary_) m.emplace(s, entity_abstraction(tree, i, s));
  }
  return h;
}

AbstractionHierarchy AbstractionHierarchy::from_class_sets(
    const std::map<Symbol, std::vector<SymbolSet>>& sets) {
  if (sets.empty()) throw EmptyInput("from_class_sets: no objects");
  const std::size_t n = sets.begin()->second.size();
  if (n == 0) throw InvalidTree("from_class_sets: no levels");
  AbstractionHierarchy h;
  h.tree_mode_ = false;
  h.maps_.resize(n);
  SymbolSet vocab;
  for (const auto& [object, levels] : sets) {
    if (levels.size() != n) throw LevelMismatch("from_class_sets: '" + object.str() + "' level count");
    vocab.insert(object);
    for (std::size_t i = 0; i < n; ++i) {
      if (levels[i].empty()) throw EmptySet("from_class_sets: empty class set for " + object.str());
      h.maps_[i].emplace(object, levels[i]);
      vocab.insert(levels[i].begin(), levels[i].end());
    }
  }
  // Class symbols map to themselves so every map stays total on the vocabulary.
  for (const auto& s : vocab) {
    for (auto& m : h.maps_) m.try_emplace(s, s);
  }
  h.vocabulary_.assign(vocab.begin(), vocab.end());
  return h;
}

const SymbolTarget& AbstractionHierarchy::map(std::size_t level, const Symbol& s) const {
  if (level < 1 || level > maps_.size()) {
    throw LevelMismatch("AbstractionHierarchy::map: level " + std::to_string(level) + " out of range");
  }
  const auto& m = maps_[level - 1];
  auto it = m.find(s);
  if (it == m.end()) throw UnknownSymbol("symbol not in hierarchy vocabulary: " + s.str());
  return it->second;
}

std::vector<Symbol> AbstractionHierarchy::chain(const Symbol& object) const {
  if (!tree_mode_) throw InvalidTree("chain() requires a tree-mode hierarchy");
  std::vector<Symbol> out{object};
  for (std::size_t i = 1; i <= maps_.size(); ++i) {
    out.push_back(std::get<Symbol>(map(i, out.back())));
  }
  return out;
}

SymbolSet AbstractionHierarchy::abstract_state(std::size_t level, const SymbolSet& state) const {
  if (!tree_mode_) throw InvalidTree("abstract_state() requires a tree-mode hierarchy");
  SymbolSet current = state;
  for (std::size_t i = 1; i <= level; ++i) {
    SymbolSet next;
    for (const auto& s : current) next.insert(std::get<Symbol>(map(i, s)));
    current = std::move(next);
  }
  return current;
}

// ---------------------------------------------------------------------------
// TSV

void write_tree_tsv(const ClassTree& tree, std::ostream& out) {
  for (const auto& [child, parent] : tree.edges()) out << child.str() << '\t' << parent.str() << '\n';
}

void write_tree_tsv(const ClassTree& tree, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FileUnreadable("cannot open " + path.string() + " for writing");
  write_tree_tsv(tree, out);
}

ClassTree read_tree_tsv(std::istream& in) {
  std::vector<std::pair<Symbol, Symbol>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw MalformedLine("tree tsv line " + std::to_string(lineno) + ": expected child<TAB>parent");
    }
    const std::string child = normalize_symbol(line.substr(0, tab));
    const std::string parent = normalize_symbol(line.substr(tab + 1));
    if (child.empty() || parent.empty()) {
      throw MalformedLine("tree tsv line " + std::to_string(lineno) + ": empty field");
    }
    edges.emplace_back(Symbol(child), Symbol(parent));
  }
  return ClassTree::from_edges(edges);
}

ClassTree read_tree_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable("cannot open " + path.string());
  return read_tree_tsv(in);
}

}  // namespace absrl
