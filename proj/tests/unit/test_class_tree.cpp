#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "absrl/class_tree.hpp"
#include "absrl/errors.hpp"
#include "absrl/kg_ingest.hpp"
#include "oracles.hpp"
#include "properties.hpp"

using namespace absrl;

namespace {

ClassTree ten_object_tree() {
  const auto list = EntityList::load(testing::fixture("ten_objects.txt"));
  return ClassTree::from_chains(parse_chain_file(testing::fixture("ten_object_chains.tsv"), list).chains,
                                {.strict = true});
}

void report(const testing::PropertyResult& r) {
  for (const auto& n : r.notes) MESSAGE(n);
  CHECK(r.pass);
}

}  // namespace

TEST_CASE("symbols are normalized") {
  CHECK(Symbol("  Apple   Pie ") == Symbol("apple pie"));
  CHECK_THROWS_AS(Symbol("   "), EmptyInput);
}

TEST_CASE("fruit chains merge into one class") {
  const auto tree = ClassTree::from_chains(
      ChainList{{"apple", {"fruit", "entity"}}, {"pear", {"fruit", "entity"}}});
  CHECK(tree.root() == Symbol("entity"));
  CHECK(tree.height() == 2);
  CHECK(tree.children("entity") == std::vector<Symbol>{"fruit"});
  CHECK(tree.children("fruit") == std::vector<Symbol>{"apple", "pear"});
  CHECK(tree.objects() == std::vector<Symbol>{"apple", "pear"});
  CHECK(tree.layer_sizes() == std::vector<std::size_t>{1, 1, 2});
}

TEST_CASE("node set is the union of chain symbols") {
  const auto tree = ten_object_tree();
  std::set<Symbol> expected;
  std::ifstream in(testing::fixture("ten_object_chains.tsv"));
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) expected.insert(Symbol(field));
  }
  const auto nodes = tree.nodes();
  CHECK(std::set<Symbol>(nodes.begin(), nodes.end()) == expected);
  CHECK(nodes.size() == expected.size());
  CHECK(tree.height() == 5);
  CHECK(tree.depth("car") == 5);
  CHECK(tree.depth("stone") == 2);
  CHECK(tree.objects().size() == 10);
  tree.validate();
}

TEST_CASE("empty chains hang below the root") {
  const auto tree = ClassTree::from_chains(ChainList{{"apple", {"fruit", "entity"}}, {"rock", {}}});
  CHECK(tree.parent("rock") == Symbol("entity"));
  CHECK(tree.is_object("rock"));
}

TEST_CASE("conflicting parents") {
  const ChainList chains{{"apple", {"fruit", "entity"}}, {"pear", {"fruit", "food", "entity"}}};
  CHECK_THROWS_AS(ClassTree::from_chains(chains, {.strict = true}), ConflictingParent);
  const auto tree = ClassTree::from_chains(chains);
  CHECK(tree.parent("fruit") == Symbol("entity"));
  CHECK(tree.warnings().size() == 1);
}

TEST_CASE("invalid input") {
  CHECK_THROWS_AS(ClassTree::from_chains(ChainList{}), EmptyInput);
  CHECK_THROWS_AS(ClassTree::from_chains(ChainList{{"a", {"b", "entity"}}, {"c", {"d", "other"}}}), InvalidTree);
  CHECK_THROWS_AS(ClassTree::from_edges({{"a", "b"}, {"b", "a"}}), InvalidTree);
  const auto tree = ten_object_tree();
  CHECK_THROWS_AS(tree.depth("unicorn"), UnknownSymbol);
}

TEST_CASE("entity abstraction lifts one depth per level") {
  const auto tree = ClassTree::from_chains(
      ChainList{{"apple", {"fruit", "entity"}}, {"pear", {"fruit", "entity"}}});
  CHECK(entity_abstraction(tree, 1, "apple") == Symbol("fruit"));
  CHECK(entity_abstraction(tree, 1, "fruit") == Symbol("fruit"));
  CHECK(entity_abstraction(tree, 2, "fruit") == Symbol("entity"));
  CHECK(entity_abstraction(tree, 2, "apple") == Symbol("apple"));
  CHECK_THROWS_AS(entity_abstraction(tree, 0, "apple"), LevelMismatch);
  CHECK_THROWS_AS(entity_abstraction(tree, 3, "apple"), LevelMismatch);
}

TEST_CASE("state abstraction walked by hand") {
  const auto tree = ten_object_tree();
  const auto hierarchy = build_hierarchy(tree);
  REQUIRE(hierarchy.levels() == 5);
  const SymbolSet state{"apple", "pear", "carrot", "hammer", "car", "stone"};
  const std::vector<SymbolSet> expected{
      {"apple", "pear", "carrot", "hammer", "motor vehicle", "stone"},
      {"apple", "pear", "carrot", "hand tool", "wheeled vehicle", "stone"},
      {"fruit", "vegetable", "tool", "vehicle", "stone"},
      {"food", "artifact", "material"},
      {"entity"},
  };
  for (std::size_t i = 1; i <= 5; ++i) {
    CAPTURE(i);
    CHECK(hierarchy.abstract_state(i, state) == expected[i - 1]);
  }
  // One step of the level-3 map on the level-2 state.
  CHECK(state_abstraction(tree, 3, expected[1]) == expected[2]);
  CHECK(hierarchy.chain("car") ==
        std::vector<Symbol>{"car", "motor vehicle", "wheeled vehicle", "vehicle", "artifact", "entity"});
}

TEST_CASE("class-set hierarchy") {
  std::map<Symbol, std::vector<SymbolSet>> sets{
      {"airplane", {{"aircraft", "fixed-wing aircraft"}, {"vehicle"}}},
      {"ghost", {{"entity"}, {"entity"}}},
  };
  const auto h = AbstractionHierarchy::from_class_sets(sets);
  CHECK_FALSE(h.tree_mode());
  CHECK(h.levels() == 2);
  CHECK(std::get<SymbolSet>(h.map(1, "airplane")) == SymbolSet{"aircraft", "fixed-wing aircraft"});
  CHECK_THROWS_AS(h.map(1, "unicorn"), UnknownSymbol);
  sets["ghost"].pop_back();
  CHECK_THROWS(AbstractionHierarchy::from_class_sets(sets));
}

TEST_CASE("explicit collapse splices a single-child layer") {
  const auto tree = ClassTree::from_chains(ChainList{{"x", {"b", "a", "entity"}}});
  const auto collapsed = collapse_layers(tree, CollapseSpec::explicit_depths({2}));
  CHECK(collapsed.parent("x") == Symbol("a"));
  CHECK(collapsed.height() == 2);
  CHECK_FALSE(collapsed.contains("b"));
  CHECK_THROWS_AS(collapse_layers(tree, CollapseSpec::explicit_depths({0})), CannotCollapseRoot);
  CHECK_THROWS_AS(collapse_layers(tree, CollapseSpec::explicit_depths({3})), CannotCollapseLeafLayer);
}

TEST_CASE("automatic collapse on layer sizes 1, 3, 28, 30, 148") {
  std::vector<std::pair<Symbol, Symbol>> edges;
  auto name = [](const char* p, int i) { return Symbol(std::string(p) + std::to_string(i)); };
  for (int i = 0; i < 3; ++i) edges.emplace_back(name("a", i), "entity");
  for (int i = 0; i < 28; ++i) edges.emplace_back(name("b", i), name("a", i % 3));
  for (int i = 0; i < 30; ++i) edges.emplace_back(name("c", i), name("b", i % 28));
  for (int i = 0; i < 148; ++i) edges.emplace_back(name("o", i), name("c", i % 30));
  const auto tree = ClassTree::from_edges(edges);
  REQUIRE(tree.layer_sizes() == std::vector<std::size_t>{1, 3, 28, 30, 148});
  CHECK(auto_collapse_depths(tree, 0.9) == std::vector<std::size_t>{2});
  const auto collapsed = collapse_layers(tree, CollapseSpec::automatic());
  CHECK(collapsed.layer_sizes() == std::vector<std::size_t>{1, 3, 30, 148});
  CHECK(collapsed.objects().size() == 148);
  CHECK(collapsed.parent("c0") == Symbol("a0"));
}

TEST_CASE("tree TSV round trip") {
  const auto tree = ten_object_tree();
  std::stringstream ss;
  write_tree_tsv(tree, ss);
  const auto back = read_tree_tsv(ss);
  const auto edges = tree.edges(), back_edges = back.edges();
  CHECK(std::set(back_edges.begin(), back_edges.end()) == std::set(edges.begin(), edges.end()));
  const auto objects = tree.objects(), back_objects = back.objects();
  CHECK(std::set(back_objects.begin(), back_objects.end()) == std::set(objects.begin(), objects.end()));
  std::stringstream bad("a\tb\tc\n");
  CHECK_THROWS(read_tree_tsv(bad));
}

TEST_CASE("abstraction properties on random trees") { report(testing::check_abstraction_suite(7, 200)); }
