#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>
#include <unistd.h>

#include "doctest.h"

#include "absrl/errors.hpp"
#include "absrl/symbol_store.hpp"

using namespace absrl;

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("embeddings are deterministic per seed and symbol") {
  EmbeddingTable a(300, 7), b(300, 7), c(300, 8);
  const Eigen::VectorXd first = a.embed("apple");
  CHECK(first.size() == 300);
  CHECK(a.embed("apple") == first);
  // Lookup order does not matter.
  b.embed("pear");
  CHECK(b.embed("apple") == first);
  CHECK(c.embed("apple") != first);
  CHECK(a.size() == 1);
}

TEST_CASE("entries are roughly N(0, 1/dim)") {
  EmbeddingTable table(300, 1);
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto& v = table.embed(Symbol("s" + std::to_string(i)));
    sum += v.sum();
    sq += v.squaredNorm();
    count += static_cast<std::size_t>(v.size());
  }
  const double mean = sum / static_cast<double>(count);
  const double var = sq / static_cast<double>(count) - mean * mean;
  CHECK(std::abs(mean) < 1e-3);
  CHECK(var == doctest::Approx(1.0 / 300.0).epsilon(0.02));
}

TEST_CASE("distinct symbols are nearly orthogonal") {
  EmbeddingTable table(300, 3);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto& u = table.embed(Symbol("left" + std::to_string(i)));
    const auto& v = table.embed(Symbol("right" + std::to_string(i)));
    worst = std::max(worst, std::abs(u.dot(v)) / (u.norm() * v.norm()));
  }
  CHECK(worst < 0.5);
}

TEST_CASE("class-set embedding is the member mean") {
  EmbeddingTable table(16, 5);
  CHECK(table.embed_class_set({"fruit"}) == table.embed("fruit"));
  const SymbolSet set{"fruit", "food", "plant"};
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(16);
  for (int k = 0; k < 16; ++k) {
    double acc = 0.0;
    for (const auto& s : set) acc += table.embed(s)[k];
    expected[k] = acc / 3.0;
  }
  CHECK((table.embed_class_set(set) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(table.embed_class_set({}), EmptySet);
}

TEST_CASE("concurrent lookups agree") {
  EmbeddingTable table(32, 11);
  std::vector<std::thread> threads;
  std::vector<std::vector<Eigen::VectorXd>> seen(4);
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 200; ++i) seen[t].push_back(table.embed(Symbol("x" + std::to_string(i))));
    });
  }
  for (auto& th : threads) th.join();
  for (int t = 1; t < 4; ++t) CHECK(seen[t] == seen[0]);
  CHECK(table.size() == 200);
}

TEST_CASE("save and load") {
  const auto path = std::filesystem::temp_directory_path() / ("absrl_emb_" + std::to_string(::getpid()) + ".bin");
  EmbeddingTable table(8, 2);
  table.embed("apple");
  table.embed("pear");
  table.save(path);
  auto loaded = EmbeddingTable::load(path, 99);
  CHECK(loaded.dim() == 8);
  CHECK(loaded.size() == 2);
  CHECK(loaded.embed("apple") == table.embed("apple").cast<float>().cast<double>());
  {
    std::ofstream trunc(path, std::ios::binary | std::ios::trunc);
    trunc << "xx";
  }
  CHECK_THROWS_AS(EmbeddingTable::load(path), FileUnreadable);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(EmbeddingTable::load(path), FileUnreadable);
}
