#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>

#include <Eigen/Core>

#include "absrl/symbol.hpp"

namespace absrl {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Symbol -> vector table. Vectors are drawn lazily from N(0, 1/dim) with a
/// generator keyed by (seed, symbol), so a symbol's vector depends on nothing
/// else. Lookups are safe from several threads.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 300, std::uint64_t seed = 0);

  EmbeddingTable(const EmbeddingTable&) = delete;
  EmbeddingTable& operator=(const EmbeddingTable&) = delete;
  EmbeddingTable(EmbeddingTable&&) = default;
  EmbeddingTable& operator=(EmbeddingTable&&) = default;

  std::size_t dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const;

  /// Stable reference: entries are never erased or moved.
  const Eigen::VectorXd& embed(const Symbol& sym);

  /// Arithmetic mean of the member embeddings. Throws EmptySet.
  Eigen::VectorXd embed_class_set(const SymbolSet& set);

  /// Header (u32 dim, u64 count) then per record: u32 name_len, name,
  /// f32[dim]. Records are written in symbol order.
  void save(const std::filesystem::path& path) const;
  /// Loaded vectors take precedence over lazily sampled ones.
  static EmbeddingTable load(const std::filesystem::path& path, std::uint64_t seed = 0);

 private:
  Eigen::VectorXd sample(const Symbol& sym) const;

  std::size_t dim_;
  std::uint64_t seed_;
  std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
  std::unordered_map<Symbol, Eigen::VectorXd> vectors_;
};

}  // namespace absrl
