#include "absrl/symbol_store.hpp"

#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <vector>

#include "absrl/errors.hpp"

namespace absrl {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

EmbeddingTable::EmbeddingTable(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw InvalidSpec("embedding dim must be positive");
}

std::size_t EmbeddingTable::size() const {
  std::shared_lock lock(*mutex_);
  return vectors_.size();
}

Eigen::VectorXd EmbeddingTable::sample(const Symbol& sym) const {
  // Mix the seed into the hash so that nearby seeds give unrelated streams.
  std::uint64_t key = fnv1a64(sym.str()) ^ (seed_ + 0x9e3779b97f4a7c15ULL + (seed_ << 6) + (seed_ >> 2));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim_)));
  Eigen::VectorXd v(dim_);
  for (std::size_t i = 0; i < dim_; ++i) v[i] = dist(rng);
  return v;
}

const Eigen::VectorXd& EmbeddingTable::embed(const Symbol& sym) {
  {
    std::shared_lock lock(*mutex_);
    auto it = vectors_.find(sym);
    if (it != vectors_.end()) return it->second;
  }
  Eigen::VectorXd v = sample(sym);
  std::unique_lock lock(*mutex_);
  // A concurrent writer may have inserted the same (identical) vector first.
  return vectors_.try_emplace(sym, std::move(v)).first->second;
}

Eigen::VectorXd EmbeddingTable::embed_class_set(const SymbolSet& set) {
  if (set.empty()) throw EmptySet("embed_class_set: empty class set");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  for (const auto& s : set) sum += embed(s);
  return sum / static_cast<double>(set.size());
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::shared_lock lock(*mutex_);
  std::map<Symbol, const Eigen::VectorXd*> ordered;
  for (const auto& [s, v] : vectors_) ordered.emplace(s, &v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot open " + path.string() + " for writing");
  const auto dim = static_cast<std::uint32_t>(dim_);
  const auto count = static_cast<std::uint64_t>(ordered.size());
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  std::vector<float> buf(dim_);
  for (const auto& [s, v] : ordered) {
    const auto len = static_cast<std::uint32_t>(s.str().size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(s.str().data(), len);
    for (std::size_t i = 0; i < dim_; ++i) buf[i] = static_cast<float>((*v)[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(dim_ * sizeof(float)));
  }
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileUnreadable("cannot open " + path.string());
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || dim == 0) throw FileUnreadable("embedding dump: bad header in " + path.string());
  EmbeddingTable table(dim, seed);
  std::vector<float> buf(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (!in) throw FileUnreadable("embedding dump: truncated record in " + path.string());
    Eigen::VectorXd v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = buf[i];
    if (!v.allFinite()) throw FileUnreadable("embedding dump: non-finite vector for " + name);
    table.vectors_.insert_or_assign(Symbol(name), std::move(v));
  }
  return table;
}

}  // namespace absrl
