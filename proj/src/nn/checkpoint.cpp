#include "absrl/nn/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "absrl/errors.hpp"

namespace absrl::nn {
namespace {

constexpr std::array<char, 8> kMagic = {'A', 'B', 'R', 'L', 'C', 'K', 'P', 'T'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FileUnreadable("checkpoint: truncated file");
  return v;
}

void read_floats(std::ifstream& in, float* dst, std::size_t count) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw FileUnreadable("checkpoint: truncated file");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedParams>& nets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("checkpoint: cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto& [name, params] : nets) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
      write_u32(out, static_cast<std::uint32_t>(layer.weight.rows()));
      write_u32(out, static_cast<std::uint32_t>(layer.weight.cols()));
      out.write(reinterpret_cast<const char*>(layer.weight.data()),
                static_cast<std::streamsize>(layer.weight.size() * sizeof(float)));
      out.write(reinterpret_cast<const char*>(layer.bias.data()),
                static_cast<std::streamsize>(layer.bias.size() * sizeof(float)));
    }
  }
  if (!out) throw FileUnreadable("checkpoint: write failed for " + path.string());
}

std::vector<NamedParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileUnreadable("checkpoint: cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FileUnreadable("checkpoint: bad magic in " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw FileUnreadable("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32(in);
  std::vector<NamedParams> nets;
  nets.reserve(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name(read_u32(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    MlpParams<float> params;
    const std::uint32_t layers = read_u32(in);
    for (std::uint32_t l = 0; l < layers; ++l) {
      const std::uint32_t rows = read_u32(in);
      const std::uint32_t cols = read_u32(in);
      DenseLayer<float> layer{Matrix<float>(rows, cols), Vector<float>(rows)};
      read_floats(in, layer.weight.data(), static_cast<std::size_t>(rows) * cols);
      read_floats(in, layer.bias.data(), rows);
      if (!params.layers.empty() && params.layers.back().weight.rows() != cols) {
        throw ShapeMismatch("checkpoint: inconsistent layer shapes in " + name);
      }
      params.layers.push_back(std::move(layer));
    }
    nets.emplace_back(std::move(name), std::move(params));
  }
  return nets;
}

}  // namespace absrl::nn
