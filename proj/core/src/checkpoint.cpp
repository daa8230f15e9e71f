#include "difftad/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace difftad {

namespace {

constexpr char kMagic[8] = {'D', 'T', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

float read_f32(std::istream& is) {
  std::uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

ParamStore* Checkpoint::find(const std::string& modality) {
  for (auto& [name, store] : stores) {
    if (name == modality) return &store;
  }
  return nullptr;
}

const ParamStore* Checkpoint::find(const std::string& modality) const {
  for (const auto& [name, store] : stores) {
    if (name == modality) return &store;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for write");
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_string(os, ckpt.config_text);
  write_u32(os, static_cast<std::uint32_t>(ckpt.stores.size()));
  for (const auto& [modality, store] : ckpt.stores) {
    write_string(os, modality);
    write_u32(os, static_cast<std::uint32_t>(store.count()));
    for (const auto& name : store.names()) {
      const Eigen::MatrixXd& m = store.get(name);
      write_string(os, name);
      write_u32(os, static_cast<std::uint32_t>(m.rows()));
      write_u32(os, static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          write_f32(os, static_cast<float>(m(i, j)));
        }
      }
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = read_string(is);
  std::uint32_t n_stores = read_u32(is);
  for (std::uint32_t s = 0; s < n_stores; ++s) {
    std::string modality = read_string(is);
    ParamStore store;
    std::uint32_t n_params = read_u32(is);
    for (std::uint32_t p = 0; p < n_params; ++p) {
      std::string name = read_string(is);
      std::uint32_t rows = read_u32(is);
      std::uint32_t cols = read_u32(is);
      Eigen::MatrixXd& m = store.create(name, rows, cols);
      for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
          m(i, j) = static_cast<double>(read_f32(is));
        }
      }
    }
    ckpt.stores.emplace_back(std::move(modality), std::move(store));
  }
  return ckpt;
}

}  // namespace difftad
