#include "leapt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace leapt {

namespace {

constexpr char kMagic[8] = {'L', 'E', 'A', 'P', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("checkpoint: truncated file");
  return v;
}

std::string get_bytes(std::istream& is, std::uint32_t n) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw ConfigError("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamList& params, const Metadata& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("checkpoint: cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kVersion);
  std::ostringstream meta;
  for (const auto& [k, v] : metadata) meta << k << '=' << v << '\n';
  std::string m = meta.str();
  put_u32(os, static_cast<std::uint32_t>(m.size()));
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put_u32(os, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(os, static_cast<std::uint32_t>(p->value.cols()));
    for (Index i = 0; i < p->value.rows(); ++i)
      for (Index j = 0; j < p->value.cols(); ++j) {
        double v = p->value(i, j);
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
  }
  if (!os) throw ConfigError("checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ConfigError("checkpoint: bad magic in " + path.string());
  std::uint32_t version = get_u32(is);
  if (version != kVersion) throw ConfigError("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  std::istringstream meta(get_bytes(is, get_u32(is)));
  for (std::string line; std::getline(meta, line);) {
    auto eq = line.find('=');
    if (eq != std::string::npos) ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  std::uint32_t count = get_u32(is);
  for (std::uint32_t n = 0; n < count; ++n) {
    std::string name = get_bytes(is, get_u32(is));
    std::uint32_t rows = get_u32(is), cols = get_u32(is);
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) {
        double v;
        if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ConfigError("checkpoint: truncated tensor " + name);
        m(i, j) = v;
      }
    ckpt.tensors.emplace(std::move(name), std::move(m));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt, const ParamList& params) {
  for (Param* p : params) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) throw ConfigError("checkpoint: missing tensor '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ConfigError("checkpoint: shape mismatch for '" + p->name + "'");
    p->value = it->second;
    p->zero_grad();
  }
}

}  // namespace leapt
