#include "darqn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace darqn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("bad checkpoint: truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, Arch arch, const ParameterSet& ps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  f.write("DARQ", 4);
  put_u32(f, kCheckpointVersion);
  put_u32(f, static_cast<uint32_t>(arch));
  for (size_t i = 0; i < ps.count(); ++i) {
    const Param& p = ps.nth(i);
    put_u32(f, static_cast<uint32_t>(p.name.size()));
    f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(f, static_cast<uint32_t>(p.value.rank()));
    for (int d = 0; d < p.value.rank(); ++d) put_u32(f, static_cast<uint32_t>(p.value.dim(d)));
    f.write(reinterpret_cast<const char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * 8));
  }
  if (!f) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

namespace {
std::ifstream open_and_check(const std::string& path, Arch* arch_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[4] = {};
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "DARQ", 4) != 0)
    throw std::runtime_error("bad checkpoint '" + path + "': wrong magic bytes");
  const uint32_t version = get_u32(f);
  if (version != kCheckpointVersion)
    throw std::runtime_error("bad checkpoint '" + path + "': unsupported version " + std::to_string(version));
  const uint32_t arch = get_u32(f);
  if (arch < 1 || arch > 4)
    throw std::runtime_error("bad checkpoint '" + path + "': unknown architecture id " + std::to_string(arch));
  *arch_out = static_cast<Arch>(arch);
  return f;
}
}  // namespace

Arch peek_checkpoint_arch(const std::string& path) {
  Arch a;
  open_and_check(path, &a);
  return a;
}

void load_checkpoint(const std::string& path, Arch expected, ParameterSet& ps) {
  Arch stored;
  std::ifstream f = open_and_check(path, &stored);
  if (stored != expected)
    throw std::runtime_error("checkpoint '" + path + "' holds architecture '" + arch_to_string(stored) +
                             "' but '" + arch_to_string(expected) + "' was requested");
  size_t loaded = 0;
  while (true) {
    uint32_t name_len = 0;
    f.read(reinterpret_cast<char*>(&name_len), 4);
    if (f.eof()) break;
    if (!f) throw std::runtime_error("bad checkpoint '" + path + "': truncated record");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t rank = get_u32(f);
    if (rank > 8) throw std::runtime_error("bad checkpoint '" + path + "': implausible rank");
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(get_u32(f));
    if (!ps.has(name))
      throw std::runtime_error("checkpoint '" + path + "' holds unknown array '" + name + "'");
    Param& p = ps.at(name);
    if (p.value.shape() != shape)
      throw std::runtime_error("checkpoint '" + path + "': shape mismatch for '" + name + "' (" +
                               shape_to_string(shape) + " vs " + p.value.shape_str() + ")");
    f.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.size() * 8));
    if (!f) throw std::runtime_error("bad checkpoint '" + path + "': truncated data for '" + name + "'");
    loaded += 1;
  }
  if (loaded != ps.count())
    throw std::runtime_error("checkpoint '" + path + "' holds " + std::to_string(loaded) +
                             " arrays, expected " + std::to_string(ps.count()));
}

}  // namespace darqn
