#include "panoseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "panoseg/error.hpp"

namespace panoseg {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'T', 'N'};

// All multi-byte fields are little-endian; this code assumes a little-endian
// host (checked at startup of the writers below).
void check_endianness() {
  const uint32_t probe = 1;
  char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw Error("unsupported platform", "big-endian host");
}

template <class V>
void write_raw(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_raw(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (in.gcount() != sizeof(V)) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  check_endianness();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("unwritable path", path);
  out.write(kMagic, 4);
  write_raw(out, kCheckpointVersion);
  write_raw(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    write_raw(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_raw(out, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) write_raw(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!out) throw Error("unwritable path", path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  check_endianness();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("unreadable path", path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4) throw Error("truncated checkpoint");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error("bad checkpoint magic");
  const uint32_t version = read_raw<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error("bad checkpoint version", std::to_string(version));
  }
  const uint32_t count = read_raw<uint32_t>(in);
  std::vector<NamedTensor> tensors(count);
  for (auto& t : tensors) {
    const uint32_t name_len = read_raw<uint32_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) throw Error("truncated checkpoint");
    const uint32_t rank = read_raw<uint32_t>(in);
    t.shape.resize(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      t.shape[i] = static_cast<int64_t>(read_raw<uint64_t>(in));
      numel *= t.shape[i];
    }
    t.data.resize(numel);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float))) {
      throw Error("truncated checkpoint");
    }
  }
  return tensors;
}

}  // namespace panoseg
