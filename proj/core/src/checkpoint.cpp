#include <bit>
#include <cstring>
#include <fstream>

#include "elastic/checkpoint.hpp"
#include "elastic/config_io.hpp"

namespace elastic {

namespace {

constexpr char kMagic[8] = {'E', 'L', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_floats(std::ostream& out, const float* data, size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (size_t i = 0; i < count; ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
    }
  }
}

struct Reader {
  std::ifstream in;
  std::string path;

  void bytes(char* dst, size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (!in) throw FormatError("checkpoint " + path + ": truncated");
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }
  void floats(float* dst, size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(reinterpret_cast<char*>(dst), count * sizeof(float));
    } else {
      for (size_t i = 0; i < count; ++i) dst[i] = std::bit_cast<float>(u32());
    }
  }
};

struct Entry {
  std::string name;
  std::vector<i64> dims;
  float* data;
  size_t count;
};

// Registry parameters first, then each norm's running buffers, in a fixed
// order shared by save and load.
std::vector<Entry> entry_walk(Network& net) {
  std::vector<Entry> entries;
  for (const auto& p : net.parameters()) {
    const Shape& s = p.tensor->shape;
    entries.push_back({p.name,
                       {s.n, s.c, s.h, s.w},
                       p.tensor->data.data(),
                       p.tensor->data.size()});
  }
  for (const auto& n : net.norms()) {
    entries.push_back({n.name + ".running_mean",
                       {static_cast<i64>(n.norm->running_mean.size())},
                       n.norm->running_mean.data(),
                       n.norm->running_mean.size()});
    entries.push_back({n.name + ".running_var",
                       {static_cast<i64>(n.norm->running_var.size())},
                       n.norm->running_var.data(),
                       n.norm->running_var.size()});
  }
  return entries;
}

Reader open_checkpoint(const std::string& path) {
  Reader r;
  r.path = path;
  r.in.open(path, std::ios::binary);
  if (!r.in) throw IoError("checkpoint: cannot open " + path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("checkpoint " + path + ": bad magic");
  }
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("checkpoint " + path + ": format version " +
                      std::to_string(version) + " unsupported, want " +
                      std::to_string(kVersion));
  }
  return r;
}

std::string read_arch_text(Reader& r) {
  std::uint32_t len = r.u32();
  std::string text(len, '\0');
  if (len > 0) r.bytes(text.data(), len);
  return text;
}

}  // namespace

void save_checkpoint(const std::string& path, Network& net,
                     const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  std::string arch_text = serialize_arch(net.spec());
  put_u32(out, static_cast<std::uint32_t>(arch_text.size()));
  out.write(arch_text.data(), static_cast<std::streamsize>(arch_text.size()));
  put_u64(out, static_cast<std::uint64_t>(meta.step));
  put_u64(out, meta.shuffle_state);
  put_u64(out, meta.shuffle_inc);
  put_u64(out, meta.augment_state);
  put_u64(out, meta.augment_inc);

  auto entries = entry_walk(net);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    out.put(static_cast<char>(e.dims.size()));
    for (i64 d : e.dims) put_u32(out, static_cast<std::uint32_t>(d));
    put_floats(out, e.data, e.count);
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

ArchSpec read_checkpoint_arch(const std::string& path) {
  Reader r = open_checkpoint(path);
  return parse_arch(read_arch_text(r));
}

CheckpointMeta load_checkpoint(const std::string& path, Network& net) {
  Reader r = open_checkpoint(path);
  std::string arch_text = read_arch_text(r);
  ArchSpec stored = parse_arch(arch_text);
  if (serialize_arch(stored) != serialize_arch(net.spec())) {
    throw FormatError("checkpoint " + path + ": arch '" + stored.name +
                      "' does not match network '" + net.spec().name + "'");
  }
  CheckpointMeta meta;
  meta.step = static_cast<i64>(r.u64());
  meta.shuffle_state = r.u64();
  meta.shuffle_inc = r.u64();
  meta.augment_state = r.u64();
  meta.augment_inc = r.u64();

  auto entries = entry_walk(net);
  std::uint32_t n = r.u32();
  if (n != entries.size()) {
    throw FormatError("checkpoint " + path + ": holds " + std::to_string(n) +
                      " entries, network wants " +
                      std::to_string(entries.size()));
  }
  for (const auto& e : entries) {
    std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    if (name_len > 0) r.bytes(name.data(), name_len);
    if (name != e.name) {
      throw FormatError("checkpoint " + path + ": expected parameter '" +
                        e.name + "', found '" + name + "'");
    }
    char ndim_c;
    r.bytes(&ndim_c, 1);
    size_t ndim = static_cast<unsigned char>(ndim_c);
    std::vector<i64> dims(ndim);
    for (auto& d : dims) d = static_cast<i64>(r.u32());
    if (dims != e.dims) {
      std::string got;
      for (auto d : dims) got += (got.empty() ? "" : "x") + std::to_string(d);
      throw FormatError("checkpoint " + path + ": parameter '" + e.name +
                        "' has stored shape " + got);
    }
    r.floats(e.data, e.count);
  }
  return meta;
}

}  // namespace elastic
