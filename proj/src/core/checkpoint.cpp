#include "pfvc/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pfvc::core {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'F', 'V', 'C'};
constexpr uint32_t kVersion = 1;

uint32_t crc_table_entry(uint32_t i) {
  uint32_t c = i;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

struct Writer {
  std::vector<uint8_t> buf;
  void bytes(const void* p, size_t n) {
    const auto* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u8(uint8_t x) { bytes(&x, 1); }
  void u32(uint32_t x) { bytes(&x, 4); }
  void u64(uint64_t x) { bytes(&x, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  void need(size_t k) const {
    if (pos + k > n) throw std::runtime_error("checkpoint: truncated file");
  }
  void bytes(void* out, size_t k) {
    need(k);
    std::memcpy(out, p + pos, k);
    pos += k;
  }
  uint8_t u8() {
    uint8_t x;
    bytes(&x, 1);
    return x;
  }
  uint32_t u32() {
    uint32_t x;
    bytes(&x, 4);
    return x;
  }
  uint64_t u64() {
    uint64_t x;
    bytes(&x, 8);
    return x;
  }
  std::string str() {
    uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(p + pos), len);
    pos += len;
    return s;
  }
};

}  // namespace

uint32_t crc32(const uint8_t* data, size_t n) {
  static uint32_t table[256];
  static bool init = [] {
    for (uint32_t i = 0; i < 256; ++i) table[i] = crc_table_entry(i);
    return true;
  }();
  (void)init;
  uint32_t c = 0xffffffffu;
  for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : records)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& Checkpoint::require(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw std::runtime_error("checkpoint: missing record \"" + name + "\"");
  return *t;
}

void Checkpoint::put(const std::string& name, Tensor t) {
  for (auto& [n, existing] : records)
    if (n == name) throw std::runtime_error("checkpoint: duplicate record \"" + name + "\"");
  records.emplace_back(name, std::move(t));
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path,
                     bool values_as_f32) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(ckpt.version);
  w.str(ckpt.config_hash);
  w.u32(static_cast<uint32_t>(ckpt.records.size()));
  for (const auto& [name, t] : ckpt.records) {
    w.str(name);
    w.u8(values_as_f32 ? 1 : 0);
    w.u32(static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u64(static_cast<uint64_t>(d));
    if (values_as_f32) {
      for (real x : t.v) {
        float f = static_cast<float>(x);
        w.bytes(&f, 4);
      }
    } else {
      w.bytes(t.v.data(), t.v.size() * sizeof(real));
    }
  }
  w.u32(crc32(w.buf.data(), w.buf.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(w.buf.data()),
          static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::string& expected_config_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw std::runtime_error("checkpoint: truncated file");

  uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw std::runtime_error("checkpoint: checksum mismatch (corrupt or truncated): " + path);

  Reader r{buf.data(), buf.size() - 4};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes: " + path);

  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kVersion)
    throw std::runtime_error("checkpoint: version " + std::to_string(ckpt.version) +
                             " not supported (expected " + std::to_string(kVersion) + ")");
  ckpt.config_hash = r.str();
  if (!expected_config_hash.empty() && ckpt.config_hash != expected_config_hash)
    throw std::runtime_error(
        "checkpoint: config hash mismatch: file has \"" + ckpt.config_hash +
        "\", current config is \"" + expected_config_hash +
        "\"; the checkpoint was produced under a different model configuration");

  const uint32_t n_records = r.u32();
  for (uint32_t i = 0; i < n_records; ++i) {
    std::string name = r.str();
    const uint8_t dtype = r.u8();
    if (dtype > 1)
      throw std::runtime_error("checkpoint: unknown dtype tag " + std::to_string(dtype));
    const uint32_t rank = r.u32();
    std::vector<int> shape;
    size_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint64_t dim = r.u64();
      shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    Tensor t = Tensor::zeros(shape);
    if (dtype == 0) {
      r.bytes(t.v.data(), numel * sizeof(real));
    } else {
      for (size_t j = 0; j < numel; ++j) {
        float fv;
        r.bytes(&fv, 4);
        t.v[j] = static_cast<real>(fv);
      }
    }
    ckpt.records.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

}  // namespace pfvc::core
