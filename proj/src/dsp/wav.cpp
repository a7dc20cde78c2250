#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pfvc/dsp/dsp.hpp"

namespace pfvc::dsp {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::vector<uint8_t>& b, uint32_t x) {
  b.push_back(x & 0xff);
  b.push_back((x >> 8) & 0xff);
  b.push_back((x >> 16) & 0xff);
  b.push_back((x >> 24) & 0xff);
}
void wr_u16(std::vector<uint8_t>& b, uint16_t x) {
  b.push_back(x & 0xff);
  b.push_back((x >> 8) & 0xff);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 44) throw std::runtime_error("read_wav: truncated header: " + path);
  if (std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  int sample_rate = 0, channels = 0, bits = 0;
  bool have_fmt = false;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const uint32_t sz = rd_u32(buf.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + sz > buf.size())
      throw std::runtime_error("read_wav: truncated chunk '" + std::string(id, 4) +
                               "': " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (sz < 16) throw std::runtime_error("read_wav: truncated header: " + path);
      const uint16_t fmt = rd_u16(buf.data() + body);
      channels = rd_u16(buf.data() + body + 2);
      sample_rate = static_cast<int>(rd_u32(buf.data() + body + 4));
      bits = rd_u16(buf.data() + body + 14);
      if (fmt != 1)
        throw std::runtime_error("read_wav: only PCM supported (fmt tag " +
                                 std::to_string(fmt) + "): " + path);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = sz;
    }
    pos = body + sz + (sz & 1);  // chunks are word-aligned
  }

  if (!have_fmt || !data) throw std::runtime_error("read_wav: truncated header: " + path);
  if (channels != 1)
    throw std::runtime_error("read_wav: mono required, file has " +
                             std::to_string(channels) + " channels: " + path);
  if (bits != 16)
    throw std::runtime_error("read_wav: unsupported bit depth " +
                             std::to_string(bits) + " (PCM16 required): " + path);

  Waveform w;
  w.sample_rate = sample_rate;
  const uint32_t n = data_len / 2;
  w.samples.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    w.samples[i] = s / 32768.0;
  }
  return w;
}

void write_wav(const Waveform& w, const std::string& path) {
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  std::vector<uint8_t> b;
  b.reserve(44 + 2 * n);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  wr_u32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  wr_u32(b, 16);
  wr_u16(b, 1);  // PCM
  wr_u16(b, 1);  // mono
  wr_u32(b, static_cast<uint32_t>(w.sample_rate));
  wr_u32(b, static_cast<uint32_t>(w.sample_rate) * 2);
  wr_u16(b, 2);
  wr_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  wr_u32(b, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    int v = static_cast<int>(std::lrint(w.samples[i] * 32768.0));
    if (v > 32767) v = 32767;
    if (v < -32768) v = -32768;
    wr_u16(b, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_wav: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace pfvc::dsp
