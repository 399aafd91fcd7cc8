#include "langdiar/wav.hpp"

#include <cstring>
#include <fstream>

namespace langdiar {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WaveformBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(strfmt("read_wav: cannot open '%s'", path.c_str()));
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (data.size() < 44 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    fail(strfmt("read_wav: '%s' is not a RIFF/WAVE file", path.c_str()));

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const unsigned char* hdr = data.data() + pos;
    uint32_t chunk_len = rd_u32(hdr + 4);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && pos + 8 + 16 <= data.size()) {
      const unsigned char* f = hdr + 8;
      format = rd_u16(f);
      channels = rd_u16(f + 2);
      sample_rate = rd_u32(f + 4);
      bits = rd_u16(f + 14);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(chunk_len, data.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  if (format != 1 || bits != 16)
    fail(strfmt("read_wav: '%s' must be 16-bit PCM (format %u, bits %u)", path.c_str(), format,
                bits));
  if (channels != 1) fail(strfmt("read_wav: '%s' must be mono (%u channels)", path.c_str(), channels));
  if (data_off == 0 || data_len < 2) fail(strfmt("read_wav: '%s' has no sample data", path.c_str()));

  WaveformBuffer wav;
  wav.sample_rate = static_cast<int>(sample_rate);
  wav.source_id = path;
  size_t n = data_len / 2;
  wav.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s = static_cast<int16_t>(rd_u16(data.data() + data_off + 2 * i));
    wav.samples[i] = static_cast<double>(s) / 32768.0;
  }
  wav.validate();
  return wav;
}

void write_wav(const WaveformBuffer& wav, const std::string& path) {
  wav.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(strfmt("write_wav: cannot open '%s'", path.c_str()));
  uint32_t n = static_cast<uint32_t>(wav.samples.size());
  uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  wr_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  wr_u32(out, 16);
  wr_u16(out, 1);  // PCM
  wr_u16(out, 1);  // mono
  wr_u32(out, static_cast<uint32_t>(wav.sample_rate));
  wr_u32(out, static_cast<uint32_t>(wav.sample_rate) * 2);
  wr_u16(out, 2);
  wr_u16(out, 16);
  out.write("data", 4);
  wr_u32(out, data_bytes);
  for (double v : wav.samples) {
    double c = std::max(-1.0, std::min(1.0, v));
    long q = std::lrint(c * 32768.0);
    q = std::max(-32768l, std::min(32767l, q));
    wr_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
}

}  // namespace langdiar
