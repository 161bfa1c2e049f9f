#include "bwc/wav.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "bwc/errors.hpp"

namespace bwc {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

void put32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
  out.write(b, 4);
}
void put16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

}  // namespace

std::int16_t to_pcm16(float x) noexcept {
  const double v = std::nearbyint(static_cast<double>(x) * 32768.0);
  if (v > 32767.0) return 32767;
  if (v < -32768.0) return -32768;
  return static_cast<std::int16_t>(v);
}

Audio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open audio '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto bad = [&](const std::string& why) {
    return IoError("audio '" + path.string() + "': " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw bad("not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw bad("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw bad("short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw bad("data chunk before fmt chunk");
      if (format != 1 || bits != 16) throw bad("only 16-bit PCM is supported");
      if (channels != 1) throw bad("expected mono, got " + std::to_string(channels) + " channels");
      if (rate != kSampleRate) {
        throw bad("sample rate " + std::to_string(rate) + " Hz, expected " + std::to_string(kSampleRate));
      }
      Audio a;
      a.sample_rate = static_cast<int>(rate);
      a.samples.resize(size / 2);
      for (std::size_t i = 0; i < a.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i));
        a.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return a;
    }
    pos = body + size + (size & 1);
  }
  throw bad("no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write audio '" + path.string() + "'");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * 2));
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_bytes);
  for (float x : samples) put16(out, static_cast<std::uint16_t>(to_pcm16(x)));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace bwc
