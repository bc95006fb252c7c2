#include "veriforge/data/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "veriforge/error.hpp"

namespace veriforge::data {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const FormatChunk& fmt) {
  if (fmt.format == kFormatPcm) {
    if (fmt.bits == 16) {
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    }
    return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
  }
  if (fmt.bits == 32) {
    float f;
    std::uint32_t bits = read_u32(p);
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::uint64_t bits = static_cast<std::uint64_t>(read_u32(p)) |
                       (static_cast<std::uint64_t>(read_u32(p + 4)) << 32);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

}  // namespace

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(DataError::Kind::kMissingFile, "cannot open audio file: " + path.string());
  }
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(DataError::Kind::kMalformedHeader, "not a RIFF/WAVE file" + where);
  }

  FormatChunk fmt;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw DataError(DataError::Kind::kMalformedHeader, "truncated fmt chunk" + where);
      }
      const unsigned char* p = bytes.data() + body;
      fmt.format = read_u16(p);
      fmt.channels = read_u16(p + 2);
      fmt.sample_rate = read_u32(p + 4);
      fmt.bits = read_u16(p + 14);
      if (fmt.format == kFormatExtensible) {
        if (size < 40) {
          throw DataError(DataError::Kind::kMalformedHeader,
                          "truncated WAVE_FORMAT_EXTENSIBLE header" + where);
        }
        fmt.format = read_u16(p + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - std::min(body, bytes.size()));
      if (body + size > bytes.size()) {
        throw DataError(DataError::Kind::kMalformedHeader, "truncated data chunk" + where);
      }
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || !have_data) {
    throw DataError(DataError::Kind::kMalformedHeader,
                    std::string("missing ") + (have_fmt ? "data" : "fmt ") + " chunk" + where);
  }
  if (fmt.channels == 0 || fmt.sample_rate == 0) {
    throw DataError(DataError::Kind::kMalformedHeader, "zero channels or sample rate" + where);
  }
  const bool pcm_ok = fmt.format == kFormatPcm && (fmt.bits == 16 || fmt.bits == 32);
  const bool float_ok = fmt.format == kFormatFloat && (fmt.bits == 32 || fmt.bits == 64);
  if (!pcm_ok && !float_ok) {
    throw DataError(DataError::Kind::kUnsupportedEncoding,
                    "unsupported encoding (format " + std::to_string(fmt.format) + ", " +
                        std::to_string(fmt.bits) + " bits)" + where);
  }

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw DataError(DataError::Kind::kEmptyAudio, "empty audio" + where);

  Waveform w;
  w.sample_rate = static_cast<int>(fmt.sample_rate);
  w.samples.resize(frames);
  for (std::size_t n = 0; n < frames; ++n) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      acc += decode_sample(data + n * frame_bytes + c * bytes_per_sample, fmt);
    }
    const double v = acc / fmt.channels;
    if (!std::isfinite(v)) {
      throw DataError(DataError::Kind::kInvalidValue, "non-finite sample" + where);
    }
    w.samples[n] = v;
  }
  return w;
}

void write_wav_channels(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& channels, int sample_rate,
                        WavEncoding encoding) {
  if (channels.empty()) throw UsageError("write_wav: no channels");
  const std::size_t frames = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != frames) throw UsageError("write_wav: channel lengths differ");
  }
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const auto n_ch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * n_ch * (bits / 8));

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, n_ch);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * n_ch * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(n_ch * (bits / 8)));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (std::size_t n = 0; n < frames; ++n) {
    for (const auto& ch : channels) {
      if (encoding == WavEncoding::kPcm16) {
        const double scaled = std::round(ch[n] * 32768.0);
        const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(out, static_cast<std::uint16_t>(q));
      } else {
        const float f = static_cast<float>(ch[n]);
        std::uint32_t b;
        std::memcpy(&b, &f, sizeof b);
        put_u32(out, b);
      }
    }
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError(DataError::Kind::kUnwritable, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError(DataError::Kind::kUnwritable, "write failed: " + path.string());
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  write_wav_channels(path, {w.samples}, w.sample_rate, encoding);
}

Waveform tile_to_length(const Waveform& w, std::size_t length) {
  if (w.samples.empty()) throw DataError(DataError::Kind::kEmptyAudio, "cannot tile empty audio");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) out.samples[i] = w.samples[i % w.samples.size()];
  return out;
}

std::size_t samples_for(double duration_s, int sample_rate) {
  if (!(duration_s > 0.0)) throw UsageError("segment duration must be positive");
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

Waveform sample_segment(const Waveform& w, double duration_s, Rng& rng) {
  const std::size_t len = samples_for(duration_s, w.sample_rate);
  if (w.samples.size() <= len) return tile_to_length(w, len);
  const auto max_start = static_cast<std::int64_t>(w.samples.size() - len);
  const auto start = static_cast<std::size_t>(uniform_int(rng, 0, max_start));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
  return out;
}

}  // namespace veriforge::data
