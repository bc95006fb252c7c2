#pragma once

#include <gtest/gtest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "veriforge/nn/tensor.hpp"
#include "veriforge/rng.hpp"

namespace vf_test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("veriforge_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
void put_le(std::string& s, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

/// Hand-assembled RIFF file: fmt chunk with the given fields, then `payload` as data.
inline void write_raw_wav(const std::filesystem::path& p, std::uint16_t format, std::uint16_t channels,
                          std::uint32_t rate, std::uint16_t bits, const std::string& payload) {
  std::string fmt;
  put_le<std::uint16_t>(fmt, format);
  put_le<std::uint16_t>(fmt, channels);
  put_le<std::uint32_t>(fmt, rate);
  put_le<std::uint32_t>(fmt, rate * channels * bits / 8);
  put_le<std::uint16_t>(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  put_le<std::uint16_t>(fmt, bits);
  std::string body = "WAVE";
  body += "fmt ";
  put_le<std::uint32_t>(body, static_cast<std::uint32_t>(fmt.size()));
  body += fmt;
  body += "data";
  put_le<std::uint32_t>(body, static_cast<std::uint32_t>(payload.size()));
  body += payload;
  std::string file = "RIFF";
  put_le<std::uint32_t>(file, static_cast<std::uint32_t>(body.size()));
  file += body;
  write_text(p, file);
}

inline std::vector<double> random_vector(std::size_t n, veriforge::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = veriforge::uniform(rng, lo, hi);
  return v;
}

inline veriforge::nn::Tensor random_tensor(veriforge::nn::Shape shape, veriforge::Rng& rng, double lo = -1.0,
                                           double hi = 1.0) {
  veriforge::nn::Tensor t(std::move(shape));
  for (auto& x : t.values()) x = veriforge::uniform(rng, lo, hi);
  return t;
}

}  // namespace vf_test
