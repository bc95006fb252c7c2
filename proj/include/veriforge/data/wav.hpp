#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "veriforge/rng.hpp"

namespace veriforge::data {

inline constexpr int kDefaultSampleRate = 16000;

/// Mono audio with amplitudes in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Reads a RIFF/WAVE file (PCM16, PCM32, IEEE float32/64; WAVE_FORMAT_EXTENSIBLE
/// accepted). Multichannel input is averaged to mono.
/// Throws DataError with kMissingFile, kMalformedHeader, kUnsupportedEncoding or
/// kEmptyAudio.
Waveform load_wav(const std::filesystem::path& path);

enum class WavEncoding { kPcm16, kFloat32 };

/// Writes mono audio. PCM16 clips to [-1, 1).
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kPcm16);

/// Writes interleaved multichannel audio; `channels[c][n]`.
void write_wav_channels(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& channels, int sample_rate,
                        WavEncoding encoding = WavEncoding::kPcm16);

/// Cyclically repeats `w` until it holds exactly `length` samples (crops if longer).
Waveform tile_to_length(const Waveform& w, std::size_t length);

/// Random crop of round(duration_s * sample_rate) samples with a uniform start
/// offset. Inputs shorter than the crop are tiled first, then cropped at offset 0.
Waveform sample_segment(const Waveform& w, double duration_s, Rng& rng);

/// Number of samples in a crop of the given duration.
std::size_t samples_for(double duration_s, int sample_rate);

}  // namespace veriforge::data
