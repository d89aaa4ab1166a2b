#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pamtriage {

/// Mono audio with amplitudes in [-1, 1].
struct AudioClip {
  std::string id;
  std::vector<double> samples;
  std::uint32_t sample_rate = 0;
  std::string source_path;
  std::optional<std::string> start_timestamp;

  double duration_s() const {
    return sample_rate == 0 ? 0.0 : static_cast<double>(samples.size()) / sample_rate;
  }
};

/// A fixed-length window cut from a clip. No partial snippets exist.
struct Snippet {
  std::string clip_id;
  std::uint32_t index = 0;
  std::vector<double> samples;
  std::uint32_t rate = 0;
  double duration_s = 1.0;
};

struct WavLoadOptions {
  // Fraction of float samples allowed outside [-1, 1] before the file is rejected.
  double max_clip_fraction = 0.01;
};

struct WavLoadReport {
  std::uint16_t channels = 0;
  std::uint16_t bits_per_sample = 0;
  bool is_float = false;
  std::size_t clamped_samples = 0;
};

/// Reads a RIFF/WAVE file (PCM16 or IEEE float32, any channel count) as mono.
/// Channel 0 is kept for multichannel input; PCM16 is scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path, const WavLoadOptions& options = {},
                   WavLoadReport* report = nullptr);

/// Same as load_wav but over an in-memory file image.
AudioClip parse_wav(std::span<const std::uint8_t> bytes, const WavLoadOptions& options = {},
                    WavLoadReport* report = nullptr);

/// Encodes mono samples as a PCM16 WAV image (44-byte header).
std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples, std::uint32_t rate);

/// Encodes mono samples as an IEEE float32 WAV image.
std::vector<std::uint8_t> encode_wav_float32(std::span<const double> samples, std::uint32_t rate);

void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     std::uint32_t rate);

std::int16_t to_pcm16(double amplitude);

// ---------------------------------------------------------------------------
// Resampling

/// Polyphase windowed-sinc resampler (Kaiser window).
struct ResamplerConfig {
  double kaiser_beta = 8.6;
  int zero_crossings = 64;
  // Cutoff as a fraction of the lower Nyquist frequency.
  double rolloff = 0.95;
};

/// round(input_length * target_rate / source_rate); depends on nothing else.
std::size_t resampled_length(std::size_t input_length, std::uint32_t source_rate,
                             std::uint32_t target_rate);

AudioClip resample(const AudioClip& clip, std::uint32_t target_rate,
                   const ResamplerConfig& cfg = {});

/// Computes output samples [first, first + count) of resample(clip, target_rate)
/// without producing the rest. Values are identical to the full resample.
std::vector<double> resample_range(const AudioClip& clip, std::uint32_t target_rate,
                                   std::size_t first, std::size_t count,
                                   const ResamplerConfig& cfg = {});

// ---------------------------------------------------------------------------
// Segmentation

std::size_t samples_per_window(std::uint32_t rate, double seconds);

/// Tiles the clip from offset 0 with hop = duration_s - overlap_s and drops
/// the trailing partial window.
std::vector<Snippet> segment(const AudioClip& clip, double duration_s = 1.0,
                             double overlap_s = 0.0);

std::size_t snippet_count(std::size_t n_samples, std::uint32_t rate, double duration_s = 1.0,
                          double overlap_s = 0.0);

}  // namespace pamtriage
