#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pamtriage/audio.hpp"
#include "pamtriage/types.hpp"

namespace pamtriage {

inline constexpr std::size_t kEmbeddingDim = 1280;
inline constexpr std::size_t kStatsPerBand = 20;

struct FeatureConfig {
  std::uint32_t sample_rate = 22050;
  std::size_t n_fft = 1024;
  std::size_t hop = 512;
  std::size_t n_mels = 64;
  double fmin = 0.0;
  double fmax = 11025.0;
  double log_floor = 1e-10;

  void validate() const;
  /// Stable hex digest of every field; caches keyed by it never mix configurations.
  std::string hash() const;
};

/// Natural-log mel power, rows are bands and columns are frames.
struct MelSpectrogram {
  Eigen::MatrixXd values;
  std::string config_hash;

  std::size_t n_mels() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_frames() const { return static_cast<std::size_t>(values.cols()); }
};

enum class EmbeddingProvider { reference, imported };

struct Embedding {
  SnippetRef ref;
  std::vector<double> vector;
  EmbeddingProvider provider = EmbeddingProvider::reference;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular HTK-mel filterbank, shape [n_mels x (n_fft/2 + 1)], unnormalized.
Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg);

/// floor((n_samples - n_fft) / hop) + 1, or 0 when the input is shorter than one frame.
std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg);

MelSpectrogram mel_spectrogram(const Snippet& snippet, const FeatureConfig& cfg = {});
MelSpectrogram mel_spectrogram(std::span<const double> samples, std::uint32_t rate,
                               const FeatureConfig& cfg = {});

/// Per-band summary statistics, in this order for each band:
enum class BandStat : std::size_t {
  mean, stddev, min, max, median, q10, q25, q75, q90, range,
  first, last, delta_mean, delta_std, delta_max, autocorr_lag1,
  energy_fraction, flux_fraction, above_mean_fraction, trend_slope,
};

/// Deterministic 64 x 20 spectral-summary embedding (1,280 values).
/// Component for band b and statistic s is at b * 20 + s.
std::vector<double> embed_reference(const MelSpectrogram& mel);

Embedding embed_snippet(const Snippet& snippet, const FeatureConfig& cfg = {});

}  // namespace pamtriage
