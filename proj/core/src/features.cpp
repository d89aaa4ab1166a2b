#include "pamtriage/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "pamtriage/error.hpp"

namespace pamtriage {
namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Linear-interpolated quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

// Shifted by the first element so constant input gives its value exactly.
double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x - v.front();
  return v.front() + s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.empty()) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate == 0 || n_fft == 0 || hop == 0 || n_mels == 0) {
    throw Error(ErrorKind::InvalidArgument, "feature config fields must be positive");
  }
  if (n_fft < hop) throw Error(ErrorKind::InvalidArgument, "n_fft must be >= hop");
  if (fmax > sample_rate / 2.0 || fmin < 0.0 || fmin >= fmax) {
    throw Error(ErrorKind::InvalidArgument, "need 0 <= fmin < fmax <= sample_rate/2");
  }
  if (!(log_floor > 0.0)) throw Error(ErrorKind::InvalidArgument, "log_floor must be positive");
}

std::string FeatureConfig::hash() const {
  char canonical[256];
  std::snprintf(canonical, sizeof canonical,
                "mel-v1;sr=%u;n_fft=%zu;hop=%zu;n_mels=%zu;fmin=%.17g;fmax=%.17g;floor=%.17g;"
                "win=hann;scale=htk;center=0",
                sample_rate, n_fft, hop, n_mels, fmin, fmax, log_floor);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return hex;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(cfg.n_mels + 1));
  }
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.n_mels),
                                             static_cast<Eigen::Index>(n_bins));
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m];
    const double center = edges[m + 1];
    const double right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

std::size_t frame_count(std::size_t n_samples, const FeatureConfig& cfg) {
  if (n_samples < cfg.n_fft) return 0;
  return (n_samples - cfg.n_fft) / cfg.hop + 1;
}

MelSpectrogram mel_spectrogram(std::span<const double> samples, std::uint32_t rate,
                               const FeatureConfig& cfg) {
  cfg.validate();
  if (rate != cfg.sample_rate) {
    throw Error(ErrorKind::RateMismatch, "snippet rate " + std::to_string(rate) +
                                             " != feature rate " + std::to_string(cfg.sample_rate));
  }
  const std::size_t n_frames = frame_count(samples.size(), cfg);
  const std::size_t n_bins = cfg.n_fft / 2 + 1;
  const Eigen::MatrixXd fb = mel_filterbank(cfg);

  // Periodic Hann.
  std::vector<double> window(cfg.n_fft);
  for (std::size_t i = 0; i < cfg.n_fft; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(cfg.n_fft));
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.n_fft);
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd power(static_cast<Eigen::Index>(n_bins));

  MelSpectrogram mel;
  mel.config_hash = cfg.hash();
  mel.values.resize(static_cast<Eigen::Index>(cfg.n_mels), static_cast<Eigen::Index>(n_frames));
  const double log_floor = std::log(cfg.log_floor);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < cfg.n_fft; ++i) frame[i] = samples[start + i] * window[i];
    fft.fwd(spectrum, frame);
    for (std::size_t k = 0; k < n_bins; ++k) power(static_cast<Eigen::Index>(k)) = std::norm(spectrum[k]);
    const Eigen::VectorXd bands = fb * power;
    for (Eigen::Index m = 0; m < bands.size(); ++m) {
      const double v = bands(m);
      mel.values(m, static_cast<Eigen::Index>(t)) = v > cfg.log_floor ? std::log(v) : log_floor;
    }
  }
  return mel;
}

MelSpectrogram mel_spectrogram(const Snippet& snippet, const FeatureConfig& cfg) {
  return mel_spectrogram(snippet.samples, snippet.rate, cfg);
}

std::vector<double> embed_reference(const MelSpectrogram& mel) {
  constexpr std::size_t kBands = kEmbeddingDim / kStatsPerBand;
  if (mel.n_mels() != kBands) {
    throw Error(ErrorKind::BandCountMismatch,
                "reference embedding needs " + std::to_string(kBands) + " bands, got " +
                    std::to_string(mel.n_mels()));
  }
  const std::size_t n = mel.n_frames();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "mel spectrogram has no frames");

  // Cross-band normalizers for the two fraction statistics.
  std::vector<double> band_energy(kBands, 0.0);
  std::vector<double> band_flux(kBands, 0.0);
  for (std::size_t b = 0; b < kBands; ++b) {
    const auto row = mel.values.row(static_cast<Eigen::Index>(b));
    for (std::size_t t = 0; t < n; ++t) band_energy[b] += std::exp(row(static_cast<Eigen::Index>(t)));
    for (std::size_t t = 1; t < n; ++t) {
      band_flux[b] += std::max(0.0, row(static_cast<Eigen::Index>(t)) - row(static_cast<Eigen::Index>(t - 1)));
    }
  }
  const double total_energy = std::accumulate(band_energy.begin(), band_energy.end(), 0.0);
  const double total_flux = std::accumulate(band_flux.begin(), band_flux.end(), 0.0);

  std::vector<double> out(kEmbeddingDim, 0.0);
  std::vector<double> series(n);
  std::vector<double> sorted(n);
  std::vector<double> delta;
  for (std::size_t b = 0; b < kBands; ++b) {
    for (std::size_t t = 0; t < n; ++t) {
      series[t] = mel.values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t));
    }
    sorted = series;
    std::sort(sorted.begin(), sorted.end());
    const double mean = mean_of(series);
    const double sd = std_of(series, mean);

    delta.clear();
    for (std::size_t t = 1; t < n; ++t) delta.push_back(std::abs(series[t] - series[t - 1]));
    const double delta_mean = mean_of(delta);

    double autocorr = 0.0;
    double denom = 0.0;
    for (std::size_t t = 0; t < n; ++t) denom += (series[t] - mean) * (series[t] - mean);
    if (denom > 0.0) {
      double num = 0.0;
      for (std::size_t t = 1; t < n; ++t) num += (series[t] - mean) * (series[t - 1] - mean);
      autocorr = num / denom;
    }

    std::size_t above = 0;
    for (double v : series) above += v > mean ? 1 : 0;

    // Least-squares slope against frame index.
    double slope = 0.0;
    if (n > 1) {
      const double t_mean = static_cast<double>(n - 1) / 2.0;
      double sxy = 0.0;
      double sxx = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - t_mean;
        sxy += dt * (series[t] - mean);
        sxx += dt * dt;
      }
      slope = sxy / sxx;
    }

    double* s = out.data() + b * kStatsPerBand;
    auto set = [s](BandStat stat, double v) { s[static_cast<std::size_t>(stat)] = v; };
    set(BandStat::mean, mean);
    set(BandStat::stddev, sd);
    set(BandStat::min, sorted.front());
    set(BandStat::max, sorted.back());
    set(BandStat::median, quantile_sorted(sorted, 0.5));
    set(BandStat::q10, quantile_sorted(sorted, 0.10));
    set(BandStat::q25, quantile_sorted(sorted, 0.25));
    set(BandStat::q75, quantile_sorted(sorted, 0.75));
    set(BandStat::q90, quantile_sorted(sorted, 0.90));
    set(BandStat::range, sorted.back() - sorted.front());
    set(BandStat::first, series.front());
    set(BandStat::last, series.back());
    set(BandStat::delta_mean, delta_mean);
    set(BandStat::delta_std, std_of(delta, delta_mean));
    set(BandStat::delta_max, delta.empty() ? 0.0 : *std::max_element(delta.begin(), delta.end()));
    set(BandStat::autocorr_lag1, autocorr);
    set(BandStat::energy_fraction, total_energy > 0.0 ? band_energy[b] / total_energy : 0.0);
    set(BandStat::flux_fraction, total_flux > 0.0 ? band_flux[b] / total_flux : 0.0);
    set(BandStat::above_mean_fraction, static_cast<double>(above) / static_cast<double>(n));
    set(BandStat::trend_slope, slope);
  }
  return out;
}

Embedding embed_snippet(const Snippet& snippet, const FeatureConfig& cfg) {
  return Embedding{SnippetRef{snippet.clip_id, snippet.index},
                   embed_reference(mel_spectrogram(snippet, cfg)), EmbeddingProvider::reference};
}

}  // namespace pamtriage
