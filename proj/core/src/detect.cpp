#include "pamtriage/detect.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <set>
#include <unsupported/Eigen/FFT>

#include "pamtriage/error.hpp"

namespace pamtriage {

void Template::validate() const {
  if (samples.size() < kMinTemplateLength) {
    throw Error(ErrorKind::InvalidArgument, "template needs at least " + std::to_string(kMinTemplateLength) +
                                                " samples");
  }
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  double energy = 0.0;
  for (double s : samples) energy += (s - mean) * (s - mean);
  if (!(energy > 0.0)) throw Error(ErrorKind::InvalidArgument, "template has zero energy");
  if (rate == 0) throw Error(ErrorKind::InvalidArgument, "template rate must be positive");
}

std::vector<double> ncc(std::span<const double> signal, std::span<const double> tpl) {
  const std::size_t n = signal.size();
  const std::size_t m = tpl.size();
  if (m == 0) throw Error(ErrorKind::InvalidArgument, "empty template");
  if (m > n) throw Error(ErrorKind::TemplateTooLong, "template longer than signal");
  const std::size_t lags = n - m + 1;

  const double tpl_mean = std::accumulate(tpl.begin(), tpl.end(), 0.0) / static_cast<double>(m);
  std::vector<double> centered(m);
  double tpl_energy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    centered[i] = tpl[i] - tpl_mean;
    tpl_energy += centered[i] * centered[i];
  }
  std::vector<double> scores(lags, 0.0);
  if (!(tpl_energy > 0.0)) return scores;

  // Numerator: correlation with the centered template. Since it sums to zero,
  // the window mean drops out.
  std::size_t fft_size = 1;
  while (fft_size < 4 * m) fft_size <<= 1;
  fft_size = std::max<std::size_t>(fft_size, 4096);
  const std::size_t step = fft_size - m + 1;

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> kernel(fft_size, 0.0);
  for (std::size_t i = 0; i < m; ++i) kernel[i] = centered[m - 1 - i];
  std::vector<std::complex<double>> kernel_spec;
  fft.fwd(kernel_spec, kernel);

  std::vector<double> block(fft_size);
  std::vector<double> conv(fft_size);
  std::vector<std::complex<double>> spec;
  for (std::size_t start = 0; start < lags; start += step) {
    for (std::size_t i = 0; i < fft_size; ++i) {
      block[i] = start + i < n ? signal[start + i] : 0.0;
    }
    fft.fwd(spec, block);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= kernel_spec[k];
    fft.inv(conv, spec);
    for (std::size_t j = m - 1; j < fft_size; ++j) {
      const std::size_t lag = start + j - (m - 1);
      if (lag >= lags) break;
      scores[lag] = conv[j];
    }
  }

  // Window statistics from extended-precision prefix sums. Runs of exact
  // zeros give exactly zero variance.
  std::vector<long double> sum(n + 1, 0.0L);
  std::vector<long double> sum_sq(n + 1, 0.0L);
  long double total_sq = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    sum[i + 1] = sum[i] + signal[i];
    sum_sq[i + 1] = sum_sq[i] + static_cast<long double>(signal[i]) * signal[i];
    total_sq += static_cast<long double>(signal[i]) * signal[i];
  }
  const long double silent = 1e-13L * (total_sq / static_cast<long double>(n)) * static_cast<long double>(m);
  for (std::size_t t = 0; t < lags; ++t) {
    const long double s = sum[t + m] - sum[t];
    const long double ss = sum_sq[t + m] - sum_sq[t];
    const long double var = ss - s * s / static_cast<long double>(m);
    if (var <= silent || var <= 0.0L) {
      scores[t] = 0.0;
      continue;
    }
    const double score = scores[t] / std::sqrt(static_cast<double>(var) * tpl_energy);
    scores[t] = std::clamp(score, -1.0, 1.0);
  }
  return scores;
}

std::vector<double> ncc(const AudioClip& clip, const Template& tpl) {
  if (clip.sample_rate != tpl.rate) {
    throw Error(ErrorKind::RateMismatch, "clip rate " + std::to_string(clip.sample_rate) + " != template rate " +
                                             std::to_string(tpl.rate));
  }
  if (tpl.samples.size() > clip.samples.size()) {
    throw Error(ErrorKind::TemplateTooLong, "template '" + tpl.name + "' is longer than clip '" + clip.id + "'");
  }
  return ncc(std::span<const double>(clip.samples), std::span<const double>(tpl.samples));
}

std::vector<DetectionEvent> pick_peaks(std::span<const double> scores, std::uint32_t rate,
                                       const PeakOptions& options, const std::string& clip_id,
                                       const std::string& template_name) {
  if (!(options.threshold > 0.0 && options.threshold <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "threshold must be in (0, 1]");
  }
  if (rate == 0) throw Error(ErrorKind::InvalidArgument, "rate must be positive");
  const std::size_t n = scores.size();
  std::vector<std::size_t> candidates;
  for (std::size_t t = 0; t < n; ++t) {
    const double s = scores[t];
    if (s < options.threshold) continue;
    if (t > 0 && scores[t - 1] > s) continue;
    if (t + 1 < n && scores[t + 1] > s) continue;
    candidates.push_back(t);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double min_sep = options.min_separation_s * rate;
  std::set<std::size_t> kept;
  for (std::size_t t : candidates) {
    const auto next = kept.lower_bound(t);
    if (next != kept.end() && static_cast<double>(*next - t) < min_sep) continue;
    if (next != kept.begin() && static_cast<double>(t - *std::prev(next)) < min_sep) continue;
    kept.insert(t);
  }

  std::vector<DetectionEvent> events;
  events.reserve(kept.size());
  for (std::size_t t : kept) {
    events.push_back({clip_id, static_cast<double>(t) / rate, scores[t], template_name});
  }
  return events;
}

std::vector<LabelRecord> propose_labels(std::span<const DetectionEvent> events, const std::string& class_name,
                                        const DatasetManifest& manifest, const std::string& annotator) {
  if (!is_valid_class_token(class_name)) throw Error(ErrorKind::InvalidArgument, "invalid class name");
  struct ClipInfo {
    double duration_s = 1.0;
    std::uint32_t snippets = 0;
  };
  std::map<std::string, ClipInfo> clips;
  for (const auto& e : manifest.entries()) {
    auto& info = clips[e.clip_id];
    info.duration_s = e.duration_s;
    info.snippets = std::max(info.snippets, e.index + 1);
  }

  const std::string ts = now_iso8601();
  std::set<SnippetRef> seen;
  std::vector<LabelRecord> out;
  for (const auto& ev : events) {
    const auto it = clips.find(ev.clip_id);
    if (it == clips.end()) throw Error(ErrorKind::UnknownClip, ev.clip_id);
    const auto index = static_cast<std::int64_t>(std::floor(ev.offset_s / it->second.duration_s));
    if (index < 0 || index >= it->second.snippets) continue;
    SnippetRef ref{ev.clip_id, static_cast<std::uint32_t>(index)};
    if (!manifest.contains(ref) || !seen.insert(ref).second) continue;
    out.push_back({ref.clip_id, ref.index, class_name, LabelState::proposed, Provenance::matched_filter, annotator, ts});
  }
  return out;
}

}  // namespace pamtriage
