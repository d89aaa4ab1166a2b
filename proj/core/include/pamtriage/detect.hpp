#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pamtriage/audio.hpp"
#include "pamtriage/manifest.hpp"
#include "pamtriage/store.hpp"

namespace pamtriage {

inline constexpr std::size_t kMinTemplateLength = 32;

struct Template {
  std::vector<double> samples;
  std::uint32_t rate = 0;
  std::string name;

  /// Non-zero energy and at least 32 samples.
  void validate() const;
};

struct DetectionEvent {
  std::string clip_id;
  double offset_s = 0.0;
  double score = 0.0;
  std::string template_name;
};

/// Zero-normalized cross-correlation at every lag t in [0, n - m]:
///   score(t) = sum(x~ y~) / (|x~| |y~|)
/// with x~ the mean-removed window at t and y~ the mean-removed template.
/// Zero-variance windows score 0. FFT overlap-save numerator, running-sum
/// window statistics.
std::vector<double> ncc(std::span<const double> signal, std::span<const double> tpl);

/// Checks rates (RateMismatch) and lengths (TemplateTooLong) first.
std::vector<double> ncc(const AudioClip& clip, const Template& tpl);

struct PeakOptions {
  double threshold = 0.6;
  double min_separation_s = 0.5;
};

/// Local maxima >= threshold, kept greedily in descending score order; a
/// candidate closer than min_separation to a kept peak is suppressed.
/// Events come back sorted by offset.
std::vector<DetectionEvent> pick_peaks(std::span<const double> scores, std::uint32_t rate,
                                       const PeakOptions& options, const std::string& clip_id = {},
                                       const std::string& template_name = {});

/// One proposal per snippet containing at least one event (snippet index =
/// floor(offset / duration)). Events past the last full snippet are skipped.
std::vector<LabelRecord> propose_labels(std::span<const DetectionEvent> events, const std::string& class_name,
                                        const DatasetManifest& manifest,
                                        const std::string& annotator = "matched-filter");

}  // namespace pamtriage
