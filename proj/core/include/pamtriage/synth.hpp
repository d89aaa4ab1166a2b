#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/audio.hpp"
#include "pamtriage/detect.hpp"
#include "pamtriage/rng.hpp"

// Synthetic signals standing in for Arctic hydrophone recordings. Every
// generator is a closed-form function of time, so the same event rendered at
// two sample rates describes the same waveform.
namespace pamtriage::synth {

/// Airgun-like exemplar: exponentially decaying sum of 50-500 Hz partials
/// with a weaker bubble-pulse echo. Peak amplitude 1.
std::vector<double> airgun_pulse(std::uint32_t rate, std::uint64_t seed = 1, double duration_s = 0.3);

Template airgun_template(std::uint32_t rate, std::uint64_t seed = 1, double duration_s = 0.3);

/// Bearded-seal-like descending FM trill with harmonics.
std::vector<double> seal_trill(std::uint32_t rate, Rng& rng);
/// Walrus-like knock train (short broadband clicks).
std::vector<double> walrus_knocks(std::uint32_t rate, Rng& rng);
/// Broadband decaying crack.
std::vector<double> ice_crack(std::uint32_t rate, Rng& rng);
/// Low tonal up-sweep moan.
std::vector<double> whale_moan(std::uint32_t rate, Rng& rng);
/// High tonal whistle.
std::vector<double> mammal_whistle(std::uint32_t rate, Rng& rng);

/// Ambient noise: red (one-pole low-passed) plus white components.
std::vector<double> ambient_noise(std::size_t n, double rms, Rng& rng);

double rms(std::span<const double> x);

struct PulseTrain {
  std::vector<double> signal;
  std::vector<std::size_t> onsets;  // sample index of each pulse start
};

/// `count` copies of `pulse` spaced `spacing_s` apart (first at spacing_s/2)
/// in white noise; snr_db compares pulse power over its length to noise power.
PulseTrain pulse_train(std::span<const double> pulse, std::size_t count, double spacing_s, std::uint32_t rate,
                       double snr_db, std::uint64_t seed);

/// Reference label inventory from a PC1 > 40 screening of Sept. 2017 - May 2018 recordings.
const std::vector<std::pair<std::string, std::size_t>>& reference_inventory();

/// Reference inventory counts times `scale`, rounded, at least 1 per class.
std::map<std::string, std::size_t> scaled_inventory(double scale);

struct CorpusSpec {
  double duration_s = 600.0;
  std::uint32_t rate = 32768;
  double class_scale = 0.4;
  std::uint64_t seed = 7;
  std::string clip_id = "synthetic_0000";
  double noise_rms = 0.01;
  // Per-snippet ambient level jitter, in dB (uniform +/-).
  double noise_jitter_db = 3.0;
  // Airgun received SNR range (dB, over the pulse length).
  double airgun_snr_min_db = -4.0;
  double airgun_snr_max_db = 14.0;
  // Fraction of airgun snippets that also carry a seal trill.
  double airgun_masked_fraction = 0.3;
  // Seal call level over the ambient floor when it masks an airgun (dB);
  // matches unmasked seal calls so loudness alone carries no class signal.
  double masking_snr_min_db = 4.0;
  double masking_snr_max_db = 18.0;
  // Airgun level in masked snippets (dB).
  double masked_airgun_snr_min_db = -10.0;
  double masked_airgun_snr_max_db = 0.0;
  double event_snr_min_db = 4.0;
  double event_snr_max_db = 18.0;
  std::uint64_t airgun_template_seed = 1;
};

struct CorpusEvent {
  std::uint32_t snippet = 0;
  std::string class_name;
  double onset_s = 0.0;
  double snr_db = 0.0;
  bool masked = false;
};

struct Corpus {
  AudioClip clip;
  std::vector<CorpusEvent> events;
  std::map<std::string, std::size_t> counts;

  /// Snippet index -> class for every event snippet.
  std::map<std::uint32_t, std::string> truth() const;
};

/// One event per labeled 1-s snippet, placed wholly inside it; remaining
/// snippets carry ambient noise only.
Corpus generate_corpus(const CorpusSpec& spec);

/// Writes <dir>/<clip_id>.wav (PCM16) and <dir>/<clip_id>.truth.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

nlohmann::json corpus_truth_json(const Corpus& corpus);

}  // namespace pamtriage::synth
