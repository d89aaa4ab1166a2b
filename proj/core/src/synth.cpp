#include "pamtriage/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"

namespace pamtriage::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void normalize_peak(std::vector<double>& x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : x) v /= peak;
  }
}

std::size_t len(std::uint32_t rate, double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

void add_scaled(std::vector<double>& dst, std::size_t at, std::span<const double> src, double gain) {
  for (std::size_t i = 0; i < src.size() && at + i < dst.size(); ++i) dst[at + i] += gain * src[i];
}

}  // namespace

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

std::vector<double> airgun_pulse(std::uint32_t rate, std::uint64_t seed, double duration_s) {
  constexpr int kPartials = 14;
  Rng rng(seed);
  std::vector<double> freqs(kPartials);
  std::vector<double> phases(kPartials);
  for (int p = 0; p < kPartials; ++p) {
    freqs[p] = 50.0 * std::pow(10.0, static_cast<double>(p) / (kPartials - 1));  // 50..500 Hz
    phases[p] = rng.uniform(0.0, kTwoPi);
  }
  auto primary = [&](double t) {
    if (t < 0.0) return 0.0;
    const double env = (1.0 - std::exp(-t / 0.003)) * std::exp(-t / 0.045);
    double s = 0.0;
    for (int p = 0; p < kPartials; ++p) s += std::sin(kTwoPi * freqs[p] * t + phases[p]) / std::sqrt(freqs[p] / 50.0);
    return env * s;
  };
  std::vector<double> out(len(rate, duration_s));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    out[i] = primary(t) + 0.35 * primary(t - 0.12);
  }
  normalize_peak(out);
  return out;
}

Template airgun_template(std::uint32_t rate, std::uint64_t seed, double duration_s) {
  return Template{airgun_pulse(rate, seed, duration_s), rate, "airgun"};
}

std::vector<double> seal_trill(std::uint32_t rate, Rng& rng) {
  const double dur = rng.uniform(0.55, 0.85);
  const double f0 = rng.uniform(2200.0, 3000.0);
  const double f1 = rng.uniform(450.0, 800.0);
  const double vib_rate = rng.uniform(12.0, 20.0);
  std::vector<double> out(len(rate, dur));
  double phase = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    const double frac = t / dur;
    // Exponential glide with a trill (fast frequency wobble).
    const double f = f0 * std::pow(f1 / f0, frac) * (1.0 + 0.04 * std::sin(kTwoPi * vib_rate * t));
    phase += kTwoPi * f / rate;
    const double env = std::sin(std::numbers::pi * frac) * (0.7 + 0.3 * std::sin(kTwoPi * vib_rate * t));
    out[i] = env * (std::sin(phase) + 0.4 * std::sin(2.0 * phase) + 0.15 * std::sin(3.0 * phase));
  }
  normalize_peak(out);
  return out;
}

std::vector<double> walrus_knocks(std::uint32_t rate, Rng& rng) {
  const int knocks = 3 + static_cast<int>(rng.below(4));
  const double gap = rng.uniform(0.08, 0.15);
  std::vector<double> out(len(rate, gap * knocks + 0.05));
  for (int k = 0; k < knocks; ++k) {
    const auto at = len(rate, gap * k);
    const std::size_t click = len(rate, 0.01);
    for (std::size_t i = 0; i < click && at + i < out.size(); ++i) {
      const double t = static_cast<double>(i) / rate;
      out[at + i] += std::exp(-t / 0.002) * std::sin(kTwoPi * 1800.0 * t) + 0.5 * rng.normal() * std::exp(-t / 0.001);
    }
  }
  normalize_peak(out);
  return out;
}

std::vector<double> ice_crack(std::uint32_t rate, Rng& rng) {
  std::vector<double> out(len(rate, 0.4));
  double lp = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    lp = 0.6 * lp + 0.4 * rng.normal();
    out[i] = std::exp(-t / 0.07) * lp;
  }
  normalize_peak(out);
  return out;
}

std::vector<double> whale_moan(std::uint32_t rate, Rng& rng) {
  const double dur = rng.uniform(0.7, 0.9);
  const double f0 = rng.uniform(90.0, 140.0);
  const double f1 = rng.uniform(250.0, 380.0);
  std::vector<double> out(len(rate, dur));
  double phase = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(out.size());
    phase += kTwoPi * (f0 + (f1 - f0) * frac) / rate;
    out[i] = std::sin(std::numbers::pi * frac) * (std::sin(phase) + 0.3 * std::sin(2.0 * phase));
  }
  normalize_peak(out);
  return out;
}

std::vector<double> mammal_whistle(std::uint32_t rate, Rng& rng) {
  const double dur = rng.uniform(0.3, 0.6);
  const double fc = rng.uniform(5000.0, 7500.0);
  std::vector<double> out(len(rate, dur));
  double phase = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    const double frac = t / dur;
    phase += kTwoPi * fc * (1.0 + 0.1 * std::sin(kTwoPi * 3.0 * t)) / rate;
    out[i] = std::sin(std::numbers::pi * frac) * std::sin(phase);
  }
  normalize_peak(out);
  return out;
}

std::vector<double> ambient_noise(std::size_t n, double level, Rng& rng) {
  std::vector<double> out(n);
  double red = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    red = 0.995 * red + 0.1 * rng.normal();
    out[i] = 0.7 * red + 0.7 * rng.normal();
  }
  const double r = rms(out);
  if (r > 0.0) {
    for (double& v : out) v *= level / r;
  }
  return out;
}

PulseTrain pulse_train(std::span<const double> pulse, std::size_t count, double spacing_s, std::uint32_t rate,
                       double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t spacing = len(rate, spacing_s);
  const std::size_t n = spacing * count + pulse.size();
  PulseTrain out;
  out.signal.resize(n);
  for (auto& v : out.signal) v = rng.normal();
  // Noise has unit power; scale the pulse to hit the requested SNR.
  const double pulse_power = rms(pulse) * rms(pulse);
  const double gain = std::sqrt(std::pow(10.0, snr_db / 10.0) / pulse_power);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t at = spacing / 2 + k * spacing;
    out.onsets.push_back(at);
    add_scaled(out.signal, at, pulse, gain);
  }
  return out;
}

const std::vector<std::pair<std::string, std::size_t>>& reference_inventory() {
  static const std::vector<std::pair<std::string, std::size_t>> inventory = {
      {"bearded_seal", 1033}, {"walrus", 9}, {"airgun", 275}, {"sea_ice", 1}, {"whales", 12}, {"mammal", 7}};
  return inventory;
}

std::map<std::string, std::size_t> scaled_inventory(double scale) {
  std::map<std::string, std::size_t> out;
  for (const auto& [cls, n] : reference_inventory()) {
    out[cls] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
  }
  return out;
}

std::map<std::uint32_t, std::string> Corpus::truth() const {
  std::map<std::uint32_t, std::string> out;
  for (const auto& e : events) out[e.snippet] = e.class_name;
  return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  const std::size_t snippet_len = samples_per_window(spec.rate, 1.0);
  const auto n_snippets = static_cast<std::size_t>(std::floor(spec.duration_s));
  const auto inventory = scaled_inventory(spec.class_scale);
  std::size_t labeled = 0;
  for (const auto& [cls, n] : inventory) labeled += n;
  if (labeled > n_snippets) {
    throw Error(ErrorKind::InvalidArgument, "class_scale leaves no room: " + std::to_string(labeled) + " events for " +
                                                std::to_string(n_snippets) + " snippets");
  }

  Rng rng(spec.seed);
  Corpus corpus;
  corpus.clip.id = spec.clip_id;
  corpus.clip.sample_rate = spec.rate;
  corpus.clip.samples.assign(len(spec.rate, spec.duration_s), 0.0);

  // Ambient floor with a per-snippet level wobble.
  std::vector<double> level(n_snippets + 1);
  for (auto& l : level) l = spec.noise_rms * std::pow(10.0, rng.uniform(-spec.noise_jitter_db, spec.noise_jitter_db) / 20.0);
  const auto floor = ambient_noise(corpus.clip.samples.size(), 1.0, rng);
  for (std::size_t i = 0; i < floor.size(); ++i) {
    corpus.clip.samples[i] = floor[i] * level[std::min(i / snippet_len, n_snippets)];
  }

  // Assign event classes to distinct snippets in table order.
  std::vector<std::uint32_t> slots(n_snippets);
  std::iota(slots.begin(), slots.end(), 0u);
  shuffle_in_place(slots, rng);
  std::size_t next_slot = 0;

  const auto airgun = airgun_pulse(spec.rate, spec.airgun_template_seed);
  for (const auto& [cls, count] : reference_inventory()) {
    const std::size_t n = inventory.at(cls);
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint32_t snippet = slots[next_slot++];
      const double noise = level[snippet];
      CorpusEvent ev;
      ev.snippet = snippet;
      ev.class_name = cls;

      std::vector<double> sig;
      if (cls == "airgun") {
        sig = airgun;
        ev.masked = rng.uniform() < spec.airgun_masked_fraction;
        ev.snr_db = ev.masked ? rng.uniform(spec.masked_airgun_snr_min_db, spec.masked_airgun_snr_max_db)
                              : rng.uniform(spec.airgun_snr_min_db, spec.airgun_snr_max_db);
      } else {
        if (cls == "bearded_seal") sig = seal_trill(spec.rate, rng);
        else if (cls == "walrus") sig = walrus_knocks(spec.rate, rng);
        else if (cls == "sea_ice") sig = ice_crack(spec.rate, rng);
        else if (cls == "whales") sig = whale_moan(spec.rate, rng);
        else sig = mammal_whistle(spec.rate, rng);
        ev.snr_db = rng.uniform(spec.event_snr_min_db, spec.event_snr_max_db);
      }
      const std::size_t room = snippet_len - std::min(snippet_len, sig.size());
      const auto shift = static_cast<std::size_t>(rng.below(room + 1));
      const std::size_t at = snippet * snippet_len + shift;
      ev.onset_s = static_cast<double>(at) / spec.rate;
      const double gain = noise * std::pow(10.0, ev.snr_db / 20.0) / rms(sig);
      add_scaled(corpus.clip.samples, at, sig, gain);

      if (ev.masked) {
        // A louder seal call sharing the snippet.
        const auto seal = seal_trill(spec.rate, rng);
        const std::size_t seal_room = snippet_len - std::min(snippet_len, seal.size());
        const std::size_t seal_at = snippet * snippet_len + static_cast<std::size_t>(rng.below(seal_room + 1));
        const double seal_snr = rng.uniform(spec.masking_snr_min_db, spec.masking_snr_max_db);
        add_scaled(corpus.clip.samples, seal_at, seal, noise * std::pow(10.0, seal_snr / 20.0) / rms(seal));
      }
      corpus.events.push_back(ev);
      ++corpus.counts[cls];
    }
  }

  double peak = 0.0;
  for (double v : corpus.clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.99) {
    for (double& v : corpus.clip.samples) v *= 0.99 / peak;
  }
  std::sort(corpus.events.begin(), corpus.events.end(),
            [](const CorpusEvent& a, const CorpusEvent& b) { return a.snippet < b.snippet; });
  return corpus;
}

nlohmann::json corpus_truth_json(const Corpus& corpus) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : corpus.events) {
    events.push_back({{"snippet", e.snippet}, {"class", e.class_name}, {"onset_s", e.onset_s},
                      {"snr_db", e.snr_db}, {"masked", e.masked}});
  }
  return {{"clip_id", corpus.clip.id}, {"rate", corpus.clip.sample_rate}, {"counts", corpus.counts},
          {"events", events}};
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_wav_pcm16(dir / (corpus.clip.id + ".wav"), corpus.clip.samples, corpus.clip.sample_rate);
  write_file_atomic(dir / (corpus.clip.id + ".truth.json"), corpus_truth_json(corpus).dump(2));
}

}  // namespace pamtriage::synth
