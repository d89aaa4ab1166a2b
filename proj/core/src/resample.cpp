#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <tuple>

#include "pamtriage/audio.hpp"
#include "pamtriage/error.hpp"
#include "parallel.hpp"

namespace pamtriage {
namespace {

// Modified Bessel function of the first kind, order 0 (power series).
double bessel_i0(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 500 && term > 1e-17 * sum; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
  }
  return sum;
}

// Polyphase decomposition of a Kaiser-windowed sinc. Output sample n sits at
// input position n*down/up = base + phase/up.
class PolyphaseKernel {
 public:
  PolyphaseKernel(std::uint32_t source_rate, std::uint32_t target_rate, const ResamplerConfig& cfg)
      : source_rate_(source_rate), target_rate_(target_rate), cfg_(cfg) {
    const std::uint32_t g = std::gcd(source_rate, target_rate);
    up_ = target_rate / g;
    down_ = source_rate / g;
    cutoff_ = cfg.rolloff * std::min(1.0, static_cast<double>(target_rate) / source_rate);
    half_width_ = cfg.zero_crossings / cutoff_;
    reach_ = static_cast<std::int64_t>(std::ceil(half_width_));
    taps_ = static_cast<std::size_t>(2 * reach_);
    bessel_norm_ = bessel_i0(cfg.kaiser_beta);
  }

  std::uint64_t up() const { return up_; }
  std::uint64_t down() const { return down_; }
  std::int64_t reach() const { return reach_; }
  std::size_t taps() const { return taps_; }

  // Full coefficient table, built once per (rates, config) and shared.
  void precompute() {
    using Key = std::tuple<std::uint32_t, std::uint32_t, double, int, double>;
    static std::mutex mutex;
    static std::map<Key, std::shared_ptr<const std::vector<double>>> cache;
    const Key key{source_rate_, target_rate_, cfg_.kaiser_beta, cfg_.zero_crossings, cfg_.rolloff};
    std::lock_guard lock(mutex);
    if (const auto it = cache.find(key); it != cache.end()) {
      table_ = it->second;
      return;
    }
    auto table = std::make_shared<std::vector<double>>(static_cast<std::size_t>(up_) * taps_);
    detail::parallel_for(up_, [&](std::size_t p) { fill_row(p, table->data() + p * taps_); });
    if (cache.size() >= kCachedTables) cache.erase(cache.begin());
    table_ = cache.emplace(key, std::move(table)).first->second;
  }

  // Row for a phase; coefficient j multiplies input sample base - reach + 1 + j.
  const double* row(std::uint64_t phase, std::vector<double>& scratch) const {
    if (table_) return table_->data() + phase * taps_;
    scratch.resize(taps_);
    fill_row(phase, scratch.data());
    return scratch.data();
  }

 private:
  double tap(double t) const {
    if (std::abs(t) >= half_width_) return 0.0;
    const double x = cutoff_ * t;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = t / half_width_;
    const double window = bessel_i0(cfg_.kaiser_beta * std::sqrt(1.0 - r * r)) / bessel_norm_;
    return cutoff_ * sinc * window;
  }

  void fill_row(std::uint64_t phase, double* out) const {
    const double frac = static_cast<double>(phase) / static_cast<double>(up_);
    double sum = 0.0;
    for (std::size_t j = 0; j < taps_; ++j) {
      out[j] = tap(frac + static_cast<double>(reach_ - 1) - static_cast<double>(j));
      sum += out[j];
    }
    // Unit DC gain for every phase.
    for (std::size_t j = 0; j < taps_; ++j) out[j] /= sum;
  }

  static constexpr std::size_t kCachedTables = 4;

  std::uint32_t source_rate_;
  std::uint32_t target_rate_;
  ResamplerConfig cfg_;
  std::uint64_t up_ = 1;
  std::uint64_t down_ = 1;
  double cutoff_ = 1.0;
  double half_width_ = 0.0;
  std::int64_t reach_ = 0;
  std::size_t taps_ = 0;
  double bessel_norm_ = 1.0;
  std::shared_ptr<const std::vector<double>> table_;
};

constexpr std::size_t kMaxTableEntries = std::size_t{1} << 24;

}  // namespace

std::size_t resampled_length(std::size_t input_length, std::uint32_t source_rate,
                             std::uint32_t target_rate) {
  if (source_rate == 0 || target_rate == 0) {
    throw Error(ErrorKind::InvalidArgument, "sample rates must be positive");
  }
  // Round half up in exact integer arithmetic.
  const unsigned __int128 num = static_cast<unsigned __int128>(input_length) * target_rate * 2 + source_rate;
  return static_cast<std::size_t>(num / (static_cast<unsigned __int128>(source_rate) * 2));
}

std::vector<double> resample_range(const AudioClip& clip, std::uint32_t target_rate,
                                   std::size_t first, std::size_t count,
                                   const ResamplerConfig& cfg) {
  const std::size_t total = resampled_length(clip.samples.size(), clip.sample_rate, target_rate);
  if (first > total || count > total - first) {
    throw Error(ErrorKind::InvalidArgument, "requested range exceeds resampled length");
  }
  if (target_rate == clip.sample_rate) {
    const auto begin = clip.samples.begin() + static_cast<std::ptrdiff_t>(first);
    return {begin, begin + static_cast<std::ptrdiff_t>(count)};
  }

  PolyphaseKernel kernel(clip.sample_rate, target_rate, cfg);
  const std::size_t entries = static_cast<std::size_t>(kernel.up()) * kernel.taps();
  if (kernel.up() <= count && entries <= kMaxTableEntries) kernel.precompute();

  const auto& x = clip.samples;
  const auto n_in = static_cast<std::int64_t>(x.size());
  const std::int64_t reach = kernel.reach();
  const auto taps = static_cast<std::int64_t>(kernel.taps());
  std::vector<double> out(count);
  constexpr std::size_t kChunk = 1 << 15;
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  detail::parallel_for(chunks, [&](std::size_t c) {
    std::vector<double> scratch;
    const std::size_t end = std::min(count, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const std::uint64_t pos = static_cast<std::uint64_t>(first + i) * kernel.down();
      const auto base = static_cast<std::int64_t>(pos / kernel.up());
      const std::uint64_t phase = pos % kernel.up();
      const double* h = kernel.row(phase, scratch);
      const std::int64_t k0 = base - reach + 1;
      const std::int64_t j_lo = std::max<std::int64_t>(0, -k0);
      const std::int64_t j_hi = std::min<std::int64_t>(taps, n_in - k0);
      const double* xs = x.data() + (k0 + j_lo);
      const double* hs = h + j_lo;
      const std::int64_t len = j_hi - j_lo;
      double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
      std::int64_t j = 0;
      for (; j + 4 <= len; j += 4) {
        a0 += hs[j] * xs[j];
        a1 += hs[j + 1] * xs[j + 1];
        a2 += hs[j + 2] * xs[j + 2];
        a3 += hs[j + 3] * xs[j + 3];
      }
      for (; j < len; ++j) a0 += hs[j] * xs[j];
      out[i] = (a0 + a1) + (a2 + a3);
    }
  });
  return out;
}

AudioClip resample(const AudioClip& clip, std::uint32_t target_rate, const ResamplerConfig& cfg) {
  AudioClip out;
  out.id = clip.id;
  out.source_path = clip.source_path;
  out.start_timestamp = clip.start_timestamp;
  out.sample_rate = target_rate;
  if (target_rate == clip.sample_rate) {
    out.samples = clip.samples;
    return out;
  }
  out.samples = resample_range(clip, target_rate, 0,
                               resampled_length(clip.samples.size(), clip.sample_rate, target_rate), cfg);
  return out;
}

}  // namespace pamtriage
