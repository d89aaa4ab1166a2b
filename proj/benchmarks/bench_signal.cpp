#include <benchmark/benchmark.h>

#include "pamtriage/audio.hpp"
#include "pamtriage/detect.hpp"
#include "pamtriage/features.hpp"
#include "pamtriage/rng.hpp"
#include "pamtriage/synth.hpp"

namespace {

using namespace pamtriage;

AudioClip noise_clip(std::uint32_t rate, double seconds, std::uint64_t seed = 1) {
  Rng rng(seed);
  AudioClip clip;
  clip.id = "bench";
  clip.sample_rate = rate;
  clip.samples = synth::ambient_noise(static_cast<std::size_t>(rate * seconds), 0.1, rng);
  return clip;
}

// 32768 Hz -> 22050 Hz over `range(0)` seconds of audio.
void BM_Resample(benchmark::State& state) {
  const auto clip = noise_clip(32768, static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(resample(clip, 22050));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clip.samples.size()));
}
BENCHMARK(BM_Resample)->Arg(1)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_ResampleRangeOneSnippet(benchmark::State& state) {
  const auto clip = noise_clip(32768, 600.0);
  for (auto _ : state) benchmark::DoNotOptimize(resample_range(clip, 22050, 300 * 22050, 22050));
}
BENCHMARK(BM_ResampleRangeOneSnippet)->Unit(benchmark::kMicrosecond);

void BM_MelSpectrogram(benchmark::State& state) {
  const auto clip = noise_clip(22050, 1.0);
  const FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mel_spectrogram(clip.samples, 22050, cfg));
}
BENCHMARK(BM_MelSpectrogram)->Unit(benchmark::kMicrosecond);

void BM_EmbedSnippet(benchmark::State& state) {
  const auto clip = noise_clip(22050, 1.0);
  const auto snippets = segment(clip, 1.0, 0.0);
  const FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(embed_snippet(snippets[0], cfg));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EmbedSnippet)->Unit(benchmark::kMicrosecond);

// Normalized cross-correlation of a 0.3-s airgun template over `range(0)` seconds.
void BM_Ncc(benchmark::State& state) {
  const auto clip = noise_clip(22050, static_cast<double>(state.range(0)));
  const auto tpl = synth::airgun_template(22050);
  for (auto _ : state) benchmark::DoNotOptimize(ncc(clip, tpl));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(clip.samples.size()));
}
BENCHMARK(BM_Ncc)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
