#include "pamtriage/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <map>

#include "pamtriage/error.hpp"
#include "parallel.hpp"

namespace pamtriage {
using detail::parallel_for;

namespace {

std::size_t offset_samples(const ManifestEntry& e) {
  return static_cast<std::size_t>(std::llround(e.offset_s * e.rate));
}

}  // namespace

std::vector<std::filesystem::path> collect_wav_files(const std::filesystem::path& in) {
  if (!std::filesystem::exists(in)) throw Error(ErrorKind::IoError, "no such file or directory: " + in.string());
  if (!std::filesystem::is_directory(in)) return {in};
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(in)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string clip_id_for(const std::filesystem::path& path) { return path.stem().string(); }

std::vector<ManifestEntry> manifest_entries(const AudioClip& clip, const IngestOptions& options) {
  const std::size_t window = samples_per_window(clip.sample_rate, options.duration_s);
  const std::size_t hop = samples_per_window(clip.sample_rate, options.duration_s - options.overlap_s);
  const std::size_t count = snippet_count(clip.samples.size(), clip.sample_rate, options.duration_s, options.overlap_s);
  std::vector<ManifestEntry> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(ManifestEntry{clip.id, static_cast<std::uint32_t>(i),
                                static_cast<double>(i * hop) / clip.sample_rate, window, clip.source_path,
                                clip.sample_rate, options.duration_s});
  }
  return out;
}

DatasetManifest ingest(const std::filesystem::path& in, const IngestOptions& options, const FeatureConfig& features) {
  samples_per_window(options.rate, options.duration_s);
  DatasetManifest manifest({}, features.hash());
  for (const auto& path : collect_wav_files(in)) {
    const AudioClip source = load_wav(path);
    // Only the length matters here; it is a function of the input length alone.
    AudioClip shape;
    shape.id = clip_id_for(path);
    shape.source_path = path.string();
    shape.sample_rate = options.rate;
    shape.samples.resize(resampled_length(source.samples.size(), source.sample_rate, options.rate));
    for (auto& entry : manifest_entries(shape, options)) manifest.append(std::move(entry));
  }
  return manifest;
}

AudioClip load_clip(const std::filesystem::path& path, std::uint32_t rate, const std::string& clip_id) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoError, "source missing: " + path.string());
  AudioClip clip = resample(load_wav(path), rate);
  if (!clip_id.empty()) clip.id = clip_id;
  return clip;
}

std::vector<Embedding> embed_manifest(const DatasetManifest& manifest, const FeatureConfig& cfg,
                                      const ProgressFn& progress) {
  cfg.validate();
  // Group snippets by source so each file is loaded and resampled once.
  std::map<std::string, std::vector<std::size_t>> by_source;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& e = manifest.entries()[i];
    if (e.rate != cfg.sample_rate) {
      throw Error(ErrorKind::RateMismatch, "manifest rate " + std::to_string(e.rate) + " != feature rate " +
                                               std::to_string(cfg.sample_rate));
    }
    by_source[e.source_path].push_back(i);
  }
  std::vector<Embedding> out(manifest.size());
  std::size_t done = 0;
  for (const auto& [source, rows] : by_source) {
    const AudioClip clip = load_clip(source, cfg.sample_rate);
    parallel_for(rows.size(), [&](std::size_t r) {
      const auto& e = manifest.entries()[rows[r]];
      const std::size_t first = offset_samples(e);
      if (first + e.sample_count > clip.samples.size()) {
        throw Error(ErrorKind::InvalidArgument, "snippet " + to_string(e.ref()) + " extends past its source");
      }
      const std::span<const double> window(clip.samples.data() + first, e.sample_count);
      out[rows[r]] = Embedding{e.ref(), embed_reference(mel_spectrogram(window, e.rate, cfg)),
                               EmbeddingProvider::reference};
    });
    done += rows.size();
    if (progress) progress(static_cast<double>(done) / static_cast<double>(manifest.size()));
  }
  return out;
}

std::vector<Embedding> embed_clip(const AudioClip& clip, const FeatureConfig& cfg, double duration_s,
                                  double overlap_s) {
  const auto snippets = segment(clip, duration_s, overlap_s);
  std::vector<Embedding> out(snippets.size());
  parallel_for(snippets.size(), [&](std::size_t i) { out[i] = embed_snippet(snippets[i], cfg); });
  return out;
}

std::vector<DetectionEvent> detect_clip(const AudioClip& clip, const Template& tpl, const PeakOptions& options) {
  const auto scores = ncc(clip, tpl);
  return pick_peaks(scores, clip.sample_rate, options, clip.id, tpl.name);
}

std::vector<DetectionEvent> detect_manifest(const DatasetManifest& manifest, const Template& tpl,
                                            const PeakOptions& options) {
  std::map<std::string, std::string> sources;  // clip id -> path
  for (const auto& e : manifest.entries()) sources.emplace(e.clip_id, e.source_path);
  std::vector<std::pair<std::string, std::string>> clips(sources.begin(), sources.end());
  std::vector<std::vector<DetectionEvent>> per_clip(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    per_clip[i] = detect_clip(load_clip(clips[i].second, tpl.rate, clips[i].first), tpl, options);
  });
  std::vector<DetectionEvent> out;
  for (auto& events : per_clip) out.insert(out.end(), events.begin(), events.end());
  return out;
}

std::vector<double> snippet_samples(const ManifestEntry& entry) {
  if (!std::filesystem::exists(entry.source_path)) {
    throw Error(ErrorKind::IoError, "source missing: " + entry.source_path);
  }
  const AudioClip source = load_wav(entry.source_path);
  return resample_range(source, entry.rate, offset_samples(entry), entry.sample_count);
}

TrainRun train_run(std::span<const Embedding> embeddings, std::span<const LabeledRef> labels,
                   std::vector<std::string> classes, const SplitSpec& split_spec, const TrainConfig& cfg) {
  TrainRun run;
  run.data = make_labeled_set(embeddings, labels, classes);
  std::vector<std::string> names;
  names.reserve(run.data.size());
  for (int t : run.data.targets) names.push_back(classes[static_cast<std::size_t>(t)]);
  run.split = split(names, split_spec);
  const LabeledSet train_set = run.data.subset(run.split.train);
  const LabeledSet val_set = run.data.subset(run.split.val);
  run.model = train(train_set, val_set, std::move(classes), cfg);
  for (std::size_t row : run.split.test) {
    const auto& ref = run.data.refs[row];
    const Eigen::VectorXd x = run.data.features.row(static_cast<Eigen::Index>(row)).transpose();
    run.test_predictions.push_back({ref, predict_probs(run.model, std::span<const double>(x.data(), x.size()))});
    run.test_truth[ref] = names[row];
  }
  return run;
}

}  // namespace pamtriage
