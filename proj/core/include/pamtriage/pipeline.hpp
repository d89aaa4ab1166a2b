#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pamtriage/audio.hpp"
#include "pamtriage/classify.hpp"
#include "pamtriage/detect.hpp"
#include "pamtriage/eval.hpp"
#include "pamtriage/features.hpp"
#include "pamtriage/manifest.hpp"

// File-level orchestration shared by the CLI, the service and the tests.
namespace pamtriage {

struct IngestOptions {
  std::uint32_t rate = 22050;
  double duration_s = 1.0;
  double overlap_s = 0.0;
};

/// `*.wav` files under a directory (recursive, sorted) or the single file given.
std::vector<std::filesystem::path> collect_wav_files(const std::filesystem::path& in);

/// Clip id of a source file: its stem.
std::string clip_id_for(const std::filesystem::path& path);

/// Manifest entries for one clip already at the target rate.
std::vector<ManifestEntry> manifest_entries(const AudioClip& clip, const IngestOptions& options);

/// Loads every WAV, records its snippets in rate `options.rate`. Audio is not
/// kept; sample counts come from resampled_length.
DatasetManifest ingest(const std::filesystem::path& in, const IngestOptions& options,
                       const FeatureConfig& features = {});

/// Loads and resamples a source clip to `rate`.
AudioClip load_clip(const std::filesystem::path& path, std::uint32_t rate, const std::string& clip_id = {});

using ProgressFn = std::function<void(double)>;

/// Reference embeddings for every manifest snippet, in manifest order.
std::vector<Embedding> embed_manifest(const DatasetManifest& manifest, const FeatureConfig& cfg = {},
                                      const ProgressFn& progress = {});

/// Reference embeddings of every full snippet of an in-memory clip.
std::vector<Embedding> embed_clip(const AudioClip& clip, const FeatureConfig& cfg = {}, double duration_s = 1.0,
                                  double overlap_s = 0.0);

/// Matched-filter events over every clip in the manifest.
std::vector<DetectionEvent> detect_manifest(const DatasetManifest& manifest, const Template& tpl,
                                            const PeakOptions& options);

std::vector<DetectionEvent> detect_clip(const AudioClip& clip, const Template& tpl, const PeakOptions& options);

/// Samples of one manifest snippet at the manifest rate, reading the source
/// file and resampling only the needed span. Throws IoError when the source
/// is missing.
std::vector<double> snippet_samples(const ManifestEntry& entry);

struct TrainRun {
  ClassifierModel model;
  SplitIndices split;
  LabeledSet data;
  std::vector<Prediction> test_predictions;
  ClassAssignments test_truth;
};

/// Joins labels with embeddings, splits stratified by class, trains on the
/// train split (validation snapshot on val) and predicts the test split.
TrainRun train_run(std::span<const Embedding> embeddings, std::span<const LabeledRef> labels,
                   std::vector<std::string> classes, const SplitSpec& split_spec, const TrainConfig& cfg);

}  // namespace pamtriage
