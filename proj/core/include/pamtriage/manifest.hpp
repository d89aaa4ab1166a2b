#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/types.hpp"

namespace pamtriage {

struct ManifestEntry {
  std::string clip_id;
  std::uint32_t index = 0;
  double offset_s = 0.0;
  std::size_t sample_count = 0;
  std::string source_path;
  std::uint32_t rate = 0;
  double duration_s = 1.0;

  SnippetRef ref() const { return {clip_id, index}; }
};

void to_json(nlohmann::json& j, const ManifestEntry& e);
void from_json(const nlohmann::json& j, ManifestEntry& e);

/// Snippet index for a corpus. (clip_id, index) pairs are unique.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  explicit DatasetManifest(std::vector<ManifestEntry> entries, std::string feature_config_hash = {});

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::string& feature_config_hash() const { return feature_config_hash_; }
  void set_feature_config_hash(std::string hash) { feature_config_hash_ = std::move(hash); }

  std::size_t size() const { return entries_.size(); }
  bool contains(const SnippetRef& ref) const { return by_ref_.contains(ref); }
  const ManifestEntry* find(const SnippetRef& ref) const;

  /// Number of snippets per clip id.
  std::map<std::string, std::size_t> clip_snippet_counts() const;

  void append(ManifestEntry entry);

 private:
  std::vector<ManifestEntry> entries_;
  std::unordered_map<SnippetRef, std::size_t, SnippetRefHash> by_ref_;
  std::string feature_config_hash_;
};

/// One JSON object per line. An optional first line {"feature_config_hash": ...}
/// carries the configuration digest.
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);

}  // namespace pamtriage
