#include "pamtriage/manifest.hpp"

#include <fstream>
#include <sstream>

#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"

namespace pamtriage {

std::string to_string(const SnippetRef& ref) {
  return ref.clip_id + "#" + std::to_string(ref.index);
}

void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = nlohmann::json{{"clip_id", e.clip_id},       {"index", e.index},
                     {"offset_s", e.offset_s},     {"sample_count", e.sample_count},
                     {"source_path", e.source_path}, {"rate", e.rate},
                     {"duration_s", e.duration_s}};
}

void from_json(const nlohmann::json& j, ManifestEntry& e) {
  j.at("clip_id").get_to(e.clip_id);
  j.at("index").get_to(e.index);
  j.at("offset_s").get_to(e.offset_s);
  j.at("sample_count").get_to(e.sample_count);
  e.source_path = j.value("source_path", std::string{});
  e.rate = j.value("rate", 0u);
  e.duration_s = j.value("duration_s", 1.0);
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries, std::string feature_config_hash)
    : feature_config_hash_(std::move(feature_config_hash)) {
  entries_.reserve(entries.size());
  for (auto& e : entries) append(std::move(e));
}

const ManifestEntry* DatasetManifest::find(const SnippetRef& ref) const {
  const auto it = by_ref_.find(ref);
  return it == by_ref_.end() ? nullptr : &entries_[it->second];
}

std::map<std::string, std::size_t> DatasetManifest::clip_snippet_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : entries_) ++counts[e.clip_id];
  return counts;
}

void DatasetManifest::append(ManifestEntry entry) {
  const SnippetRef ref = entry.ref();
  if (!by_ref_.emplace(ref, entries_.size()).second) {
    throw Error(ErrorKind::DuplicateSnippetRef, to_string(ref));
  }
  entries_.push_back(std::move(entry));
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) out << row.dump() << '\n';
  write_file_atomic(path, out.str());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  DatasetManifest manifest;
  for (const auto& row : read_jsonl(path)) {
    if (row.contains("feature_config_hash") && !row.contains("clip_id")) {
      manifest.set_feature_config_hash(row["feature_config_hash"].get<std::string>());
      continue;
    }
    try {
      manifest.append(row.get<ManifestEntry>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::vector<nlohmann::json> rows;
  rows.reserve(manifest.size() + 1);
  if (!manifest.feature_config_hash().empty()) {
    rows.push_back({{"feature_config_hash", manifest.feature_config_hash()}});
  }
  for (const auto& e : manifest.entries()) rows.emplace_back(e);
  write_jsonl(path, rows);
}

}  // namespace pamtriage
