#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/manifest.hpp"
#include "pamtriage/types.hpp"

namespace pamtriage {

enum class LabelState { proposed, accepted, rejected };
enum class Provenance { matched_filter, human, import };

std::string_view to_string(LabelState s);
std::string_view to_string(Provenance p);
LabelState parse_label_state(std::string_view s);
Provenance parse_provenance(std::string_view s);

/// Non-empty, no whitespace.
bool is_valid_class_token(std::string_view s);

/// Current UTC time as ISO-8601 with a trailing Z.
std::string now_iso8601();

struct LabelRecord {
  std::string clip_id;
  std::uint32_t snippet_index = 0;
  std::string class_name;
  LabelState state = LabelState::proposed;
  Provenance provenance = Provenance::human;
  std::string annotator;
  std::string timestamp;

  SnippetRef ref() const { return {clip_id, snippet_index}; }
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

/// Next state for a requested transition; nullopt when the request leaves the
/// record unchanged. Throws IllegalTransition.
///
///   current \ requested   proposed   accepted   rejected
///   (none)                proposed   accepted   illegal
///   proposed              no-op      accepted   rejected
///   accepted              no-op      no-op      rejected
///   rejected              no-op      illegal    no-op
std::optional<LabelState> next_state(std::optional<LabelState> current, LabelState requested);

struct UpsertResult {
  LabelRecord record;
  bool changed = false;
};

/// Event-sourced label store: an append-only JSONL log, latest state per
/// (snippet, class) wins. One writer at a time; readers copy a snapshot.
class LabelStore {
 public:
  /// In-memory store when `log_path` is empty. An existing log is replayed.
  explicit LabelStore(DatasetManifest manifest, std::filesystem::path log_path = {});

  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  /// Validates and applies one record, appending it to the log when it
  /// changes state. Throws UnknownSnippet, IllegalTransition, InvalidArgument.
  UpsertResult upsert(LabelRecord rec);

  /// Current record per (snippet, class), ordered by (clip, index, class).
  std::vector<LabelRecord> snapshot() const;
  /// State after the first `events` log entries.
  std::vector<LabelRecord> snapshot_at(std::size_t events) const;

  std::optional<LabelRecord> find(const SnippetRef& ref, const std::string& class_name) const;
  /// Accepted classes for one snippet.
  std::vector<std::string> accepted_classes(const SnippetRef& ref) const;

  /// Accepted records per class.
  std::map<std::string, std::size_t> class_inventory() const;

  std::size_t log_size() const;
  std::vector<LabelRecord> log() const;
  const DatasetManifest& manifest() const { return manifest_; }

  /// Folds a log into current state, applying the transition table.
  static std::vector<LabelRecord> replay(std::span<const LabelRecord> events);

 private:
  using Key = std::pair<SnippetRef, std::string>;

  static std::optional<LabelRecord> apply(std::map<Key, LabelRecord>& state, const LabelRecord& rec);
  void append_to_log(const LabelRecord& rec);

  DatasetManifest manifest_;
  std::filesystem::path log_path_;
  mutable std::shared_mutex mutex_;
  std::map<Key, LabelRecord> state_;
  std::vector<LabelRecord> events_;
};

std::vector<LabelRecord> read_label_records(const std::filesystem::path& path);
void write_label_records(const std::filesystem::path& path, std::span<const LabelRecord> records);

// ---------------------------------------------------------------------------

struct LabeledRef {
  SnippetRef ref;
  std::string class_name;
};

struct ExportOptions {
  std::vector<std::string> classes;  // empty: every class in the inventory
  std::size_t min_count = 100;
  std::string background_class = "background";
  // Background size = ratio x largest kept class, capped at the unlabeled pool.
  double background_ratio = 10.0;
  std::uint64_t seed = 7;
};

struct ExportResult {
  std::vector<LabeledRef> items;
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::map<std::string, std::size_t> counts;  // per exported class, background included
  std::size_t unlabeled_pool = 0;

  nlohmann::json report() const;
  std::vector<LabelRecord> as_records(const std::string& annotator = "export") const;
};

/// Keeps requested classes with at least min_count accepted labels and samples
/// snippets with no accepted label into the background class. Throws NoClassSurvives.
ExportResult export_training_set(const LabelStore& store, const ExportOptions& options);

}  // namespace pamtriage
