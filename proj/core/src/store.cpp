#include "pamtriage/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <ctime>
#include <set>

#include "pamtriage/error.hpp"
#include "pamtriage/rng.hpp"

namespace pamtriage {

std::string_view to_string(LabelState s) {
  switch (s) {
    case LabelState::proposed: return "proposed";
    case LabelState::accepted: return "accepted";
    case LabelState::rejected: return "rejected";
  }
  return "proposed";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::matched_filter: return "matched-filter";
    case Provenance::human: return "human";
    case Provenance::import: return "import";
  }
  return "human";
}

LabelState parse_label_state(std::string_view s) {
  if (s == "proposed") return LabelState::proposed;
  if (s == "accepted") return LabelState::accepted;
  if (s == "rejected") return LabelState::rejected;
  throw Error(ErrorKind::InvalidArgument, "unknown label state '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "matched-filter") return Provenance::matched_filter;
  if (s == "human") return Provenance::human;
  if (s == "import") return Provenance::import;
  throw Error(ErrorKind::InvalidArgument, "unknown provenance '" + std::string(s) + "'");
}

bool is_valid_class_token(std::string_view s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void to_json(nlohmann::json& j, const LabelRecord& r) {
  j = nlohmann::json{{"clip_id", r.clip_id},
                     {"snippet_index", r.snippet_index},
                     {"class", r.class_name},
                     {"state", to_string(r.state)},
                     {"provenance", to_string(r.provenance)},
                     {"annotator", r.annotator},
                     {"timestamp", r.timestamp}};
}

void from_json(const nlohmann::json& j, LabelRecord& r) {
  j.at("clip_id").get_to(r.clip_id);
  j.at("snippet_index").get_to(r.snippet_index);
  j.at("class").get_to(r.class_name);
  r.state = parse_label_state(j.at("state").get<std::string>());
  r.provenance = parse_provenance(j.value("provenance", std::string("human")));
  r.annotator = j.value("annotator", std::string{});
  r.timestamp = j.value("timestamp", std::string{});
}

std::optional<LabelState> next_state(std::optional<LabelState> current, LabelState requested) {
  auto illegal = [&]() -> Error {
    return Error(ErrorKind::IllegalTransition,
                 std::string(current ? to_string(*current) : "none") + " -> " + std::string(to_string(requested)));
  };
  if (!current) {
    if (requested == LabelState::rejected) throw illegal();
    return requested;
  }
  if (*current == requested) return std::nullopt;
  switch (requested) {
    case LabelState::proposed:
      // Proposals never override a decision.
      return std::nullopt;
    case LabelState::accepted:
      if (*current == LabelState::rejected) throw illegal();
      return requested;
    case LabelState::rejected:
      return requested;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

LabelStore::LabelStore(DatasetManifest manifest, std::filesystem::path log_path)
    : manifest_(std::move(manifest)), log_path_(std::move(log_path)) {
  if (log_path_.empty() || !std::filesystem::exists(log_path_)) return;
  for (auto& rec : read_label_records(log_path_)) {
    try {
      if (apply(state_, rec)) events_.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(ErrorKind::ParseError, "replaying " + log_path_.string() + ": " + e.what());
    }
  }
}

std::optional<LabelRecord> LabelStore::apply(std::map<Key, LabelRecord>& state, const LabelRecord& rec) {
  Key key{rec.ref(), rec.class_name};
  const auto it = state.find(key);
  const auto next = next_state(it == state.end() ? std::nullopt : std::optional(it->second.state), rec.state);
  if (!next) return std::nullopt;
  LabelRecord stored = rec;
  stored.state = *next;
  state[key] = stored;
  return stored;
}

UpsertResult LabelStore::upsert(LabelRecord rec) {
  if (!is_valid_class_token(rec.class_name)) {
    throw Error(ErrorKind::InvalidArgument, "class must be a non-empty token without whitespace");
  }
  if (!manifest_.contains(rec.ref())) throw Error(ErrorKind::UnknownSnippet, to_string(rec.ref()));
  if (rec.timestamp.empty()) rec.timestamp = now_iso8601();

  std::unique_lock lock(mutex_);
  // Log first: a failed append leaves the in-memory state untouched.
  Key key{rec.ref(), rec.class_name};
  const auto it = state_.find(key);
  const auto next = next_state(it == state_.end() ? std::nullopt : std::optional(it->second.state), rec.state);
  if (!next) return {it->second, false};
  append_to_log(rec);
  state_[key] = rec;
  events_.push_back(rec);
  return {rec, true};
}

void LabelStore::append_to_log(const LabelRecord& rec) {
  if (log_path_.empty()) return;
  const std::string line = nlohmann::json(rec).dump() + "\n";
  const int fd = ::open(log_path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorKind::IoError, "cannot open label log " + log_path_.string());
  // One write() per record; O_APPEND keeps lines whole.
  const ssize_t n = ::write(fd, line.data(), line.size());
  const int sync_rc = ::fdatasync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size()) || sync_rc != 0) {
    throw Error(ErrorKind::IoError, "short write to label log " + log_path_.string());
  }
}

std::vector<LabelRecord> LabelStore::snapshot() const {
  std::shared_lock lock(mutex_);
  std::vector<LabelRecord> out;
  out.reserve(state_.size());
  for (const auto& [key, rec] : state_) out.push_back(rec);
  return out;
}

std::vector<LabelRecord> LabelStore::snapshot_at(std::size_t events) const {
  std::shared_lock lock(mutex_);
  const std::size_t n = std::min(events, events_.size());
  return replay(std::span(events_.data(), n));
}

std::vector<LabelRecord> LabelStore::replay(std::span<const LabelRecord> events) {
  std::map<Key, LabelRecord> state;
  for (const auto& rec : events) apply(state, rec);
  std::vector<LabelRecord> out;
  out.reserve(state.size());
  for (const auto& [key, rec] : state) out.push_back(rec);
  return out;
}

std::optional<LabelRecord> LabelStore::find(const SnippetRef& ref, const std::string& class_name) const {
  std::shared_lock lock(mutex_);
  const auto it = state_.find(Key{ref, class_name});
  if (it == state_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> LabelStore::accepted_classes(const SnippetRef& ref) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (auto it = state_.lower_bound(Key{ref, std::string{}}); it != state_.end() && it->first.first == ref; ++it) {
    if (it->second.state == LabelState::accepted) out.push_back(it->first.second);
  }
  return out;
}

std::map<std::string, std::size_t> LabelStore::class_inventory() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> counts;
  for (const auto& [key, rec] : state_) {
    if (rec.state == LabelState::accepted) ++counts[rec.class_name];
  }
  return counts;
}

std::size_t LabelStore::log_size() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

std::vector<LabelRecord> LabelStore::log() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::vector<LabelRecord> read_label_records(const std::filesystem::path& path) {
  std::vector<LabelRecord> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(row.get<LabelRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_label_records(const std::filesystem::path& path, std::span<const LabelRecord> records) {
  std::vector<nlohmann::json> rows(records.begin(), records.end());
  write_jsonl(path, rows);
}

// ---------------------------------------------------------------------------

nlohmann::json ExportResult::report() const {
  return {{"kept", kept}, {"dropped", dropped}, {"counts", counts}, {"unlabeled_pool", unlabeled_pool},
          {"total", items.size()}};
}

std::vector<LabelRecord> ExportResult::as_records(const std::string& annotator) const {
  std::vector<LabelRecord> out;
  out.reserve(items.size());
  const std::string ts = now_iso8601();
  for (const auto& item : items) {
    out.push_back({item.ref.clip_id, item.ref.index, item.class_name, LabelState::accepted, Provenance::import,
                   annotator, ts});
  }
  return out;
}

ExportResult export_training_set(const LabelStore& store, const ExportOptions& options) {
  if (options.min_count < 1) throw Error(ErrorKind::InvalidArgument, "min_count must be >= 1");
  if (!is_valid_class_token(options.background_class)) {
    throw Error(ErrorKind::InvalidArgument, "invalid background class name");
  }
  const auto inventory = store.class_inventory();
  std::vector<std::string> requested = options.classes;
  if (requested.empty()) {
    for (const auto& [cls, n] : inventory) requested.push_back(cls);
  }

  ExportResult result;
  for (const auto& cls : requested) {
    const auto it = inventory.find(cls);
    const std::size_t n = it == inventory.end() ? 0 : it->second;
    (n >= options.min_count ? result.kept : result.dropped).push_back(cls);
  }
  if (result.kept.empty()) {
    throw Error(ErrorKind::NoClassSurvives, "no requested class has >= " + std::to_string(options.min_count) +
                                                " accepted labels");
  }

  const std::set<std::string> kept(result.kept.begin(), result.kept.end());
  std::vector<SnippetRef> unlabeled;
  std::size_t largest = 0;
  for (const auto& entry : store.manifest().entries()) {
    const auto ref = entry.ref();
    const auto accepted = store.accepted_classes(ref);
    if (accepted.empty()) {
      unlabeled.push_back(ref);
      continue;
    }
    // A snippet with several kept classes goes to the first in request order.
    for (const auto& cls : result.kept) {
      if (std::find(accepted.begin(), accepted.end(), cls) != accepted.end()) {
        result.items.push_back({ref, cls});
        largest = std::max(largest, ++result.counts[cls]);
        break;
      }
    }
  }

  result.unlabeled_pool = unlabeled.size();
  const auto want = static_cast<std::size_t>(std::llround(options.background_ratio * static_cast<double>(largest)));
  const auto picked = choose_indices(unlabeled.size(), std::min(want, unlabeled.size()), options.seed);
  for (std::size_t i : picked) result.items.push_back({unlabeled[i], options.background_class});
  if (!picked.empty()) result.counts[options.background_class] = picked.size();
  return result;
}

}  // namespace pamtriage
