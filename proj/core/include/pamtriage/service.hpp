#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pamtriage/reduce.hpp"
#include "pamtriage/store.hpp"

namespace pamtriage {

/// File layout of a service data directory.
struct Workspace {
  std::filesystem::path dir;

  std::filesystem::path manifest() const { return dir / "manifest.jsonl"; }
  std::filesystem::path labels() const { return dir / "labels.jsonl"; }
  std::filesystem::path embeddings() const { return dir / "embeddings.bin"; }
  std::filesystem::path projection(ProjectionMethod m) const {
    return dir / ("projection_" + std::string(to_string(m)) + ".jsonl");
  }
  std::filesystem::path model() const { return dir / "model.json"; }
  std::filesystem::path test_predictions() const { return dir / "test_predictions.jsonl"; }
  std::filesystem::path test_truth() const { return dir / "test_truth.jsonl"; }
  std::filesystem::path report_dir() const { return dir / "report"; }
  std::filesystem::path ui_dir() const { return dir / "ui"; }
};

enum class JobKind { embed, reduce, train, eval };
enum class JobState { queued, running, done, failed };

std::string_view to_string(JobKind k);
std::string_view to_string(JobState s);
JobKind parse_job_kind(std::string_view s);

struct JobStatus {
  std::string job_id;
  JobKind kind = JobKind::embed;
  JobState state = JobState::queued;
  double progress = 0.0;
  std::optional<std::string> result_ref;
  std::optional<std::string> error;
};

nlohmann::json to_json(const JobStatus& s);

struct ServiceConfig {
  std::filesystem::path data_dir;
  // UI bundle served at "/"; defaults to <data_dir>/ui when empty.
  std::filesystem::path static_dir;
  std::size_t projection_cap = 200000;
};

/// HTTP facade: projections, snippet audio, labels and background jobs.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  /// Blocks until no job is queued or running.
  void wait_for_jobs();

  LabelStore& store();
  const Workspace& workspace() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pamtriage
