#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/classify.hpp"
#include "pamtriage/types.hpp"

namespace pamtriage {

/// One-vs-rest counts for a target class.
struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Decided or true class per snippet.
using ClassAssignments = std::map<SnippetRef, std::string>;

/// Throws RefMismatch unless both maps cover the same snippets.
ConfusionCounts confusion(const ClassAssignments& predicted, const ClassAssignments& truth,
                          const std::string& target);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators give 0.
Metrics prf(const ConfusionCounts& c);

struct SweepRow {
  double tau = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct SweepCurve {
  std::vector<SweepRow> rows;
  double best_tau = 0.0;
  double best_f1 = 0.0;
};

/// 0.01, 0.02, ..., 1.00.
std::vector<double> default_tau_grid();

/// Parses "start:stop:step" (inclusive stop).
std::vector<double> parse_tau_grid(const std::string& spec);

/// Threshold decision per tau, then confusion and prf. best_tau maximizes F1
/// with ties going to the largest tau. Throws EmptyGrid and RefMismatch.
SweepCurve sweep(const PredictionTable& preds, const ClassAssignments& truth, const std::string& target,
                 std::span<const double> taus);

/// Argmax decisions for every row.
ClassAssignments argmax_decisions(const PredictionTable& preds);

/// Truth from accepted label records; a snippet accepted under several
/// classes keeps the first in record order.
ClassAssignments truth_from_labels(std::span<const LabelRecord> records);

/// Writes sweep.csv, summary.json ({best_tau, best_f1, target, ...}) and
/// plot.json (tau vs. precision/recall/F1 series) into `dir`.
void report(const SweepCurve& curve, const std::filesystem::path& dir, const nlohmann::json& extra = {});

/// Parses the CSV written by report().
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

}  // namespace pamtriage
