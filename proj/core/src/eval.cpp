#include "pamtriage/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"

namespace pamtriage {

ConfusionCounts confusion(const ClassAssignments& predicted, const ClassAssignments& truth,
                          const std::string& target) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorKind::RefMismatch, std::to_string(predicted.size()) + " decisions vs " +
                                            std::to_string(truth.size()) + " truth labels");
  }
  ConfusionCounts c;
  auto t = truth.begin();
  for (auto p = predicted.begin(); p != predicted.end(); ++p, ++t) {
    if (p->first != t->first) throw Error(ErrorKind::RefMismatch, "snippet " + to_string(p->first) + " has no truth");
    const bool pred = p->second == target;
    const bool actual = t->second == target;
    if (pred && actual) {
      ++c.tp;
    } else if (pred) {
      ++c.fp;
    } else if (actual) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Metrics prf(const ConfusionCounts& c) {
  Metrics m;
  if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  // 2PR/(P+R) == 2tp/(2tp+fp+fn); the count form is exact.
  if (c.tp > 0) m.f1 = 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return m;
}

std::vector<double> default_tau_grid() {
  std::vector<double> taus;
  for (int i = 1; i <= 100; ++i) taus.push_back(i / 100.0);
  return taus;
}

std::vector<double> parse_tau_grid(const std::string& spec) {
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;
  char c1 = 0;
  char c2 = 0;
  std::istringstream in(spec);
  if (!(in >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || !(step > 0.0) || stop < start) {
    throw Error(ErrorKind::InvalidArgument, "tau grid must look like start:stop:step, got '" + spec + "'");
  }
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> taus;
  taus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Snap to 12 decimals so 0.01 + 4 * 0.01 prints and compares as 0.05.
    taus.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return taus;
}

ClassAssignments argmax_decisions(const PredictionTable& preds) {
  ClassAssignments out;
  for (const auto& p : preds.rows) out[p.ref] = preds.classes.at(decide_argmax(p.probs));
  return out;
}

ClassAssignments truth_from_labels(std::span<const LabelRecord> records) {
  ClassAssignments out;
  for (const auto& r : records) {
    if (r.state == LabelState::accepted) out.try_emplace(r.ref(), r.class_name);
  }
  return out;
}

SweepCurve sweep(const PredictionTable& preds, const ClassAssignments& truth, const std::string& target,
                 std::span<const double> taus) {
  if (taus.empty()) throw Error(ErrorKind::EmptyGrid, "no thresholds to sweep");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] <= 1.0) || (i > 0 && !(taus[i] > taus[i - 1]))) {
      throw Error(ErrorKind::InvalidArgument, "taus must be strictly increasing within (0, 1]");
    }
  }
  const auto it = std::find(preds.classes.begin(), preds.classes.end(), target);
  if (it == preds.classes.end()) throw Error(ErrorKind::UnknownClass, target);
  const auto target_idx = static_cast<std::size_t>(it - preds.classes.begin());

  SweepCurve curve;
  curve.rows.reserve(taus.size());
  ClassAssignments decided;
  for (double tau : taus) {
    decided.clear();
    for (const auto& p : preds.rows) {
      decided[p.ref] = decide_threshold(p.probs, target_idx, tau) ? target : std::string{};
    }
    const ConfusionCounts c = confusion(decided, truth, target);
    const Metrics m = prf(c);
    curve.rows.push_back({tau, m.precision, m.recall, m.f1, c.tp, c.fp, c.fn});
    if (curve.rows.size() == 1 || m.f1 >= curve.best_f1) {
      curve.best_f1 = m.f1;
      curve.best_tau = tau;
    }
  }
  return curve;
}

void report(const SweepCurve& curve, const std::filesystem::path& dir, const nlohmann::json& extra) {
  if (curve.rows.empty()) throw Error(ErrorKind::EmptyGrid, "empty sweep curve");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

  std::ostringstream csv;
  csv << "tau,precision,recall,f1,tp,fp,fn\n";
  char line[256];
  for (const auto& r : curve.rows) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%zu,%zu,%zu\n", r.tau, r.precision, r.recall, r.f1,
                  r.tp, r.fp, r.fn);
    csv << line;
  }
  write_file_atomic(dir / "sweep.csv", csv.str());

  nlohmann::json summary = extra.is_object() ? extra : nlohmann::json::object();
  summary["best_tau"] = curve.best_tau;
  summary["best_f1"] = curve.best_f1;
  write_file_atomic(dir / "summary.json", summary.dump(2));

  nlohmann::json plot = {{"tau", nlohmann::json::array()},
                         {"precision", nlohmann::json::array()},
                         {"recall", nlohmann::json::array()},
                         {"f1", nlohmann::json::array()}};
  for (const auto& r : curve.rows) {
    plot["tau"].push_back(r.tau);
    plot["precision"].push_back(r.precision);
    plot["recall"].push_back(r.recall);
    plot["f1"].push_back(r.f1);
  }
  write_file_atomic(dir / "plot.json", plot.dump());
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "tau,precision,recall,f1,tp,fp,fn") throw Error(ErrorKind::ParseError, "unexpected sweep CSV header");
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SweepRow r;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%zu,%zu,%zu", &r.tau, &r.precision, &r.recall, &r.f1, &r.tp,
                    &r.fp, &r.fn) != 7) {
      throw Error(ErrorKind::ParseError, "bad sweep CSV row: " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pamtriage
