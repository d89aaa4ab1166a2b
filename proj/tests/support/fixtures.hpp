#pragma once

#include <string>
#include <utility>

#include "pamtriage/eval.hpp"
#include "pamtriage/rng.hpp"

namespace pamtriage::testing {

/// Five snippets scored for {airgun, background}: positives' airgun
/// probabilities {0.9, 0.4, 0.2}, negatives' {0.1, 0.35}.
inline std::pair<PredictionTable, ClassAssignments> five_snippet_fixture() {
  PredictionTable table;
  table.classes = {"airgun", "background"};
  ClassAssignments truth;
  const std::pair<double, bool> rows[] = {{0.9, true}, {0.4, true}, {0.2, true}, {0.1, false}, {0.35, false}};
  std::uint32_t index = 0;
  for (const auto& [p, positive] : rows) {
    const SnippetRef ref{"fixture", index++};
    table.rows.push_back({ref, {p, 1.0 - p}});
    truth[ref] = positive ? "airgun" : "background";
  }
  return {table, truth};
}

/// `n` random 3-class predictions ({airgun, seal, background}) with random truth.
inline std::pair<PredictionTable, ClassAssignments> random_prediction_set(Rng& rng, std::size_t n) {
  PredictionTable table;
  table.classes = {"airgun", "seal", "background"};
  ClassAssignments truth;
  for (std::uint32_t i = 0; i < n; ++i) {
    const SnippetRef ref{"r", i};
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    const double s = a + b + c;
    table.rows.push_back({ref, {a / s, b / s, c / s}});
    truth[ref] = table.classes[rng.below(3)];
  }
  return {table, truth};
}

}  // namespace pamtriage::testing
