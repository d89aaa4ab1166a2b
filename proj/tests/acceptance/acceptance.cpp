// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pamtriage/classify.hpp"
#include "pamtriage/detect.hpp"
#include "pamtriage/error.hpp"
#include "pamtriage/eval.hpp"
#include "pamtriage/reduce.hpp"
#include "pamtriage/synth.hpp"
#include "pamtriage/umap.hpp"
#include "reenactment.hpp"
#include "test_helpers.hpp"

namespace pamtriage {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Outcome of one criterion: pass flag plus a one-line measurement summary.
struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---------------------------------------------------------------------------

void pca_oracle(Outcome& out) {
  const auto start = Clock::now();
  Rng rng(101);
  double worst_fit = 0.0, worst_ortho = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + rng.below(7));   // 2..8
    const auto n = static_cast<Eigen::Index>(d + 1 + rng.below(static_cast<std::uint64_t>(12 - d)));  // up to 12
    const Eigen::MatrixXd data = oracle::random_matrix(rng, n, d);
    const auto k = static_cast<std::size_t>(std::min(n - 1, d));
    const PcaModel model = pca_fit(data, k);
    const auto ref = oracle::jacobi_eigen(oracle::covariance(data));
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      worst_fit = std::max(worst_fit, std::abs(model.eigenvalues(ci) - ref.values[c]));
      const Eigen::VectorXd got = model.components.row(ci).transpose();
      worst_fit = std::max(worst_fit, (got - oracle::sign_normalized(ref.vectors[c])).cwiseAbs().maxCoeff());
    }
    const auto kk = static_cast<Eigen::Index>(k);
    worst_ortho = std::max(worst_ortho, (model.components * model.components.transpose() -
                                         Eigen::MatrixXd::Identity(kk, kk)).cwiseAbs().maxCoeff());
  }
  const double elapsed = seconds_since(start);
  out.detail << "50 matrices, max eigen deviation " << worst_fit << ", orthonormality " << worst_ortho << ", "
             << elapsed << " s";
  out.require(worst_fit <= 1e-9, "eigen deviation <= 1e-9");
  out.require(worst_ortho <= 1e-8, "orthonormality <= 1e-8");
  out.require(elapsed < 5.0, "runtime < 5 s");
}

void umap_determinism_and_purity(Outcome& out) {
  const auto start = Clock::now();
  Rng rng(102);
  const auto [data, labels] = oracle::three_gaussians(rng, 100, 50);
  UmapConfig cfg;
  cfg.n_neighbors = 10;
  const auto a = umap_layout(data, cfg);
  const auto b = umap_layout(data, cfg);
  const bool identical = a.layout == b.layout;
  const double purity = oracle::three_means_purity(a.layout, labels);
  const double elapsed = seconds_since(start);
  out.detail << "300 points in 50-D, bit-identical " << (identical ? "yes" : "no") << ", 3-means purity " << purity
             << ", " << elapsed << " s";
  out.require(identical, "bit-identical layouts");
  out.require(purity >= 0.95, "purity >= 0.95");
  out.require(elapsed < 60.0, "runtime < 60 s");
}

void smooth_knn(Outcome& out) {
  Rng rng(103);
  const auto graph = knn_exact(oracle::random_matrix(rng, 1000, 10), 10);
  const auto calib = smooth_knn_calibrate(graph);
  const double target = std::log2(10.0);
  double worst = 0.0;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < graph.n(); ++i) {
    if (calib.flagged[i]) continue;
    const double dev = std::abs(calib.achieved[i] - target);
    worst = std::max(worst, dev);
    if (dev > 1e-4) ++bad;
  }
  out.detail << "1000 points, flagged " << calib.flagged_count() << ", max deviation of unflagged " << worst;
  out.require(bad == 0, "every unflagged point within 1e-4");
}

void classifier(Outcome& out) {
  Rng rng(104);
  double worst = 0.0;
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); };
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd w = oracle::random_matrix(rng, 3, 6, 0.5);
    const Eigen::VectorXd b = oracle::random_matrix(rng, 3, 1, 0.5);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 8, 6);
    const std::vector<int> y{0, 1, 2, 2, 1, 0, 0, 2};
    const double l2 = 0.01, eps = 1e-5;
    const auto g = softmax_loss_gradient(w, b, x, y, l2);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        Eigen::MatrixXd wp = w, wm = w;
        wp(i, j) += eps;
        wm(i, j) -= eps;
        const double num =
            (softmax_loss_gradient(wp, b, x, y, l2).loss - softmax_loss_gradient(wm, b, x, y, l2).loss) / (2 * eps);
        worst = std::max(worst, rel(g.grad_weights(i, j), num));
      }
      Eigen::VectorXd bp = b, bm = b;
      bp(i) += eps;
      bm(i) -= eps;
      const double num =
          (softmax_loss_gradient(w, bp, x, y, l2).loss - softmax_loss_gradient(w, bm, x, y, l2).loss) / (2 * eps);
      worst = std::max(worst, rel(g.grad_bias(i), num));
    }
  }

  const auto start = Clock::now();
  const auto [x, y] = oracle::separable_classes(rng, 100, 20);
  LabeledSet set;
  set.features = x;
  set.targets = y;
  for (std::size_t i = 0; i < y.size(); ++i) set.refs.push_back({"sep", static_cast<std::uint32_t>(i)});
  const auto model = train(set, LabeledSet{}, {"a", "b", "c"}, TrainConfig{});
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    const auto probs = predict_probs(model, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    if (static_cast<int>(decide_argmax(probs)) == y[static_cast<std::size_t>(i)]) ++correct;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(y.size());
  const double elapsed = seconds_since(start);
  out.detail << "gradient max relative error " << worst << ", separable train accuracy " << accuracy << " in "
             << elapsed << " s";
  out.require(worst < 1e-5, "gradient error < 1e-5");
  out.require(accuracy >= 0.99, "accuracy >= 0.99");
  out.require(elapsed < 10.0, "training < 10 s");
}

void argmax_floor(Outcome& out) {
  Rng rng(105);
  double lowest = 1.0;
  std::vector<double> logits(3);
  for (int i = 0; i < 1'000'000; ++i) {
    for (auto& l : logits) l = rng.normal() * (1.0 + 4.0 * rng.uniform());
    const auto probs = softmax(logits);
    lowest = std::min(lowest, probs[decide_argmax(probs)]);
  }
  out.detail << "10^6 predictions, smallest winning probability " << lowest;
  out.require(lowest >= 1.0 / 3.0, "winning probability >= 1/3");
}

void sweep_monotonicity(Outcome& out) {
  Rng rng(106);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [table, truth] = testing::random_prediction_set(rng, 1 + rng.below(100));
    const auto curve = sweep(table, truth, "airgun", default_tau_grid());
    for (std::size_t i = 1; i < curve.rows.size(); ++i)
      if (curve.rows[i].recall > curve.rows[i - 1].recall) ++violations;
  }
  const auto [table, truth] = testing::five_snippet_fixture();
  const auto fixture = sweep(table, truth, "airgun", std::vector<double>{0.05, 0.3333});
  out.detail << "1000 random sets, recall increases " << violations << "; fixture best_tau " << fixture.best_tau
             << " F1 " << fixture.best_f1;
  out.require(violations == 0, "recall non-increasing");
  out.require(fixture.best_tau == 0.05, "fixture best_tau == 0.05");
  out.require(fixture.best_f1 == 0.75, "fixture F1 == 0.75");
}

void matched_filter(Outcome& out) {
  const std::uint32_t rate = 22050;
  const auto pulse = synth::airgun_pulse(rate);
  std::size_t found = 0, expected = 0, false_pos = 0;
  double worst_offset = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto train = synth::pulse_train(pulse, 10, 1.0, rate, 10.0, seed);
    const auto events = pick_peaks(ncc(train.signal, pulse), rate, {0.5, 0.5});
    expected += train.onsets.size();
    std::set<std::size_t> matched;
    for (const auto& e : events) {
      bool hit = false;
      for (std::size_t k = 0; k < train.onsets.size(); ++k) {
        const double err = std::abs(e.offset_s - static_cast<double>(train.onsets[k]) / rate);
        if (err <= 1e-3 && !matched.contains(k)) {
          matched.insert(k);
          worst_offset = std::max(worst_offset, err);
          hit = true;
          break;
        }
      }
      if (!hit) ++false_pos;
    }
    found += matched.size();
  }

  Rng rng(107);
  std::vector<double> x(20000), tpl(400);
  for (auto& v : x) v = rng.normal();
  for (auto& v : tpl) v = rng.normal();
  const auto base = ncc(x, tpl);
  double worst_scale = 0.0;
  for (double a : {1e-4, 0.1, 7.5, 1e4}) {
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= a;
    const auto s = ncc(scaled, tpl);
    for (std::size_t t = 0; t < s.size(); ++t) worst_scale = std::max(worst_scale, std::abs(s[t] - base[t]));
  }
  const double recall = static_cast<double>(found) / static_cast<double>(expected);
  out.detail << "5 trains of 10 pulses at 10 dB: recall " << recall << ", false positives " << false_pos
             << ", worst offset " << worst_offset * 1e3 << " ms; amplitude invariance " << worst_scale;
  out.require(recall == 1.0, "recall 1.0");
  out.require(false_pos == 0, "no false positives");
  out.require(worst_scale <= 1e-9, "amplitude invariance 1e-9");
}

void end_to_end(Outcome& out) {
  testing::TempDir dir("acceptance_e2e");
  testing::ReenactmentOptions opts;
  opts.work_dir = dir.path();
  const auto r = testing::run_reenactment(opts);
  const std::vector<std::string> expected_dropped{"mammal", "sea_ice", "walrus", "whales"};
  std::vector<std::string> dropped = r.dropped;
  std::vector<std::string> kept = r.kept;
  std::sort(dropped.begin(), dropped.end());
  std::sort(kept.begin(), kept.end());
  out.detail << r.snippets << " snippets, " << r.proposals << " proposals; kept";
  for (const auto& c : kept) out.detail << " " << c;
  out.detail << "; held-out (" << r.heldout_snippets << " snippets, " << r.heldout_airgun << " airgun) F1 "
             << r.curve.best_f1 << " at tau " << r.curve.best_tau << " vs argmax F1 " << r.argmax.f1 << "; "
             << r.total_seconds << " s";
  out.require(dropped == expected_dropped, "dropped exactly the four rare classes");
  out.require(kept == std::vector<std::string>{"airgun", "bearded_seal"}, "kept airgun and bearded_seal");
  out.require(r.curve.best_f1 >= 0.90, "held-out F1 >= 0.90");
  out.require(r.curve.best_tau < 1.0 / 3.0, "best tau < 1/3");
  out.require(r.total_seconds < 180.0, "runtime < 3 min");
}

void metric_conventions(Outcome& out) {
  const auto zero = prf({0, 4, 6, 10});
  const auto empty = prf({0, 0, 0, 10});
  const auto perfect = prf({12, 0, 0, 30});
  const auto hand = prf({3, 1, 2, 0});
  out.detail << "tp=0 F1 " << zero.f1 << ", no positives F1 " << empty.f1 << ", P=R=1 F1 " << perfect.f1
             << ", (3,1,2) F1 " << hand.f1;
  out.require(zero.precision == 0.0 && zero.recall == 0.0 && zero.f1 == 0.0, "tp=0 gives zeros");
  out.require(empty.f1 == 0.0, "no positives gives F1 0");
  out.require(perfect.precision == 1.0 && perfect.recall == 1.0 && perfect.f1 == 1.0, "P=R=1 gives F1 1");
  out.require(hand.precision == 0.75 && hand.recall == 0.6 && hand.f1 == 2.0 / 3.0, "hand tally exact");
}

}  // namespace
}  // namespace pamtriage

int main() {
  using pamtriage::Outcome;
  const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
      {"pca_oracle_equivalence", pamtriage::pca_oracle},
      {"umap_determinism_and_purity", pamtriage::umap_determinism_and_purity},
      {"smooth_knn_calibration", pamtriage::smooth_knn},
      {"classifier_gradient_and_separable_fit", pamtriage::classifier},
      {"argmax_floor", pamtriage::argmax_floor},
      {"sweep_monotonicity_and_fixture", pamtriage::sweep_monotonicity},
      {"matched_filter_pulse_train", pamtriage::matched_filter},
      {"end_to_end_reenactment", pamtriage::end_to_end},
      {"metric_conventions", pamtriage::metric_conventions},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome out;
    try {
      check(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    std::printf("%s %s: %s\n", out.pass ? "PASS" : "FAIL", name, out.detail.str().c_str());
    std::fflush(stdout);
    if (!out.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
