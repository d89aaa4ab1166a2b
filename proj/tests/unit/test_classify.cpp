#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "pamtriage/classify.hpp"
#include "pamtriage/rng.hpp"
#include "test_helpers.hpp"

namespace pamtriage {
namespace {

using testing::kind_of;

LabeledSet labeled(const Eigen::MatrixXd& x, const std::vector<int>& y) {
  LabeledSet s;
  s.features = x;
  s.targets = y;
  for (std::size_t i = 0; i < y.size(); ++i) s.refs.push_back({"c", static_cast<std::uint32_t>(i)});
  return s;
}

double accuracy(const ClassifierModel& model, const LabeledSet& set) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Eigen::VectorXd row = set.features.row(static_cast<Eigen::Index>(i)).transpose();
    const auto p = predict_probs(model, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
    hits += static_cast<int>(decide_argmax(p)) == set.targets[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

// ---------------------------------------------------------------------------
// Splits

TEST(SplitTest, ExactFractions) {
  const std::vector<std::string> labels(10, "seal");
  const auto s = split(labels, SplitSpec{});
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(SplitTest, LargestRemainderCounts) {
  EXPECT_EQ(split_counts(1033, SplitSpec{}), (std::array<std::size_t, 3>{827, 103, 103}));
  // 27.5 / 27.5: the tie goes to the later split.
  EXPECT_EQ(split_counts(275, SplitSpec{}), (std::array<std::size_t, 3>{220, 27, 28}));
  EXPECT_EQ(split_counts(3, SplitSpec{}), (std::array<std::size_t, 3>{3, 0, 0}));
  SplitSpec bad;
  bad.test_frac = 0.2;
  EXPECT_EQ(kind_of([&] { split_counts(10, bad); }), ErrorKind::InvalidArgument);
}

TEST(SplitTest, StratifiedSplitIsADisjointDeterministicCover) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> labels;
    std::map<std::string, std::size_t> per_class;
    const std::size_t classes = 2 + rng.below(4);
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t n = 3 + rng.below(300);
      per_class["k" + std::to_string(c)] = n;
      for (std::size_t i = 0; i < n; ++i) labels.push_back("k" + std::to_string(c));
    }
    Rng shuffler(rng.next());
    shuffle_in_place(labels, shuffler);
    SplitSpec spec;
    spec.seed = rng.next();
    const auto s = split(labels, spec);
    std::vector<int> seen(labels.size(), 0);
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (std::size_t i : *part) ++seen[i];
    ASSERT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    for (const auto& [cls, n] : per_class) {
      const auto want = split_counts(n, spec);
      std::size_t in_test = 0;
      for (std::size_t i : s.test) in_test += labels[i] == cls ? 1 : 0;
      ASSERT_EQ(in_test, want[2]) << cls;
    }
    const auto again = split(labels, spec);
    ASSERT_EQ(again.train, s.train);
    ASSERT_EQ(again.test, s.test);
  }
}

TEST(SplitTest, ClassWithTwoItemsIsTooSmall) {
  const std::vector<std::string> labels{"a", "a", "a", "b", "b"};
  EXPECT_EQ(kind_of([&] { split(labels, SplitSpec{}); }), ErrorKind::ClassTooSmall);
  SplitSpec plain;
  plain.stratified = false;
  EXPECT_EQ(split(labels, plain).train.size(), 4u);
}

TEST(LabeledSetTest, SkipsUnknownClassesAndMissingEmbeddings) {
  std::vector<Embedding> emb;
  for (std::uint32_t i = 0; i < 4; ++i) emb.push_back({{"c", i}, {double(i), 1.0}, EmbeddingProvider::reference});
  const std::vector<LabeledRef> labels{{{"c", 0}, "seal"}, {{"c", 1}, "walrus"}, {{"c", 9}, "seal"}, {{"c", 3}, "airgun"}};
  const std::vector<std::string> classes{"airgun", "seal"};
  const auto set = make_labeled_set(emb, labels, classes);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.targets, (std::vector<int>{1, 0}));
  EXPECT_EQ(set.refs[1], (SnippetRef{"c", 3}));
  EXPECT_EQ(set.features(1, 0), 3.0);
}

// ---------------------------------------------------------------------------
// Training

TEST(TrainTest, AnalyticGradientMatchesCentralDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd w = oracle::random_matrix(rng, 3, 6, 0.5);
    const Eigen::VectorXd b = oracle::random_matrix(rng, 3, 1, 0.5);
    const Eigen::MatrixXd x = oracle::random_matrix(rng, 4, 6);
    const std::vector<int> y{0, 2, 1, 2};
    const double l2 = 0.01;
    const auto g = softmax_loss_gradient(w, b, x, y, l2);
    const double eps = 1e-5;
    double worst = 0.0;
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); };
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        Eigen::MatrixXd wp = w, wm = w;
        wp(i, j) += eps;
        wm(i, j) -= eps;
        const double num = (softmax_loss_gradient(wp, b, x, y, l2).loss - softmax_loss_gradient(wm, b, x, y, l2).loss) /
                           (2 * eps);
        worst = std::max(worst, rel(g.grad_weights(i, j), num));
      }
      Eigen::VectorXd bp = b, bm = b;
      bp(i) += eps;
      bm(i) -= eps;
      const double num =
          (softmax_loss_gradient(w, bp, x, y, l2).loss - softmax_loss_gradient(w, bm, x, y, l2).loss) / (2 * eps);
      worst = std::max(worst, rel(g.grad_bias(i), num));
    }
    EXPECT_LT(worst, 1e-5) << "trial " << trial;
  }
}

TEST(TrainTest, SeparableClassesAreLearned) {
  Rng rng(3);
  const auto [x, y] = oracle::separable_classes(rng, 100, 20);
  const auto set = labeled(x, y);
  const auto model = train(set, LabeledSet{}, {"a", "b", "c"}, TrainConfig{});
  EXPECT_GE(accuracy(model, set), 0.99);
  EXPECT_EQ(model.train_meta["train_loss"].size(), 100u);
}

TEST(TrainTest, FullBatchLossNeverIncreases) {
  Rng rng(4);
  const auto [x, y] = oracle::separable_classes(rng, 40, 8);
  TrainConfig cfg;
  cfg.batch = 1000;
  cfg.shuffle = false;
  cfg.lr = 0.05;
  cfg.epochs = 200;
  const auto model = train(labeled(x, y), LabeledSet{}, {"a", "b", "c"}, cfg);
  const auto curve = model.train_meta["train_loss"].get<std::vector<double>>();
  for (std::size_t e = 1; e < curve.size(); ++e) ASSERT_LE(curve[e], curve[e - 1] + 1e-9) << "epoch " << e;
}

TEST(TrainTest, BitwiseDeterministic) {
  Rng rng(5);
  const auto [x, y] = oracle::separable_classes(rng, 30, 5);
  const auto set = labeled(x, y);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch = 16;
  const auto a = train(set, set, {"a", "b", "c"}, cfg);
  const auto b = train(set, set, {"a", "b", "c"}, cfg);
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_TRUE(a.bias == b.bias);
}

TEST(TrainTest, SingleClassAndBadConfigAreRejected) {
  const auto set = labeled(Eigen::MatrixXd::Random(5, 3), {1, 1, 1, 1, 1});
  EXPECT_EQ(kind_of([&] { train(set, {}, {"a", "b"}, TrainConfig{}); }), ErrorKind::SingleClassInput);
  EXPECT_EQ(kind_of([&] { train(set, {}, {"a"}, TrainConfig{}); }), ErrorKind::SingleClassInput);
  const auto two = labeled(Eigen::MatrixXd::Random(4, 3), {0, 1, 0, 1});
  TrainConfig cfg;
  cfg.batch = 0;
  EXPECT_EQ(kind_of([&] { train(two, {}, {"a", "b"}, cfg); }), ErrorKind::InvalidArgument);
}

TEST(TrainTest, DivergenceIsReportedAsNonFiniteLoss) {
  const auto set = labeled((Eigen::MatrixXd(4, 2) << 1, 0, 0, 1, 2, 0, 0, 3).finished(), {0, 1, 0, 1});
  TrainConfig cfg;
  cfg.lr = 1e300;
  cfg.epochs = 5;
  EXPECT_EQ(kind_of([&] { train(set, {}, {"a", "b"}, cfg); }), ErrorKind::NonFiniteLoss);
}

// ---------------------------------------------------------------------------
// Prediction and decisions

TEST(PredictTest, ZeroModelIsUniform) {
  const auto model = ClassifierModel::zeros({"a", "b", "c"}, 4);
  const std::vector<double> x{1.0, -2.0, 3.0, 0.5};
  for (double p : predict_probs(model, x)) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  EXPECT_EQ(kind_of([&] { predict_probs(model, std::vector<double>{1.0}); }), ErrorKind::DimensionMismatch);
}

TEST(SoftmaxTest, UniformAndOverflowSafe) {
  for (double p : softmax(std::vector<double>{0, 0, 0})) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
  const auto p = softmax(std::vector<double>{1000, 0, 0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_GE(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(SoftmaxTest, MatchesExtendedPrecisionOracle) {
  Rng rng(6);
  ClassifierModel model;
  model.classes = {"a", "b", "c", "d"};
  model.weights = oracle::random_matrix(rng, 4, 16, 0.3);
  model.bias = oracle::random_matrix(rng, 4, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(16);
    for (auto& v : x) v = rng.normal();
    std::vector<double> logits(4);
    for (Eigen::Index c = 0; c < 4; ++c) {
      long double acc = model.bias(c);
      for (Eigen::Index j = 0; j < 16; ++j) acc += static_cast<long double>(model.weights(c, j)) * x[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(c)] = static_cast<double>(acc);
    }
    const auto want = oracle::softmax_ld(logits);
    const auto got = predict_probs(model, x);
    double sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      ASSERT_NEAR(got[c], static_cast<double>(want[c]), 1e-12);
      sum += got[c];
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(DecideTest, ArgmaxAndTieOrder) {
  EXPECT_EQ(decide_argmax(std::vector<double>{0.5, 0.3, 0.2}), 0u);
  EXPECT_EQ(decide_argmax(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}), 0u);
  EXPECT_EQ(decide_argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
}

TEST(DecideTest, ArgmaxWinnerIsAtLeastOneThirdForThreeClasses) {
  Rng rng(7);
  for (int trial = 0; trial < 100000; ++trial) {
    const auto p = softmax(std::vector<double>{10 * rng.normal(), 10 * rng.normal(), 10 * rng.normal()});
    ASSERT_GE(p[decide_argmax(p)], 0.3333);
  }
}

TEST(DecideTest, ArgmaxInvariantUnderLogitShift) {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> logits(5);
    for (auto& v : logits) v = rng.normal();
    std::vector<double> shifted(logits);
    const double c = rng.uniform(-100, 100);
    for (auto& v : shifted) v += c;
    ASSERT_EQ(decide_argmax(softmax(logits)), decide_argmax(softmax(shifted)));
  }
}

TEST(DecideTest, ThresholdBoundaries) {
  EXPECT_TRUE(decide_threshold(std::vector<double>{0.94, 0.06}, 1, 0.05));
  EXPECT_FALSE(decide_threshold(std::vector<double>{0.001, 0.999}, 1, 1.0));
  EXPECT_TRUE(decide_threshold(std::vector<double>{0.75, 0.25}, 1, 0.25));
  EXPECT_EQ(kind_of([] { decide_threshold(std::vector<double>{0.5, 0.5}, 2, 0.5); }), ErrorKind::UnknownClass);
  EXPECT_EQ(kind_of([] { decide_threshold(std::vector<double>{0.5, 0.5}, 0, 0.0); }), ErrorKind::InvalidArgument);
  const auto model = ClassifierModel::zeros({"airgun", "seal"}, 2);
  const Prediction pred{{"c", 0}, {0.5, 0.5}};
  EXPECT_EQ(kind_of([&] { decide_threshold(model, pred, "walrus", 0.5); }), ErrorKind::UnknownClass);
  EXPECT_TRUE(decide_threshold(model, pred, "seal", 0.5));
}

TEST(DecideTest, LowerThresholdDetectsASuperset) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = softmax(std::vector<double>{3 * rng.normal(), 3 * rng.normal(), 3 * rng.normal()});
    const double t1 = rng.uniform(1e-6, 1.0);
    const double t2 = rng.uniform(t1, 1.0);
    if (decide_threshold(p, 0, t2)) {
      ASSERT_TRUE(decide_threshold(p, 0, t1));
    }
  }
}

// ---------------------------------------------------------------------------
// Persistence

TEST(ModelIoTest, SaveLoadRoundTrip) {
  Rng rng(10);
  const auto [x, y] = oracle::separable_classes(rng, 10, 4);
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto model = train(labeled(x, y), {}, {"a", "b", "c"}, cfg);
  testing::TempDir dir("model");
  save_model(dir / "m.json", model);
  const auto back = load_model(dir / "m.json");
  EXPECT_EQ(back.classes, model.classes);
  EXPECT_TRUE(back.weights == model.weights);
  EXPECT_TRUE(back.bias == model.bias);
  EXPECT_EQ(back.train_meta, model.train_meta);

  auto j = model_to_json(model);
  j["bias"] = std::vector<double>{1.0};
  EXPECT_EQ(kind_of([&] { model_from_json(j); }), ErrorKind::ParseError);
  EXPECT_EQ(kind_of([&] { load_model(dir / "missing.json"); }), ErrorKind::IoError);
}

TEST(ModelIoTest, PredictionsRoundTrip) {
  const auto model = ClassifierModel::zeros({"airgun", "background"}, 2);
  const std::vector<Prediction> preds{{{"c", 0}, {0.25, 0.75}}, {{"d", 7}, {0.9, 0.1}}};
  testing::TempDir dir("preds");
  write_predictions(dir / "p.jsonl", model, preds);
  const auto table = read_predictions(dir / "p.jsonl");
  EXPECT_EQ(table.classes, model.classes);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[1].ref, (SnippetRef{"d", 7}));
  EXPECT_EQ(table.rows[0].probs, preds[0].probs);
}

}  // namespace
}  // namespace pamtriage
