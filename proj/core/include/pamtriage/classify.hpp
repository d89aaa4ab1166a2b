#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/features.hpp"
#include "pamtriage/store.hpp"

namespace pamtriage {

struct SplitSpec {
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::uint64_t seed = 7;
  bool stratified = true;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Largest-remainder allocation of n items over the three fractions. Equal
/// remainders favor the later split (test, then val).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitSpec& spec);

/// Disjoint cover of [0, labels.size()); stratified splits allocate each class
/// separately. Throws ClassTooSmall when a class has fewer than 3 items.
SplitIndices split(std::span<const std::string> labels, const SplitSpec& spec);

/// Embeddings with integer class targets.
struct LabeledSet {
  Eigen::MatrixXd features;  // n x dim
  std::vector<int> targets;
  std::vector<SnippetRef> refs;

  std::size_t size() const { return targets.size(); }
  LabeledSet subset(std::span<const std::size_t> rows) const;
};

/// Joins labeled refs with embeddings; items whose class is not in `classes`
/// or whose embedding is missing are skipped.
LabeledSet make_labeled_set(std::span<const Embedding> embeddings, std::span<const LabeledRef> labels,
                            std::span<const std::string> classes);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  double lr = 0.05;
  double l2 = 1e-4;
  std::uint64_t seed = 7;
  // Shuffle order each epoch; off gives plain full-order passes.
  bool shuffle = true;
};

struct ClassifierModel {
  std::vector<std::string> classes;
  Eigen::MatrixXd weights;  // C x dim
  Eigen::VectorXd bias;     // C
  nlohmann::json train_meta = nlohmann::json::object();

  std::size_t dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t class_index(const std::string& name) const;  // throws UnknownClass

  static ClassifierModel zeros(std::vector<std::string> classes, std::size_t dim);
};

/// Mean cross-entropy plus (l2 / 2) |W|^2 (bias unregularized).
struct LossGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad_weights;
  Eigen::VectorXd grad_bias;
};

LossGradient softmax_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features, std::span<const int> targets, double l2);

/// Mini-batch gradient descent on standardized features from a zero
/// initialization; returns the best-validation-loss snapshot with the
/// standardization folded back into weights and bias. Throws SingleClassInput
/// and NonFiniteLoss.
ClassifierModel train(const LabeledSet& train_set, const LabeledSet& val_set, std::vector<std::string> classes,
                      const TrainConfig& cfg);

struct Prediction {
  SnippetRef ref;
  std::vector<double> probs;
};

/// Max-logit-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> predict_probs(const ClassifierModel& model, std::span<const double> features);
Prediction predict(const ClassifierModel& model, const Embedding& e);
std::vector<Prediction> predict_all(const ClassifierModel& model, std::span<const Embedding> embeddings);

/// Index of the largest probability; ties go to the lowest class index.
std::size_t decide_argmax(std::span<const double> probs);
const std::string& decide_argmax(const ClassifierModel& model, const Prediction& p);

/// p[target] >= tau, for 0 < tau <= 1.
bool decide_threshold(std::span<const double> probs, std::size_t target, double tau);
bool decide_threshold(const ClassifierModel& model, const Prediction& p, const std::string& target, double tau);

nlohmann::json model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_model(const std::filesystem::path& path);

/// Rows {clip_id, index, classes: [...], probs: [...], argmax}.
void write_predictions(const std::filesystem::path& path, const ClassifierModel& model,
                       std::span<const Prediction> preds);

struct PredictionTable {
  std::vector<std::string> classes;
  std::vector<Prediction> rows;
};
PredictionTable read_predictions(const std::filesystem::path& path);

}  // namespace pamtriage
