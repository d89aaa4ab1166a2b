#include "pamtriage/classify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"
#include "pamtriage/manifest.hpp"
#include "pamtriage/rng.hpp"

namespace pamtriage {

void SplitSpec::validate() const {
  if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0 ||
      std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidArgument, "split fractions must be non-negative and sum to 1");
  }
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  const std::array<double, 3> fracs{spec.train_frac, spec.val_frac, spec.test_frac};
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * fracs[i];
    const double whole = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    rem[i] = std::max(0.0, exact - whole);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{2, 1, 0};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b] + 1e-12; });
  for (std::size_t i = 0; assigned < n; i = (i + 1) % 3, ++assigned) ++counts[order[i]];
  return counts;
}

SplitIndices split(std::span<const std::string> labels, const SplitSpec& spec) {
  spec.validate();
  std::map<std::string, std::vector<std::size_t>> groups;
  if (spec.stratified) {
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
    for (const auto& [cls, members] : groups) {
      if (members.size() < 3) {
        throw Error(ErrorKind::ClassTooSmall, "class '" + cls + "' has " + std::to_string(members.size()) +
                                                  " examples; stratified splits need 3");
      }
    }
  } else {
    auto& all = groups[std::string{}];
    all.resize(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
  }

  Rng rng(spec.seed);
  SplitIndices out;
  for (auto& [cls, members] : groups) {
    shuffle_in_place(members, rng);
    const auto counts = split_counts(members.size(), spec);
    auto it = members.begin();
    out.train.insert(out.train.end(), it, it + static_cast<std::ptrdiff_t>(counts[0]));
    it += static_cast<std::ptrdiff_t>(counts[0]);
    out.val.insert(out.val.end(), it, it + static_cast<std::ptrdiff_t>(counts[1]));
    it += static_cast<std::ptrdiff_t>(counts[1]);
    out.test.insert(out.test.end(), it, members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
  LabeledSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.targets.reserve(rows.size());
  out.refs.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.targets.push_back(targets[rows[i]]);
    out.refs.push_back(refs[rows[i]]);
  }
  return out;
}

LabeledSet make_labeled_set(std::span<const Embedding> embeddings, std::span<const LabeledRef> labels,
                            std::span<const std::string> classes) {
  std::unordered_map<SnippetRef, std::size_t, SnippetRefHash> by_ref;
  for (std::size_t i = 0; i < embeddings.size(); ++i) by_ref.emplace(embeddings[i].ref, i);
  std::map<std::string, int> class_ids;
  for (std::size_t c = 0; c < classes.size(); ++c) class_ids.emplace(classes[c], static_cast<int>(c));

  std::vector<std::pair<std::size_t, int>> rows;
  for (const auto& l : labels) {
    const auto e = by_ref.find(l.ref);
    const auto c = class_ids.find(l.class_name);
    if (e == by_ref.end() || c == class_ids.end()) continue;
    rows.emplace_back(e->second, c->second);
  }
  const auto dim = embeddings.empty() ? 0 : static_cast<Eigen::Index>(embeddings.front().vector.size());
  LabeledSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = embeddings[rows[i].first].vector;
    if (static_cast<Eigen::Index>(v.size()) != dim) throw Error(ErrorKind::DimensionMismatch, "mixed dimensions");
    out.features.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), dim);
    out.targets.push_back(rows[i].second);
    out.refs.push_back(embeddings[rows[i].first].ref);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t ClassifierModel::class_index(const std::string& name) const {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw Error(ErrorKind::UnknownClass, name);
  return static_cast<std::size_t>(it - classes.begin());
}

ClassifierModel ClassifierModel::zeros(std::vector<std::string> classes, std::size_t dim) {
  ClassifierModel m;
  const auto c = static_cast<Eigen::Index>(classes.size());
  m.classes = std::move(classes);
  m.weights = Eigen::MatrixXd::Zero(c, static_cast<Eigen::Index>(dim));
  m.bias = Eigen::VectorXd::Zero(c);
  return m;
}

namespace {

// Row-wise softmax of logits (n x C), stabilized per row.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

double cross_entropy(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias, const Eigen::MatrixXd& features,
                     std::span<const int> targets) {
  if (targets.empty()) return 0.0;
  Eigen::MatrixXd logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, targets[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(targets.size());
}

}  // namespace

LossGradient softmax_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   const Eigen::MatrixXd& features, std::span<const int> targets, double l2) {
  const auto n = static_cast<double>(targets.size());
  Eigen::MatrixXd logits = features * weights.transpose();
  logits.rowwise() += bias.transpose();
  Eigen::MatrixXd probs = softmax_rows(logits);

  LossGradient out;
  out.loss = cross_entropy(weights, bias, features, targets) + 0.5 * l2 * weights.squaredNorm();
  for (std::size_t i = 0; i < targets.size(); ++i) probs(static_cast<Eigen::Index>(i), targets[i]) -= 1.0;
  out.grad_weights = probs.transpose() * features / n + l2 * weights;
  out.grad_bias = probs.colwise().sum().transpose() / n;
  return out;
}

ClassifierModel train(const LabeledSet& train_set, const LabeledSet& val_set, std::vector<std::string> classes,
                      const TrainConfig& cfg) {
  const auto n_classes = static_cast<Eigen::Index>(classes.size());
  if (n_classes < 2) throw Error(ErrorKind::SingleClassInput, "need at least two classes");
  std::vector<std::size_t> per_class(classes.size(), 0);
  for (int t : train_set.targets) {
    if (t < 0 || t >= n_classes) throw Error(ErrorKind::InvalidArgument, "target out of range");
    ++per_class[static_cast<std::size_t>(t)];
  }
  if (std::count_if(per_class.begin(), per_class.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw Error(ErrorKind::SingleClassInput, "training set holds fewer than two classes");
  }
  if (cfg.batch == 0 || cfg.epochs == 0) throw Error(ErrorKind::InvalidArgument, "batch and epochs must be positive");

  const Eigen::MatrixXd& x = train_set.features;
  const Eigen::Index dim = x.cols();
  const std::size_t n = train_set.size();

  // Per-feature standardization from the training rows.
  const Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sigma = ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
  for (Eigen::Index j = 0; j < dim; ++j) {
    if (!(sigma(j) > 1e-12)) sigma(j) = 1.0;
  }
  auto standardize = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
    return (m.rowwise() - mu).array().rowwise() / sigma.array();
  };
  const Eigen::MatrixXd z = standardize(x);
  const Eigen::MatrixXd z_val = val_set.size() > 0 ? standardize(val_set.features) : Eigen::MatrixXd();

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_classes, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_classes);
  Eigen::MatrixXd best_w = w;
  Eigen::VectorXd best_b = b;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed);
  nlohmann::json train_curve = nlohmann::json::array();
  nlohmann::json val_curve = nlohmann::json::array();

  Eigen::MatrixXd batch_x;
  std::vector<int> batch_y;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) shuffle_in_place(order, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch) {
      const std::size_t len = std::min(cfg.batch, n - start);
      batch_x.resize(static_cast<Eigen::Index>(len), dim);
      batch_y.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        batch_x.row(static_cast<Eigen::Index>(i)) = z.row(static_cast<Eigen::Index>(order[start + i]));
        batch_y[i] = train_set.targets[order[start + i]];
      }
      const LossGradient g = softmax_loss_gradient(w, b, batch_x, batch_y, cfg.l2);
      if (!std::isfinite(g.loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch at " +
                                                  std::to_string(start) + ": loss " + std::to_string(g.loss) +
                                                  " (lr " + std::to_string(cfg.lr) + ")");
      }
      w -= cfg.lr * g.grad_weights;
      b -= cfg.lr * g.grad_bias;
    }
    const double train_loss = cross_entropy(w, b, z, train_set.targets) + 0.5 * cfg.l2 * w.squaredNorm();
    const double val_loss = val_set.size() > 0 ? cross_entropy(w, b, z_val, val_set.targets) : train_loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": train loss " +
                                                std::to_string(train_loss) + ", val loss " + std::to_string(val_loss));
    }
    train_curve.push_back(train_loss);
    val_curve.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_w = w;
      best_b = b;
      best_epoch = epoch;
    }
  }

  ClassifierModel model;
  model.classes = std::move(classes);
  // Fold standardization: W z + b = (W / sigma) x + (b - W mu / sigma).
  model.weights = best_w.array().rowwise() / sigma.array();
  model.bias = best_b - model.weights * mu.transpose();
  model.train_meta = {{"epochs", cfg.epochs},
                      {"batch", cfg.batch},
                      {"lr", cfg.lr},
                      {"l2", cfg.l2},
                      {"seed", cfg.seed},
                      {"n_train", n},
                      {"n_val", val_set.size()},
                      {"best_epoch", best_epoch},
                      {"best_val_loss", best_val},
                      {"final_train_loss", train_curve.back()},
                      {"final_val_loss", val_curve.back()},
                      {"train_loss", train_curve},
                      {"val_loss", val_curve}};
  return model;
}

// ---------------------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> predict_probs(const ClassifierModel& model, std::span<const double> features) {
  if (features.size() != model.dim()) {
    throw Error(ErrorKind::DimensionMismatch, "embedding dimension " + std::to_string(features.size()) +
                                                  " != model dimension " + std::to_string(model.dim()));
  }
  const Eigen::Map<const Eigen::VectorXd> x(features.data(), static_cast<Eigen::Index>(features.size()));
  const Eigen::VectorXd logits = model.weights * x + model.bias;
  return softmax(std::span<const double>(logits.data(), static_cast<std::size_t>(logits.size())));
}

Prediction predict(const ClassifierModel& model, const Embedding& e) {
  return {e.ref, predict_probs(model, e.vector)};
}

std::vector<Prediction> predict_all(const ClassifierModel& model, std::span<const Embedding> embeddings) {
  std::vector<Prediction> out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) out.push_back(predict(model, e));
  return out;
}

std::size_t decide_argmax(std::span<const double> probs) {
  if (probs.empty()) throw Error(ErrorKind::InvalidArgument, "empty prediction");
  // max_element returns the first of equal maxima.
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

const std::string& decide_argmax(const ClassifierModel& model, const Prediction& p) {
  return model.classes.at(decide_argmax(p.probs));
}

bool decide_threshold(std::span<const double> probs, std::size_t target, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tau must be in (0, 1]");
  if (target >= probs.size()) throw Error(ErrorKind::UnknownClass, "target index out of range");
  return probs[target] >= tau;
}

bool decide_threshold(const ClassifierModel& model, const Prediction& p, const std::string& target, double tau) {
  return decide_threshold(p.probs, model.class_index(target), tau);
}

// ---------------------------------------------------------------------------

nlohmann::json model_to_json(const ClassifierModel& model) {
  std::vector<double> weights(static_cast<std::size_t>(model.weights.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      weights.data(), model.weights.rows(), model.weights.cols()) = model.weights;
  return {{"classes", model.classes},
          {"dim", model.dim()},
          {"weights", weights},
          {"bias", std::vector<double>(model.bias.data(), model.bias.data() + model.bias.size())},
          {"train_meta", model.train_meta}};
}

ClassifierModel model_from_json(const nlohmann::json& j) {
  ClassifierModel m;
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    const auto weights = j.at("weights").get<std::vector<double>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    const std::size_t c = m.classes.size();
    if (c < 2 || bias.size() != c || weights.empty() || weights.size() % c != 0) {
      throw Error(ErrorKind::ParseError, "model shape mismatch");
    }
    const std::size_t dim = weights.size() / c;
    m.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        weights.data(), static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(dim));
    m.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(c));
    m.train_meta = j.value("train_meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("model file: ") + e.what());
  }
  if (!m.weights.allFinite() || !m.bias.allFinite()) throw Error(ErrorKind::ParseError, "non-finite model parameters");
  return m;
}

void save_model(const std::filesystem::path& path, const ClassifierModel& model) {
  write_file_atomic(path, model_to_json(model).dump());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::ParseError, path.string() + " is not valid JSON");
  return model_from_json(j);
}

void write_predictions(const std::filesystem::path& path, const ClassifierModel& model,
                       std::span<const Prediction> preds) {
  std::vector<nlohmann::json> rows;
  rows.reserve(preds.size());
  for (const auto& p : preds) {
    rows.push_back({{"clip_id", p.ref.clip_id},
                    {"index", p.ref.index},
                    {"classes", model.classes},
                    {"probs", p.probs},
                    {"argmax", decide_argmax(model, p)}});
  }
  write_jsonl(path, rows);
}

PredictionTable read_predictions(const std::filesystem::path& path) {
  PredictionTable table;
  for (const auto& row : read_jsonl(path)) {
    try {
      auto classes = row.at("classes").get<std::vector<std::string>>();
      if (table.classes.empty()) {
        table.classes = std::move(classes);
      } else if (classes != table.classes) {
        throw Error(ErrorKind::ParseError, "prediction rows disagree on class order");
      }
      Prediction p{{row.at("clip_id").get<std::string>(), row.at("index").get<std::uint32_t>()},
                   row.at("probs").get<std::vector<double>>()};
      if (p.probs.size() != table.classes.size()) throw Error(ErrorKind::ParseError, "probs length mismatch");
      table.rows.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
  }
  return table;
}

}  // namespace pamtriage
