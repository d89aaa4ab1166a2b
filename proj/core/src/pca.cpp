#include <cmath>

#include "pamtriage/error.hpp"
#include "pamtriage/reduce.hpp"

namespace pamtriage {

Eigen::MatrixXd to_matrix(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) return {};
  const auto dim = static_cast<Eigen::Index>(embeddings.front().vector.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(embeddings.size()), dim);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (static_cast<Eigen::Index>(embeddings[i].vector.size()) != dim) {
      throw Error(ErrorKind::DimensionMismatch, "embedding " + to_string(embeddings[i].ref) +
                                                    " has dimension " +
                                                    std::to_string(embeddings[i].vector.size()));
    }
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(embeddings[i].vector.data(), dim);
  }
  return m;
}

PcaModel pca_fit(const Eigen::MatrixXd& data, std::size_t k) {
  const Eigen::Index n = data.rows();
  const Eigen::Index dim = data.cols();
  if (n < 2) throw Error(ErrorKind::TooFewPoints, "PCA needs at least 2 points");
  if (k == 0 || static_cast<Eigen::Index>(k) > std::min(n - 1, dim)) {
    throw Error(ErrorKind::InvalidArgument,
                "k must be in [1, min(n-1, dim)] = [1, " + std::to_string(std::min(n - 1, dim)) + "]");
  }
  const auto kk = static_cast<Eigen::Index>(k);

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();

  const double scale = data.cwiseAbs().maxCoeff();
  const double spread = centered.cwiseAbs().maxCoeff();
  if (spread <= 1e-12 * std::max(scale, 1e-300)) {
    model.degenerate = true;
    model.components = Eigen::MatrixXd::Identity(kk, dim);
    model.eigenvalues = Eigen::VectorXd::Zero(kk);
    return model;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  model.components = svd.matrixV().leftCols(kk).transpose();
  model.eigenvalues.resize(kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    const double lambda = sv(i) * sv(i) / static_cast<double>(n - 1);
    model.eigenvalues(i) = lambda < 1e-10 ? std::max(lambda, 0.0) : lambda;
  }
  for (Eigen::Index i = 0; i < kk; ++i) {
    Eigen::Index arg = 0;
    model.components.row(i).cwiseAbs().maxCoeff(&arg);
    if (model.components(i, arg) < 0.0) model.components.row(i) *= -1.0;
  }
  return model;
}

PcaModel pca_fit(std::span<const Embedding> embeddings, std::size_t k) {
  return pca_fit(to_matrix(embeddings), k);
}

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& point) {
  if (point.size() != model.mean.size()) {
    throw Error(ErrorKind::DimensionMismatch, "point dimension " + std::to_string(point.size()) +
                                                  " != model dimension " + std::to_string(model.mean.size()));
  }
  return model.components * (point - model.mean);
}

Eigen::VectorXd pca_project(const PcaModel& model, const Embedding& e) {
  return pca_project(model, Eigen::Map<const Eigen::VectorXd>(e.vector.data(),
                                                              static_cast<Eigen::Index>(e.vector.size())));
}

Eigen::MatrixXd pca_project_rows(const PcaModel& model, const Eigen::MatrixXd& data) {
  if (data.cols() != model.mean.size()) {
    throw Error(ErrorKind::DimensionMismatch, "data dimension does not match model");
  }
  return (data.rowwise() - model.mean.transpose()) * model.components.transpose();
}

nlohmann::json pca_to_json(const PcaModel& model) {
  std::vector<double> components(model.components.size());
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      components.data(), model.components.rows(), model.components.cols()) = model.components;
  return {{"mean", std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size())},
          {"components", components},
          {"k", model.k()},
          {"eigenvalues", std::vector<double>(model.eigenvalues.data(),
                                              model.eigenvalues.data() + model.eigenvalues.size())},
          {"degenerate", model.degenerate}};
}

PcaModel pca_from_json(const nlohmann::json& j) {
  PcaModel model;
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto comps = j.at("components").get<std::vector<double>>();
  const auto eig = j.at("eigenvalues").get<std::vector<double>>();
  const auto k = j.at("k").get<std::size_t>();
  if (comps.size() != k * mean.size() || eig.size() != k) {
    throw Error(ErrorKind::ParseError, "PCA model shape mismatch");
  }
  model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  model.components = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      comps.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(mean.size()));
  model.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), static_cast<Eigen::Index>(k));
  model.degenerate = j.value("degenerate", false);
  return model;
}

}  // namespace pamtriage
