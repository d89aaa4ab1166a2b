#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "pamtriage/features.hpp"
#include "pamtriage/reduce.hpp"

namespace pamtriage {

struct UmapConfig {
  std::size_t n_neighbors = 10;
  double min_dist = 0.1;
  double spread = 1.0;
  std::size_t n_epochs = 200;
  std::size_t negative_sample_rate = 5;
  double learning_rate = 1.0;
  std::uint64_t seed = 7;

  /// Checks 2 <= n_neighbors < n_points and min_dist > 0.
  void validate(std::size_t n_points) const;
};

/// Exact k-nearest-neighbor lists under the Euclidean metric, self excluded.
/// Row i holds neighbors in ascending distance; equal distances order by index.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // n * k
  std::vector<double> distances;       // n * k

  std::size_t n() const { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::uint32_t> neighbors(std::size_t i) const { return {indices.data() + i * k, k}; }
  std::span<const double> dists(std::size_t i) const { return {distances.data() + i * k, k}; }
};

KnnGraph knn_exact(const Eigen::MatrixXd& data, std::size_t k);

struct SmoothKnn {
  std::vector<double> rho;
  std::vector<double> sigma;
  std::vector<double> achieved;  // sum of memberships at the final sigma
  std::vector<bool> flagged;     // target not reached inside the bracket
  double target = 0.0;

  std::size_t flagged_count() const;
};

inline constexpr int kSmoothKnnIterations = 64;
inline constexpr double kSmoothKnnTolerance = 1e-4;

/// Per point: rho = nearest-neighbor distance, sigma by bisection over
/// [1e-3 s0, 1e3 s0] (s0 = mean neighbor distance) so that
/// sum_j exp(-max(0, d_ij - rho) / sigma) = log2(k).
SmoothKnn smooth_knn_calibrate(const KnnGraph& graph);

/// Directed membership strengths exp(-max(0, d - rho) / sigma), laid out like graph.indices.
std::vector<double> membership_strengths(const KnnGraph& graph, const SmoothKnn& calib);

/// Probabilistic t-conorm.
constexpr double fuzzy_union(double a, double b) { return a + b - a * b; }

/// Symmetric sparse weight matrix in CSR form.
struct FuzzyGraph {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> cols;
  std::vector<double> weights;

  double weight(std::size_t i, std::size_t j) const;
  std::size_t nnz() const { return weights.size(); }
};

FuzzyGraph symmetrize(const KnnGraph& graph, std::span<const double> strengths);

/// Parameters of the low-dimensional similarity 1 / (1 + a d^(2b)).
struct CurveParams {
  double a = 1.0;
  double b = 1.0;
};

/// Levenberg-Marquardt fit of 1 / (1 + a d^(2b)) to the min_dist-offset
/// exponential over d in (0, 3 * spread].
CurveParams fit_curve_params(double min_dist, double spread = 1.0);

/// Seeded uniform init in [-10, 10]^2, then sequential SGD over edges.
Eigen::MatrixXd optimize_layout(const FuzzyGraph& graph, const CurveParams& curve, const UmapConfig& cfg);

struct UmapResult {
  Eigen::MatrixXd layout;  // n x 2
  KnnGraph knn;
  SmoothKnn calibration;
  CurveParams curve;
};

UmapResult umap_layout(const Eigen::MatrixXd& data, const UmapConfig& cfg);

ProjectionSet umap_fit(std::span<const Embedding> embeddings, const UmapConfig& cfg);

}  // namespace pamtriage
