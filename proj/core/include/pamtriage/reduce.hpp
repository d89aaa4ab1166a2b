#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pamtriage/features.hpp"
#include "pamtriage/rng.hpp"
#include "pamtriage/types.hpp"

namespace pamtriage {

/// Rows are points.
Eigen::MatrixXd to_matrix(std::span<const Embedding> embeddings);

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // k x dim, orthonormal rows
  Eigen::VectorXd eigenvalues; // k, descending, >= 0
  bool degenerate = false;     // zero covariance

  std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Sample-covariance (n - 1) PCA via SVD of the centered data matrix. Each
/// component's largest-magnitude element is made positive.
PcaModel pca_fit(const Eigen::MatrixXd& data, std::size_t k = 2);
PcaModel pca_fit(std::span<const Embedding> embeddings, std::size_t k = 2);

Eigen::VectorXd pca_project(const PcaModel& model, const Eigen::VectorXd& point);
Eigen::VectorXd pca_project(const PcaModel& model, const Embedding& e);
/// Projects every row of `data`; result is n x k.
Eigen::MatrixXd pca_project_rows(const PcaModel& model, const Eigen::MatrixXd& data);

nlohmann::json pca_to_json(const PcaModel& model);
PcaModel pca_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------

enum class ProjectionMethod { pca, umap };

std::string_view to_string(ProjectionMethod m);
ProjectionMethod parse_projection_method(std::string_view s);

struct ProjectedPoint {
  SnippetRef ref;
  double x = 0.0;
  double y = 0.0;
};

struct ProjectionSet {
  ProjectionMethod method = ProjectionMethod::pca;
  std::vector<ProjectedPoint> points;
  nlohmann::json fit_meta = nlohmann::json::object();
};

/// Fits PCA with k components and keeps the first two coordinates.
ProjectionSet pca_projection(std::span<const Embedding> embeddings, std::size_t k = 2);

/// Rows {clip_id, index, x, y, method}; fit metadata goes to a sidecar
/// `<path>.meta.json`.
void write_projection(const std::filesystem::path& path, const ProjectionSet& proj);
ProjectionSet read_projection(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Triage

enum class CompareOp { greater, less, greater_equal, less_equal };

CompareOp parse_compare_op(std::string_view s);

/// Refs whose coordinate (component 1 = x, 2 = y) satisfies `op threshold`,
/// in input order.
std::vector<SnippetRef> filter_by_component(const ProjectionSet& proj, int component, CompareOp op,
                                            double threshold);

/// Greedy farthest-point subset of at most `cap` points in the 2-D layout,
/// seeded at the first point; indices come back ascending. All indices when
/// the set already fits.
std::vector<std::size_t> farthest_point_subset(const ProjectionSet& proj, std::size_t cap);

/// round(n * fraction) indices drawn uniformly without replacement, returned
/// in ascending order. Deterministic per seed.
std::vector<std::size_t> sample_indices(std::size_t n, double fraction, std::uint64_t seed);

template <typename T>
std::vector<T> sample_subset(std::span<const T> items, double fraction, std::uint64_t seed) {
  std::vector<T> out;
  const auto picked = sample_indices(items.size(), fraction, seed);
  out.reserve(picked.size());
  for (std::size_t i : picked) out.push_back(items[i]);
  return out;
}

}  // namespace pamtriage
