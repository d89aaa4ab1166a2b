#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>

#include "pamtriage/embedding_io.hpp"
#include "pamtriage/error.hpp"
#include "pamtriage/manifest.hpp"
#include "pamtriage/reduce.hpp"

namespace pamtriage {

std::string_view to_string(ProjectionMethod m) {
  return m == ProjectionMethod::pca ? "pca" : "umap";
}

ProjectionMethod parse_projection_method(std::string_view s) {
  if (s == "pca") return ProjectionMethod::pca;
  if (s == "umap") return ProjectionMethod::umap;
  throw Error(ErrorKind::InvalidArgument, "unknown projection method '" + std::string(s) + "'");
}

ProjectionSet pca_projection(std::span<const Embedding> embeddings, std::size_t k) {
  const Eigen::MatrixXd data = to_matrix(embeddings);
  const PcaModel model = pca_fit(data, k);
  const Eigen::MatrixXd coords = pca_project_rows(model, data);
  ProjectionSet proj;
  proj.method = ProjectionMethod::pca;
  proj.points.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    proj.points.push_back({embeddings[i].ref, coords(r, 0), k > 1 ? coords(r, 1) : 0.0});
  }
  proj.fit_meta = {{"method", "pca"},
                   {"k", k},
                   {"n", embeddings.size()},
                   {"eigenvalues", std::vector<double>(model.eigenvalues.data(),
                                                       model.eigenvalues.data() + model.eigenvalues.size())},
                   {"degenerate", model.degenerate}};
  return proj;
}

void write_projection(const std::filesystem::path& path, const ProjectionSet& proj) {
  std::vector<nlohmann::json> rows;
  rows.reserve(proj.points.size());
  const std::string method(to_string(proj.method));
  for (const auto& p : proj.points) {
    rows.push_back({{"clip_id", p.ref.clip_id}, {"index", p.ref.index}, {"x", p.x}, {"y", p.y}, {"method", method}});
  }
  write_jsonl(path, rows);
  auto meta_path = path;
  meta_path += ".meta.json";
  write_file_atomic(meta_path, proj.fit_meta.dump(2));
}

ProjectionSet read_projection(const std::filesystem::path& path) {
  ProjectionSet proj;
  bool first = true;
  for (const auto& row : read_jsonl(path)) {
    try {
      const auto method = parse_projection_method(row.at("method").get<std::string>());
      if (first) proj.method = method;
      first = false;
      proj.points.push_back({{row.at("clip_id").get<std::string>(), row.at("index").get<std::uint32_t>()},
                             row.at("x").get<double>(),
                             row.at("y").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
  }
  auto meta_path = path;
  meta_path += ".meta.json";
  if (std::ifstream meta(meta_path); meta) {
    proj.fit_meta = nlohmann::json::parse(meta, nullptr, false);
    if (proj.fit_meta.is_discarded()) proj.fit_meta = nlohmann::json::object();
  }
  return proj;
}

CompareOp parse_compare_op(std::string_view s) {
  if (s == ">" || s == "gt") return CompareOp::greater;
  if (s == "<" || s == "lt") return CompareOp::less;
  if (s == ">=" || s == "ge") return CompareOp::greater_equal;
  if (s == "<=" || s == "le") return CompareOp::less_equal;
  throw Error(ErrorKind::InvalidArgument, "unknown comparison '" + std::string(s) + "'");
}

std::vector<SnippetRef> filter_by_component(const ProjectionSet& proj, int component, CompareOp op,
                                            double threshold) {
  if (component != 1 && component != 2) {
    throw Error(ErrorKind::InvalidArgument, "component must be 1 or 2");
  }
  std::vector<SnippetRef> out;
  for (const auto& p : proj.points) {
    const double v = component == 1 ? p.x : p.y;
    bool keep = false;
    switch (op) {
      case CompareOp::greater: keep = v > threshold; break;
      case CompareOp::less: keep = v < threshold; break;
      case CompareOp::greater_equal: keep = v >= threshold; break;
      case CompareOp::less_equal: keep = v <= threshold; break;
    }
    if (keep) out.push_back(p.ref);
  }
  return out;
}

std::vector<std::size_t> farthest_point_subset(const ProjectionSet& proj, std::size_t cap) {
  const std::size_t n = proj.points.size();
  std::vector<std::size_t> out;
  if (n <= cap) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  if (cap == 0) return out;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t current = 0;
  for (std::size_t picked = 0; picked < cap; ++picked) {
    taken[current] = 1;
    out.push_back(current);
    const auto& c = proj.points[current];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double dx = proj.points[i].x - c.x;
      const double dy = proj.points[i].y - c.y;
      nearest[i] = std::min(nearest[i], dx * dx + dy * dy);
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    if (best == n) break;
    current = best;
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "fraction must be in (0, 1]");
  }
  const auto want = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
  return choose_indices(n, want, seed);
}

}  // namespace pamtriage
