#include "pamtriage/umap.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "pamtriage/error.hpp"
#include "pamtriage/rng.hpp"

namespace pamtriage {

void UmapConfig::validate(std::size_t n_points) const {
  if (n_points <= n_neighbors) {
    throw Error(ErrorKind::TooFewPoints, "UMAP needs more than n_neighbors=" + std::to_string(n_neighbors) +
                                             " points, got " + std::to_string(n_points));
  }
  if (n_neighbors < 2) throw Error(ErrorKind::InvalidArgument, "n_neighbors must be >= 2");
  if (!(min_dist > 0.0) || !(spread > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "min_dist and spread must be positive");
  }
  if (n_epochs == 0) throw Error(ErrorKind::InvalidArgument, "n_epochs must be positive");
}

// ---------------------------------------------------------------------------
// (a) kNN

KnnGraph knn_exact(const Eigen::MatrixXd& data, std::size_t k) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (k == 0 || k >= n) throw Error(ErrorKind::TooFewPoints, "need k < n for a kNN graph");

  // Gram-matrix distances rank candidates; exact differences decide the final order.
  const std::size_t margin = std::min(n - 1, k + 8);
  const Eigen::VectorXd norms = data.rowwise().squaredNorm();
  constexpr Eigen::Index kBlock = 256;

  KnnGraph g;
  g.k = k;
  g.indices.resize(n * k);
  g.distances.resize(n * k);
  std::vector<std::uint32_t> order(n);
  std::vector<std::pair<double, std::uint32_t>> cand;
  for (Eigen::Index start = 0; start < data.rows(); start += kBlock) {
    const Eigen::Index rows = std::min(kBlock, data.rows() - start);
    const Eigen::MatrixXd gram = data.middleRows(start, rows) * data.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto i = static_cast<std::size_t>(start + r);
      std::iota(order.begin(), order.end(), 0u);
      auto approx = [&](std::uint32_t j) {
        return norms(static_cast<Eigen::Index>(i)) + norms(j) - 2.0 * gram(r, j);
      };
      // Self goes last so it never survives the partition.
      std::swap(order[i], order[n - 1]);
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(margin - 1),
                       order.end() - 1, [&](std::uint32_t a, std::uint32_t b) {
                         const double da = approx(a);
                         const double db = approx(b);
                         return da < db || (da == db && a < b);
                       });
      cand.clear();
      for (std::size_t c = 0; c < margin; ++c) {
        const std::uint32_t j = order[c];
        const double d2 = (data.row(static_cast<Eigen::Index>(i)) - data.row(j)).squaredNorm();
        cand.emplace_back(d2, j);
      }
      std::sort(cand.begin(), cand.end());
      for (std::size_t c = 0; c < k; ++c) {
        g.indices[i * k + c] = cand[c].second;
        g.distances[i * k + c] = std::sqrt(cand[c].first);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// (b) smooth-kNN calibration

std::size_t SmoothKnn::flagged_count() const {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true));
}

namespace {

double membership_sum(std::span<const double> dists, double rho, double sigma) {
  double s = 0.0;
  for (double d : dists) s += std::exp(-std::max(0.0, d - rho) / sigma);
  return s;
}

}  // namespace

SmoothKnn smooth_knn_calibrate(const KnnGraph& graph) {
  const std::size_t n = graph.n();
  SmoothKnn out;
  out.target = std::log2(static_cast<double>(graph.k));
  out.rho.resize(n);
  out.sigma.resize(n);
  out.achieved.resize(n);
  out.flagged.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = graph.dists(i);
    const double rho = d.front();
    double s0 = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    if (!(s0 > 0.0)) s0 = 1.0;
    double lo = 1e-3 * s0;
    double hi = 1e3 * s0;
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < kSmoothKnnIterations; ++it) {
      mid = 0.5 * (lo + hi);
      // The sum grows with sigma.
      if (membership_sum(d, rho, mid) > out.target) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    out.rho[i] = rho;
    out.sigma[i] = mid;
    out.achieved[i] = membership_sum(d, rho, mid);
    out.flagged[i] = std::abs(out.achieved[i] - out.target) > kSmoothKnnTolerance;
  }
  return out;
}

std::vector<double> membership_strengths(const KnnGraph& graph, const SmoothKnn& calib) {
  std::vector<double> w(graph.indices.size());
  for (std::size_t i = 0; i < graph.n(); ++i) {
    const auto d = graph.dists(i);
    for (std::size_t c = 0; c < graph.k; ++c) {
      w[i * graph.k + c] = std::exp(-std::max(0.0, d[c] - calib.rho[i]) / calib.sigma[i]);
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// (c) symmetrization

double FuzzyGraph::weight(std::size_t i, std::size_t j) const {
  const auto first = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto last = cols.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(j));
  if (it == last || *it != j) return 0.0;
  return weights[static_cast<std::size_t>(it - cols.begin())];
}

FuzzyGraph symmetrize(const KnnGraph& graph, std::span<const double> strengths) {
  const std::size_t n = graph.n();
  // (row, col, w) for both directions; the union combines w_ij with w_ji.
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> directed;
  directed.reserve(graph.indices.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < graph.k; ++c) {
      directed.emplace_back(static_cast<std::uint32_t>(i), graph.indices[i * graph.k + c],
                            strengths[i * graph.k + c]);
    }
  }
  std::sort(directed.begin(), directed.end());

  auto lookup = [&](std::uint32_t r, std::uint32_t c) -> const double* {
    const auto it = std::lower_bound(directed.begin(), directed.end(), std::make_tuple(r, c, -1.0));
    if (it != directed.end() && std::get<0>(*it) == r && std::get<1>(*it) == c) return &std::get<2>(*it);
    return nullptr;
  };

  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> sym;
  sym.reserve(directed.size() * 2);
  for (const auto& [r, c, w] : directed) {
    const double* reverse = lookup(c, r);
    const double v = fuzzy_union(w, reverse ? *reverse : 0.0);
    sym.emplace_back(r, c, v);
    // A present reverse edge emits its own entry with the same union value.
    if (reverse == nullptr) sym.emplace_back(c, r, v);
  }
  std::sort(sym.begin(), sym.end());
  sym.erase(std::unique(sym.begin(), sym.end(),
                        [](const auto& a, const auto& b) {
                          return std::get<0>(a) == std::get<0>(b) && std::get<1>(a) == std::get<1>(b);
                        }),
            sym.end());

  FuzzyGraph fg;
  fg.n = n;
  fg.row_ptr.assign(n + 1, 0);
  fg.cols.reserve(sym.size());
  fg.weights.reserve(sym.size());
  for (const auto& [r, c, w] : sym) {
    ++fg.row_ptr[r + 1];
    fg.cols.push_back(c);
    fg.weights.push_back(w);
  }
  for (std::size_t i = 0; i < n; ++i) fg.row_ptr[i + 1] += fg.row_ptr[i];
  return fg;
}

// ---------------------------------------------------------------------------
// (d) curve parameters

CurveParams fit_curve_params(double min_dist, double spread) {
  if (!(min_dist > 0.0) || !(spread > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "min_dist and spread must be positive");
  }
  constexpr int kPoints = 300;
  std::vector<double> xs(kPoints);
  std::vector<double> ys(kPoints);
  for (int i = 0; i < kPoints; ++i) {
    xs[i] = 3.0 * spread * (i + 1) / kPoints;
    ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
  }
  auto sse = [&](double a, double b) {
    double s = 0.0;
    for (int i = 0; i < kPoints; ++i) {
      const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2.0 * b)) - ys[i];
      s += r * r;
    }
    return s;
  };

  double a = 1.0;
  double b = 1.0;
  double lambda = 1e-3;
  double cost = sse(a, b);
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (int i = 0; i < kPoints; ++i) {
      const double p = std::pow(xs[i], 2.0 * b);
      const double q = 1.0 + a * p;
      const double r = 1.0 / q - ys[i];
      const Eigen::Vector2d grad(-p / (q * q), -a * p * 2.0 * std::log(xs[i]) / (q * q));
      jtj += grad * grad.transpose();
      jtr += grad * r;
    }
    Eigen::Matrix2d damped = jtj;
    damped.diagonal() *= (1.0 + lambda);
    const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
    const double na = a + step(0);
    const double nb = b + step(1);
    const double ncost = (na > 0.0 && nb > 0.0) ? sse(na, nb) : std::numeric_limits<double>::infinity();
    if (ncost < cost) {
      const bool converged = cost - ncost < 1e-15 * std::max(1.0, cost) && step.norm() < 1e-12;
      a = na;
      b = nb;
      cost = ncost;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (converged) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  return {a, b};
}

// ---------------------------------------------------------------------------
// (e) layout

namespace {

constexpr double kGradClip = 4.0;

double clip(double v) { return std::clamp(v, -kGradClip, kGradClip); }

}  // namespace

Eigen::MatrixXd optimize_layout(const FuzzyGraph& graph, const CurveParams& curve, const UmapConfig& cfg) {
  const std::size_t n = graph.n;
  Rng rng(cfg.seed);
  Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) {
    y(static_cast<Eigen::Index>(i), 0) = rng.uniform(-10.0, 10.0);
    y(static_cast<Eigen::Index>(i), 1) = rng.uniform(-10.0, 10.0);
  }
  if (graph.nnz() == 0) return y;

  const double max_w = *std::max_element(graph.weights.begin(), graph.weights.end());
  struct Edge {
    std::uint32_t head;
    std::uint32_t tail;
    double epochs_per_sample;
    double next_sample;
  };
  std::vector<Edge> edges;
  edges.reserve(graph.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = graph.row_ptr[i]; e < graph.row_ptr[i + 1]; ++e) {
      const double w = graph.weights[e];
      // Edges too weak to be sampled even once are dropped.
      if (w < max_w / static_cast<double>(cfg.n_epochs)) continue;
      const double eps = max_w / w;
      edges.push_back({static_cast<std::uint32_t>(i), graph.cols[e], eps, eps});
    }
  }

  const double a = curve.a;
  const double b = curve.b;
  for (std::size_t epoch = 1; epoch <= cfg.n_epochs; ++epoch) {
    const double alpha = cfg.learning_rate *
                         (1.0 - static_cast<double>(epoch - 1) / static_cast<double>(cfg.n_epochs));
    for (auto& edge : edges) {
      if (edge.next_sample > static_cast<double>(epoch)) continue;
      const auto h = static_cast<Eigen::Index>(edge.head);
      const auto t = static_cast<Eigen::Index>(edge.tail);

      double dx = y(h, 0) - y(t, 0);
      double dy = y(h, 1) - y(t, 1);
      double d2 = dx * dx + dy * dy;
      if (d2 > 0.0) {
        const double coeff = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
        const double gx = clip(coeff * dx) * alpha;
        const double gy = clip(coeff * dy) * alpha;
        y(h, 0) += gx;
        y(h, 1) += gy;
        y(t, 0) -= gx;
        y(t, 1) -= gy;
      }
      edge.next_sample += edge.epochs_per_sample;

      for (std::size_t s = 0; s < cfg.negative_sample_rate; ++s) {
        const auto k = static_cast<Eigen::Index>(rng.below(n));
        if (k == h) continue;
        dx = y(h, 0) - y(k, 0);
        dy = y(h, 1) - y(k, 1);
        d2 = dx * dx + dy * dy;
        if (d2 > 0.0) {
          const double coeff = 2.0 * b / ((0.001 + d2) * (a * std::pow(d2, b) + 1.0));
          y(h, 0) += clip(coeff * dx) * alpha;
          y(h, 1) += clip(coeff * dy) * alpha;
        } else {
          y(h, 0) += kGradClip * alpha;
          y(h, 1) += kGradClip * alpha;
        }
      }
    }
  }
  return y;
}

UmapResult umap_layout(const Eigen::MatrixXd& data, const UmapConfig& cfg) {
  cfg.validate(static_cast<std::size_t>(data.rows()));
  UmapResult r;
  r.knn = knn_exact(data, cfg.n_neighbors);
  r.calibration = smooth_knn_calibrate(r.knn);
  const auto strengths = membership_strengths(r.knn, r.calibration);
  const FuzzyGraph graph = symmetrize(r.knn, strengths);
  r.curve = fit_curve_params(cfg.min_dist, cfg.spread);
  r.layout = optimize_layout(graph, r.curve, cfg);
  return r;
}

ProjectionSet umap_fit(std::span<const Embedding> embeddings, const UmapConfig& cfg) {
  const UmapResult r = umap_layout(to_matrix(embeddings), cfg);
  ProjectionSet proj;
  proj.method = ProjectionMethod::umap;
  proj.points.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    proj.points.push_back({embeddings[i].ref, r.layout(row, 0), r.layout(row, 1)});
  }
  proj.fit_meta = {{"method", "umap"},
                   {"n", embeddings.size()},
                   {"n_neighbors", cfg.n_neighbors},
                   {"min_dist", cfg.min_dist},
                   {"spread", cfg.spread},
                   {"n_epochs", cfg.n_epochs},
                   {"negative_sample_rate", cfg.negative_sample_rate},
                   {"learning_rate", cfg.learning_rate},
                   {"seed", cfg.seed},
                   {"a", r.curve.a},
                   {"b", r.curve.b},
                   {"flagged_points", r.calibration.flagged_count()}};
  return proj;
}

}  // namespace pamtriage
