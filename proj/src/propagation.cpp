#include "burstdepth/propagation.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#ifdef BURSTDEPTH_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif
#include <cmath>
#include <limits>
#include <numeric>

#include "burstdepth/error.hpp"

namespace burstdepth {

void PropagationConfig::validate() const {
  if (!(c1 > 0.0) || !(c2 > 0.0) || !(sigma_c > 0.0)) {
    throw Error(ErrorCode::kConfiguration, "propagation weights c1, c2, sigma_c must be > 0");
  }
  if (neighborhood != 4 && neighborhood != 8) {
    throw Error(ErrorCode::kConfiguration, "neighborhood must be 4 or 8");
  }
}

namespace {

struct DisjointSets {
  std::vector<int> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct Edge {
  int p;
  int q;
  double affinity;
};

}  // namespace

PropagationResult propagate(std::span<const DepthSeed> seeds, const Image& guide,
                            const PropagationConfig& cfg) {
  cfg.validate();
  if (guide.empty()) throw Error(ErrorCode::kConfiguration, "propagation guide is empty");
  const Image lum = to_luminance(guide);
  const int w = lum.width();
  const int h = lum.height();
  const std::size_t n = lum.pixel_count();

  // Data term per pixel: count of seeds and sum of their values.
  std::vector<double> seed_weight(n, 0.0);
  std::vector<double> seed_sum(n, 0.0);
  std::vector<std::pair<std::size_t, double>> snapped;
  for (const DepthSeed& s : seeds) {
    const long x = std::lround(s.position.u);
    const long y = std::lround(s.position.v);
    if (x < 0 || y < 0 || x >= w || y >= h || !std::isfinite(s.inverse_depth)) continue;
    const std::size_t i = static_cast<std::size_t>(y) * w + x;
    seed_weight[i] += 1.0;
    seed_sum[i] += s.inverse_depth;
    snapped.emplace_back(i, s.inverse_depth);
  }
  if (snapped.empty()) throw Error(ErrorCode::kNoSeeds, "no seed falls inside the guide image");

  const double inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma_c * cfg.sigma_c);
  const auto pixels = lum.pixels();
  std::vector<Edge> edges;
  edges.reserve(n * (cfg.neighborhood == 8 ? 4 : 2));
  auto add_edge = [&](int p, int q) {
    const double d = static_cast<double>(pixels[p]) - pixels[q];
    const double a = std::exp(-d * d * inv_two_sigma2);
    if (a >= cfg.min_affinity) edges.push_back({p, q, a});
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = y * w + x;
      if (x + 1 < w) add_edge(p, p + 1);
      if (y + 1 < h) add_edge(p, p + w);
      if (cfg.neighborhood == 8 && y + 1 < h) {
        if (x + 1 < w) add_edge(p, p + w + 1);
        if (x > 0) add_edge(p, p + w - 1);
      }
    }
  }

  DisjointSets sets(n);
  for (const Edge& e : edges) sets.unite(e.p, e.q);
  std::vector<std::uint8_t> seeded_root(n, 0);
  for (const auto& [i, value] : snapped) seeded_root[sets.find(static_cast<int>(i))] = 1;

  PropagationResult result;
  result.depth = InverseDepthMap(w, h);
  result.filled_from_nearest.assign(n, 0);

  // Unknowns are pixels whose component holds at least one seed.
  std::vector<int> unknown(n, -1);
  int count = 0;
  std::vector<std::uint8_t> counted_root(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int root = sets.find(static_cast<int>(i));
    if (seeded_root[root]) {
      unknown[i] = count++;
    } else {
      result.filled_from_nearest[i] = 1;
      if (!counted_root[root]) {
        counted_root[root] = 1;
        ++result.unseeded_components;
      }
    }
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(count) + 4 * edges.size());
  std::vector<double> diagonal(count, 0.0);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (unknown[i] < 0) continue;
    diagonal[unknown[i]] += cfg.c2 * seed_weight[i];
    rhs[unknown[i]] = cfg.c2 * seed_sum[i];
  }
  for (const Edge& e : edges) {
    const int a = unknown[e.p];
    const int b = unknown[e.q];
    if (a < 0 || b < 0) continue;
    const double v = cfg.c1 * e.affinity;
    diagonal[a] += v;
    diagonal[b] += v;
    triplets.emplace_back(a, b, -v);
    triplets.emplace_back(b, a, -v);
  }
  for (int k = 0; k < count; ++k) triplets.emplace_back(k, k, diagonal[k]);
  Eigen::SparseMatrix<double> A(count, count);
  A.setFromTriplets(triplets.begin(), triplets.end());

#ifdef BURSTDEPTH_HAVE_CHOLMOD
  Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>> solver;
#else
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
#endif
  solver.compute(A);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kConfiguration, "propagation system factorization failed");
  }
  Eigen::VectorXd x = solver.solve(rhs);
  const double rhs_norm = std::max(rhs.norm(), std::numeric_limits<double>::min());
  double residual = (A * x - rhs).norm() / rhs_norm;
  for (int refine = 0; refine < 3 && residual > cfg.tolerance; ++refine) {
    x += solver.solve(rhs - A * x);
    residual = (A * x - rhs).norm() / rhs_norm;
  }
  result.relative_residual = residual;

  for (std::size_t i = 0; i < n; ++i) {
    if (unknown[i] >= 0) {
      result.depth.data[i] = x[unknown[i]];
      continue;
    }
    const double px = static_cast<double>(i % w);
    const double py = static_cast<double>(i / w);
    double best = std::numeric_limits<double>::infinity();
    double value = 0.0;
    for (const auto& [s, v] : snapped) {
      const double dx = px - static_cast<double>(s % w);
      const double dy = py - static_cast<double>(s / w);
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        value = v;
      }
    }
    result.depth.data[i] = value;
  }
  return result;
}

FlowField initial_flow_for_frame(const InverseDepthMap& w, const TransformVector& T, double eps) {
  if (T.degenerate(eps)) {
    throw Error(ErrorCode::kDegenerateBaseline, "initial flow requested for a zero-baseline frame");
  }
  return flow_from_inverse_depth(w, T);
}

}  // namespace burstdepth
