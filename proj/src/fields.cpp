#include "dgm/fields.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dgm {

const char* field_mode_name(FieldMode mode) {
  switch (mode) {
    case FieldMode::Heat: return "heat";
    case FieldMode::GraphGeodesic: return "graph_geodesic";
  }
  return "unknown";
}

FieldMode field_mode_from_name(const std::string& name) {
  if (name == "heat") return FieldMode::Heat;
  if (name == "graph_geodesic") return FieldMode::GraphGeodesic;
  throw std::invalid_argument("unknown field mode: " + name);
}

double percentile95(const Eigen::VectorXd& values) {
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.size() == 1) return sorted[0];
  double h = 0.95 * static_cast<double>(sorted.size() - 1);
  size_t lo = static_cast<size_t>(h);
  double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Eigen::VectorXd heat_response(const ShiftedSolver& solver, const Eigen::VectorXd& mass,
                              int seed, int steps) {
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(mass.size());
  b[seed] = 1.0;
  Eigen::VectorXd u = solver.solve(b);
  for (int j = 1; j < steps; ++j) u = solver.solve(mass.cwiseProduct(u));
  return u;
}

Eigen::VectorXd heat_response(const OperatorPair& ops, int seed, double t, int steps) {
  if (seed < 0 || seed >= ops.size()) throw std::invalid_argument("seed index out of range");
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  ShiftedSolver solver(ops, t / steps);
  return heat_response(solver, ops.M, seed, steps);
}

namespace {

// shared tail of both field transforms: shift to min 0, divide by q95
Eigen::VectorXd shift_and_normalize(Eigen::VectorXd psi) {
  psi.array() -= psi.minCoeff();
  double q = percentile95(psi);
  return psi / (q + 1e-12);
}

Eigen::VectorXd clipped_log_response(const Eigen::VectorXd& u, bool* degenerate) {
  double umax = u.maxCoeff();
  bool all_zero = umax <= 0.0;
  if (degenerate) *degenerate = all_zero;
  Eigen::VectorXd psi(u.size());
  for (int i = 0; i < u.size(); ++i) {
    double pos = std::max(u[i], 0.0);
    psi[i] = -std::log(pos / (umax + 1e-12) + 1e-12);
  }
  return psi;
}

} // namespace

Eigen::VectorXd proxy_transform(const Eigen::VectorXd& u, bool* degenerate) {
  if (!u.allFinite()) throw std::invalid_argument("raw response must be finite");
  bool all_zero = false;
  Eigen::VectorXd psi = clipped_log_response(u, &all_zero);
  if (degenerate) *degenerate = all_zero;
  if (all_zero) return Eigen::VectorXd::Zero(u.size());
  return shift_and_normalize(std::move(psi));
}

double proxy_spread(const Eigen::VectorXd& u) {
  Eigen::VectorXd psi = clipped_log_response(u, nullptr);
  psi.array() -= psi.minCoeff();
  return percentile95(psi);
}

Eigen::VectorXd graph_geodesic_field(const EdgeGraph& graph, int seed, double t) {
  if (t <= 0.0) throw std::invalid_argument("scale must be positive");
  std::vector<double> d = dijkstra(graph, seed);
  Eigen::VectorXd psi(graph.num_vertices());
  for (int v = 0; v < graph.num_vertices(); ++v) {
    if (!std::isfinite(d[v]))
      throw std::invalid_argument("graph geodesic field needs a connected graph");
    psi[v] = std::log1p(d[v] / t);
  }
  return shift_and_normalize(std::move(psi));
}

FieldStack build_field_stack(const OperatorPair& ops, const SeedSet& seeds,
                             const std::vector<double>& scales, int steps, bool retain_raw) {
  if (seeds.size() == 0) throw std::invalid_argument("field stack needs at least one seed");
  FieldStack stack;
  stack.scales = scales;
  stack.steps = steps;
  stack.mode = FieldMode::Heat;
  stack.seeds = seeds;
  stack.raw_retained = retain_raw;
  const int n = ops.size();
  const int k = seeds.size();
  for (double t : scales) {
    ShiftedSolver solver(ops, t / steps); // one factorization reused across seeds
    Eigen::MatrixXd phi(n, k), raw;
    if (retain_raw) raw.resize(n, k);
    for (int s = 0; s < k; ++s) {
      Eigen::VectorXd u = heat_response(solver, ops.M, seeds.indices[s], steps);
      bool degenerate = false;
      phi.col(s) = proxy_transform(u, &degenerate);
      if (degenerate) ++stack.degenerate_fields;
      if (retain_raw) raw.col(s) = u;
    }
    stack.phi.push_back(std::move(phi));
    if (retain_raw) stack.raw.push_back(std::move(raw));
  }
  return stack;
}

FieldStack build_field_stack_geodesic(const EdgeGraph& graph, const SeedSet& seeds,
                                      const std::vector<double>& scales) {
  if (seeds.size() == 0) throw std::invalid_argument("field stack needs at least one seed");
  FieldStack stack;
  stack.scales = scales;
  stack.steps = 1;
  stack.mode = FieldMode::GraphGeodesic;
  stack.seeds = seeds;
  const int n = graph.num_vertices();
  const int k = seeds.size();
  // Dijkstra per seed is scale-independent; reuse distances across scales
  std::vector<std::vector<double>> dists(k);
  for (int s = 0; s < k; ++s) dists[s] = dijkstra(graph, seeds.indices[s]);
  for (double t : scales) {
    if (t <= 0.0) throw std::invalid_argument("scale must be positive");
    Eigen::MatrixXd phi(n, k);
    for (int s = 0; s < k; ++s) {
      Eigen::VectorXd psi(n);
      for (int v = 0; v < n; ++v) {
        if (!std::isfinite(dists[s][v]))
          throw std::invalid_argument("graph geodesic field needs a connected graph");
        psi[v] = std::log1p(dists[s][v] / t);
      }
      phi.col(s) = shift_and_normalize(std::move(psi));
    }
    stack.phi.push_back(std::move(phi));
  }
  return stack;
}

RawResponseStats raw_response_stats(const FieldStack& stack) {
  if (!stack.raw_retained || stack.raw.empty())
    throw std::logic_error("raw responses were not retained");
  RawResponseStats stats;
  stats.min_response = std::numeric_limits<double>::infinity();
  stats.max_response = -std::numeric_limits<double>::infinity();
  double frac_sum = 0.0;
  int fields = 0;
  for (const Eigen::MatrixXd& raw : stack.raw) {
    for (int s = 0; s < raw.cols(); ++s) {
      int neg = 0;
      for (int v = 0; v < raw.rows(); ++v) {
        double x = raw(v, s);
        neg += x < 0.0;
        stats.min_response = std::min(stats.min_response, x);
        stats.max_response = std::max(stats.max_response, x);
      }
      double frac = static_cast<double>(neg) / static_cast<double>(raw.rows());
      frac_sum += frac;
      stats.max_negative_fraction = std::max(stats.max_negative_fraction, frac);
      ++fields;
    }
  }
  stats.mean_negative_fraction = frac_sum / std::max(1, fields);
  return stats;
}

} // namespace dgm
