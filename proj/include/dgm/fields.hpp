#pragma once

#include <string>
#include <vector>

#include "dgm/mesh.hpp"
#include "dgm/operators.hpp"
#include "dgm/seeding.hpp"

namespace dgm {

enum class FieldMode { Heat, GraphGeodesic };

const char* field_mode_name(FieldMode mode);
FieldMode field_mode_from_name(const std::string& name);

// Distance-like seed-conditioned fields, one n-vector per (scale, seed).
// phi[si] is an |V| x k matrix (column per seed, normalized so each column's
// minimum is 0); raw holds the signed pre-transform responses when retained.
struct FieldStack {
  std::vector<double> scales;
  int steps = 1;
  FieldMode mode = FieldMode::Heat;
  SeedSet seeds;
  std::vector<Eigen::MatrixXd> phi;
  std::vector<Eigen::MatrixXd> raw;
  bool raw_retained = false;
  int degenerate_fields = 0; // count of all-zero phi columns (warning flag)

  int num_scales() const { return static_cast<int>(scales.size()); }
  int num_seeds() const { return seeds.size(); }
  int num_vertices() const { return phi.empty() ? 0 : static_cast<int>(phi[0].rows()); }
};

// Implicit heat response. steps=1 solves (M + tL + eps I) u = e_seed; for
// m>1 the scale is split into h=t/m backward-Euler steps chained through M:
// u_1 = S(e_seed), u_{j+1} = S(M u_j) with S = (M + hL + eps I)^{-1}.
Eigen::VectorXd heat_response(const OperatorPair& ops, int seed, double t, int steps);
// Same recurrence against a prebuilt solver (factored at h = t/steps).
Eigen::VectorXd heat_response(const ShiftedSolver& solver, const Eigen::VectorXd& mass,
                              int seed, int steps);

// psi = -log(max(u,0)/(max u + 1e-12) + 1e-12), then phi = (psi - min psi)
// normalized by the 95th percentile of the shifted values. `degenerate` is
// set when u clips to all zeros (phi comes back all zero).
Eigen::VectorXd proxy_transform(const Eigen::VectorXd& u, bool* degenerate = nullptr);

// Spread statistic the proxy divides by: q95(psi - min psi). Exposed because
// its decay across scales is a reportable trend of its own.
double proxy_spread(const Eigen::VectorXd& u);

// Graph-geodesic alternative: psi = log(1 + d/t) from Dijkstra distances,
// then the same shift-and-percentile normalization.
Eigen::VectorXd graph_geodesic_field(const EdgeGraph& graph, int seed, double t);

// 95th-percentile with linear interpolation between order statistics.
double percentile95(const Eigen::VectorXd& values);

FieldStack build_field_stack(const OperatorPair& ops, const SeedSet& seeds,
                             const std::vector<double>& scales, int steps, bool retain_raw);
FieldStack build_field_stack_geodesic(const EdgeGraph& graph, const SeedSet& seeds,
                                      const std::vector<double>& scales);

struct RawResponseStats {
  double mean_negative_fraction = 0.0; // mean over (scale, seed) fields
  double max_negative_fraction = 0.0;  // worst single field
  double min_response = 0.0;
  double max_response = 0.0;
};

RawResponseStats raw_response_stats(const FieldStack& stack);

} // namespace dgm
