#pragma once

#include <string>
#include <vector>

#include "dgm/fields.hpp"
#include "dgm/mesh.hpp"
#include "dgm/operators.hpp"

namespace dgm {

// Per-vertex descriptor rows plus channel bookkeeping for audits.
struct DescriptorMatrix {
  Eigen::MatrixXd rows; // |V| x channels
  std::vector<std::string> channel_names;
  std::string family;
  std::string params; // canonical parameter record (JSON text)

  int num_vertices() const { return static_cast<int>(rows.rows()); }
  int num_channels() const { return static_cast<int>(rows.cols()); }
};

// Low-order statistics of one sample set. Population (divide-by-k) moments;
// skewness/kurtosis fall back to 0 when variance < 1e-24; kurtosis is excess.
struct MomentVector {
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double kurtosis = 0.0;
  double min = 0.0;
  double max = 0.0;
};

MomentVector moments(const Eigen::VectorXd& values);

enum class Normalization { Nonlinear, LinearWhiten, Raw };

const char* normalization_name(Normalization n);
Normalization normalization_from_name(const std::string& name);

// Per-vertex moment channels of the seed-conditioned fields: 6 moments per
// scale, scales in stack order. nonlinear = per-channel z-score then
// sign(x)*log(1+|x|); linear_whiten = per-shape PCA whitening (all
// components); raw = untouched moment values.
DescriptorMatrix dgm_local(const FieldStack& stack, Normalization normalization);

// Optional global branch: per scale, eigenvalues (ascending) of the mass-and-
// mean-field-weighted coordinate covariance, broadcast to every vertex.
DescriptorMatrix dgm_tensor_channels(const Mesh& mesh, const Eigen::VectorXd& vertex_mass,
                                     const FieldStack& stack);

// ---- spectral signatures ----

// log-spaced heat-kernel signature times, the classic [4 ln10/lambda_r,
// 4 ln10/lambda_2] bracket.
std::vector<double> hks_default_times(const EigenBasis& basis, int count);

DescriptorMatrix hks(const EigenBasis& basis, const std::vector<double>& times);
DescriptorMatrix hks(const EigenBasis& basis, int count = 24);

// Scale-invariant variant: sample t = 2^tau for tau in [1, 25] step 1/16,
// difference log HKS along tau, keep the first 6 DFT magnitudes.
DescriptorMatrix sihks(const EigenBasis& basis);

DescriptorMatrix wks(const EigenBasis& basis, int bins = 24);

// Six moment channels over a signature's scale axis plus one-ring summaries:
// [temporal mean, temporal var, temporal skew, ring mean of mean,
//  ring var of mean, ring mean of var].
DescriptorMatrix gmsd(const DescriptorMatrix& base, const EdgeGraph& graph);

// ---- heat-kernel approximation baselines on A = M^{-1} L ----

// Power-iteration estimate of the largest eigenvalue of M^{-1}L.
double spectral_upper_bound(const OperatorPair& ops);

// Times for the approximation baselines when no eigenbasis exists: three
// log-spaced decades upward from 4 ln10 / lambda_max.
std::vector<double> approx_heat_times(const OperatorPair& ops, int count);

// Chebyshev-filtered stochastic diagonal estimate of exp(-tA). Probe vectors
// are Rademacher under the rng stream, except probes == n which switches to
// the exhaustive canonical basis (making the ratio estimator exact).
DescriptorMatrix hks_cheb(const OperatorPair& ops, const std::vector<double>& times,
                          int degree, int probes, uint64_t rng_seed);

// Repeated backward-Euler surrogate (I + (t/steps)A)^{-steps} with the same
// probing scheme.
DescriptorMatrix hks_pade(const OperatorPair& ops, const std::vector<double>& times,
                          int steps, int probes, uint64_t rng_seed);

// Landmark coarsening proxy: FPS landmarks, coarse graph over adjacent
// geodesic Voronoi cells (affinity 1/distance), dense combinatorial-Laplacian
// signature on the coarse graph, blended back by the 3 nearest landmarks.
DescriptorMatrix hks_mr_proxy(const Mesh& mesh, const EdgeGraph& graph, int landmarks,
                              int num_times);

} // namespace dgm
