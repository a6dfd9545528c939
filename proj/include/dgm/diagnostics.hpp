#pragma once

#include <string>
#include <vector>

#include "dgm/aggregation.hpp"
#include "dgm/descriptors.hpp"
#include "dgm/fields.hpp"
#include "dgm/operators.hpp"
#include "dgm/seeding.hpp"

namespace dgm {

// ---- soft Voronoi sharpness ----

struct SoftVoronoiRow {
  double scale = 0.0;
  double entropy = 0.0; // vertex mean, normalized by log k into [0,1]
  double margin = 0.0;  // vertex mean of p_(1) - p_(2)
};

// p_s(x) proportional to exp(-phi_s(x)/tau) over the seed set.
std::vector<SoftVoronoiRow> soft_voronoi_stats(const FieldStack& stack, double tau = 0.01);

// ---- moment compression ----

struct MomentCompressionRow {
  double scale = 0.0;
  double pca6_explained = 0.0; // top-6 PCA share of sorted-response variance
  double ridge_r2 = 0.0;       // held-out, regularization 1e-3
  double ridge_r2_lo = 0.0;    // sensitivity sweep: 1e-5
  double ridge_r2_hi = 0.0;    // sensitivity sweep: 1e-1
};

// How much of the per-vertex sorted seed-response vector the 6 moment
// channels retain, on a vertex sample of the given size.
std::vector<MomentCompressionRow> moment_compression(const FieldStack& stack, int sample,
                                                     uint64_t rng_seed);

// ---- cross-shape alignment score ----

struct CsasReport {
  double direct_cosine = 0.0; // mean cosine of corresponding rows
  double r2 = 0.0;            // held-out R2 of the ridge map (1e-3)
  double r2_lo = 0.0;         // ridge 1e-5
  double r2_hi = 0.0;         // ridge 1e-1
  double relative_residual = 0.0;
  double gt_nn_accuracy = 0.0;
};

// Ridge-linear map from source rows to target rows on ground-truth
// corresponding vertices; correspondence[i] = target row of source row i.
CsasReport csas(const DescriptorMatrix& source, const DescriptorMatrix& target,
                const std::vector<int>& correspondence, uint64_t rng_seed);

// ---- spectral compressibility ----

// Mean over channels of the mass-weighted energy captured by the first k
// eigenfunctions, per k in k_list. Constant channels are skipped.
std::vector<double> spectral_compressibility(const DescriptorMatrix& descriptors,
                                             const EigenBasis& basis, const Eigen::VectorXd& M,
                                             const std::vector<int>& k_list);

// ---- 0D persistence ----

// Total finite 0D persistence of the sublevel filtration (edges enter at
// their max endpoint value, union-find with the elder rule; the global
// component is excluded).
double persistence0d(const Eigen::VectorXd& field, const EdgeGraph& graph);

// ---- symmetry side probe ----

struct SymmetrySideReport {
  double balanced_accuracy = 0.0;
  double roc_auc = 0.0;
  int held_out = 0;
};

// Can a logistic probe read the body side off the descriptor? Labels are the
// sign of the lateral coordinate in the mass-weighted PCA body frame (the
// non-principal axis with the most median-symmetric spread); a 5%-extent band
// around the median is dropped before the 70/30 split.
SymmetrySideReport symmetry_side_probe(const DescriptorMatrix& descriptors, const Mesh& mesh,
                                       uint64_t rng_seed);

// ---- nearest-neighbor correspondence ----

struct CorrespondenceReport {
  double mean_geodesic_error = 0.0; // normalized by the target diameter estimate
  double hit_at_10 = 0.0;
  double diameter = 0.0;
};

CorrespondenceReport nn_correspondence(const DescriptorMatrix& source,
                                       const DescriptorMatrix& target,
                                       const EdgeGraph& target_graph,
                                       const std::vector<int>& gt);

// ---- seed synchronization ----

// Push source seeds through the correspondence, order preserved.
SeedSet synchronized_seeds(const SeedSet& source_seeds, const std::vector<int>& gt);

// |a intersect b| / k, the overlap between two seed sets of equal size.
double seed_overlap(const SeedSet& a, const SeedSet& b);

// ---- permutation audit ----

struct PermutationAlignment {
  double local_relative_error = 0.0; // Frobenius, after index realignment
  double global_cosine = 0.0;        // pooled codes of both orderings
};

// permutation[i] = row of `permuted` corresponding to row i of `original`.
PermutationAlignment align_descriptors_after_permutation(const DescriptorMatrix& original,
                                                         const DescriptorMatrix& permuted,
                                                         const std::vector<int>& permutation);

} // namespace dgm
