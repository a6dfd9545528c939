#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dgm/aggregation.hpp"

namespace dgm {

struct RankedHit {
  std::string shape_id;
  double similarity = 0.0;
  bool relevant = false;
};

struct RetrievalResult {
  std::vector<std::string> query_ids;             // valid (non-singleton) queries
  std::vector<std::vector<RankedHit>> rankings;   // per query, best first
  std::vector<double> average_precisions;
  std::vector<std::string> skipped_queries;       // singleton classes
  double mAP = 0.0;
  double top1 = 0.0;
};

// Leave-one-out cosine retrieval. AP = mean over relevant ranks r of
// (#relevant in top r)/r; similarity ties break by shape_id; classes with a
// single member are skipped as queries and listed in skipped_queries.
RetrievalResult retrieve(const std::vector<GlobalCode>& codes,
                         const std::vector<std::string>& labels,
                         const std::vector<std::string>& shape_ids);

// Same protocol on a precomputed distance matrix (ascending = better).
RetrievalResult retrieve_distances(const Eigen::MatrixXd& distances,
                                   const std::vector<std::string>& labels,
                                   const std::vector<std::string>& shape_ids);

double robustness_drop(const RetrievalResult& clean, const RetrievalResult& perturbed);

// Cosine distance matrix (1 - cosine similarity) for fusion.
Eigen::MatrixXd cosine_distance_matrix(const std::vector<GlobalCode>& codes);

// Min-max normalize each matrix over off-diagonal entries, convex-combine,
// then rank ascending.
RetrievalResult late_fuse(const std::vector<Eigen::MatrixXd>& distances,
                          const std::vector<double>& weights,
                          const std::vector<std::string>& labels,
                          const std::vector<std::string>& shape_ids);

// Channel concatenation after per-family per-channel z-scores.
DescriptorMatrix concat_local(const std::vector<const DescriptorMatrix*>& families);

struct TimingReport {
  double seconds_per_shape = 0.0;
  int shapes = 0;
  std::string environment; // compiler / thread note for comparability
};

// Wall-clock mean of `extract(shape index)` over a manifest-sized loop.
TimingReport timing_harness(int num_shapes, const std::function<void(int)>& extract);

} // namespace dgm
