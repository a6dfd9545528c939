#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgm/descriptors.hpp"

namespace dgm {

// One shape's aggregated code. `degenerate` marks the norm-guard case where
// an all-zero encoding was returned instead of dividing by zero.
struct GlobalCode {
  Eigen::VectorXd vector;
  std::string aggregation; // "pooled" | "vlad"
  std::string provenance;  // codebook / projection digests
  bool degenerate = false;
};

struct Codebook {
  Eigen::MatrixXd centers; // c x d
  std::string fit_meta;    // JSON: dataset, split rule, rng_seed, iterations

  int count() const { return static_cast<int>(centers.rows()); }
  int dim() const { return static_cast<int>(centers.cols()); }
};

struct Projection {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components; // dim x d, orthonormal columns

  int out_dim() const { return static_cast<int>(components.cols()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return components.transpose() * (x - mean);
  }
};

// [mean; std; max] per channel (population std), then global L2.
GlobalCode pool(const DescriptorMatrix& descriptors);

// K-means with k-means++ initialization under the given stream; at most 100
// Lloyd iterations, stopping when centers move less than 1e-7. The
// within-cluster sum of squares is checked to never increase.
Codebook fit_codebook(const Eigen::MatrixXd& samples, int c, uint64_t rng_seed);

// Same, but samples arrive per shape and each shape is first capped at 2000
// rows drawn through a stream keyed by (rng_seed, shape_id).
struct ShapeRows {
  std::string shape_id;
  const Eigen::MatrixXd* rows = nullptr;
};
Codebook fit_codebook(const std::vector<ShapeRows>& shapes, int c, uint64_t rng_seed);

// Hard assignment (ties toward the lowest center index), per-cluster residual
// sums, signed sqrt, per-cluster L2 (zero clusters stay zero), global L2.
GlobalCode vlad_encode(const DescriptorMatrix& descriptors, const Codebook& codebook);

// Mean-centered PCA; the target dimension is capped at the data rank.
Projection fit_projection(const std::vector<GlobalCode>& codes, int d);

uint64_t codebook_digest(const Codebook& codebook);
uint64_t projection_digest(const Projection& projection);

void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);

// ---- fitting protocols ----

enum class AggregationKind { Pooled, Vlad };
const char* aggregation_kind_name(AggregationKind kind);
AggregationKind aggregation_kind_from_name(const std::string& name);

enum class CodebookPolicy { FitAll, FitSplit, Transfer, Repeat };
const char* codebook_policy_name(CodebookPolicy policy);

struct ShapeDescriptors {
  std::string shape_id;
  std::string label;
  std::string split;
  DescriptorMatrix descriptors;
};

struct ProtocolOptions {
  AggregationKind aggregation = AggregationKind::Vlad;
  CodebookPolicy policy = CodebookPolicy::FitAll;
  int clusters = 16;
  uint64_t rng_seed = 13;
  std::vector<uint64_t> repeat_seeds;        // Repeat policy
  const Codebook* transfer_source = nullptr; // Transfer policy
  bool use_projection = false;
  int projection_dim = 96;
};

// Everything needed to reproduce one protocol run.
struct ProtocolRecord {
  std::string aggregation;
  std::string policy;
  std::vector<std::string> codebook_digests; // one per code set
  std::string projection_digest;             // empty when unused
  std::vector<uint64_t> rng_seeds;
};

// One set of codes per fitted codebook (a single set except under Repeat).
struct ProtocolResult {
  std::vector<std::vector<GlobalCode>> code_sets; // [set][shape]
  ProtocolRecord record;
};

ProtocolResult run_protocol(const std::vector<ShapeDescriptors>& shapes,
                            const ProtocolOptions& options);

} // namespace dgm
