#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dgm {

// Everything a run needs to be reproduced. The canonical JSON form (sorted
// keys, fixed float formatting) is hashed into a digest that stamps every
// output row, so a CSV line can always be traced back to the exact settings
// that produced it.
struct RunConfig {
  std::string manifest_path;
  std::string output_dir = "out";

  // descriptor family: dgm | hks | sihks | wks | gmsd_hks | gmsd_wks |
  //                    hks_cheb | hks_pade | hks_mr_proxy
  std::string family = "dgm";
  std::string normalization = "nonlinear";  // dgm channel normalization
  bool tensor_channels = false;             // append covariance-eigenvalue channels

  // seed-conditioned field settings (dgm)
  std::string field_mode = "heat";  // heat | graph_geodesic
  std::vector<double> scales{0.01, 0.03, 0.07, 0.15};
  int steps = 1;
  std::string seed_mode = "geodesic_deterministic";
  int seeds = 24;

  // spectral settings (hks/sihks/wks and their gmsd variants)
  int eigenpairs = 48;
  int times = 24;  // heat sample count for hks, energy bin count for wks

  // solver-free surrogate settings
  int cheb_degree = 24;
  int probes = 8;
  int pade_steps = 4;
  int landmarks = 384;

  // aggregation
  std::string aggregation = "vlad";  // pooled | vlad
  std::string policy = "fit_all";    // fit_all | fit_split | transfer | repeat
  int clusters = 16;
  int pca_dim = 96;
  bool use_projection = false;
  std::vector<uint64_t> repeat_seeds;
  std::string transfer_codebook;  // path to a saved codebook, transfer policy only

  std::string metric = "cosine";
  uint64_t rng_seed = 13;

  // Sorted-key JSON with %.17g numbers; equal configs produce equal bytes.
  std::string canonical_json() const;
  uint64_t digest() const;

  // The subset of settings that determine a single shape's descriptor rows.
  // Aggregation, metric, and output paths do not belong here; the rng seed
  // enters only when some stage of the family actually draws random numbers.
  std::string descriptor_params_json() const;
  uint64_t descriptor_digest() const;

  void validate() const;  // throws std::invalid_argument on bad settings
};

// Families the extraction pipeline knows how to build.
const std::vector<std::string>& known_families();

}  // namespace dgm
