#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgm/mesh.hpp"

namespace dgm {

enum class SeedMode { EuclideanRandom, EuclideanDeterministic, GeodesicDeterministic };

const char* seed_mode_name(SeedMode mode);
SeedMode seed_mode_from_name(const std::string& name);

struct SeedSet {
  std::vector<int> indices; // selection order preserved
  SeedMode mode = SeedMode::EuclideanDeterministic;
  std::optional<uint64_t> rng_seed; // only the random mode carries one

  int size() const { return static_cast<int>(indices.size()); }
};

// Farthest-point seed selection. The deterministic variants resolve every
// distance tie by lexicographic (x,y,z) position and then lowest index, so
// relabeling vertices cannot change which physical points are chosen.

// First seed: farthest vertex from the coordinate mean (summed in sorted
// order so the mean itself ignores vertex numbering).
SeedSet fps_euclidean_deterministic(const Mesh& mesh, int k);

// First seed drawn uniformly from vertex indices; used as a variance probe.
SeedSet fps_euclidean_random(const Mesh& mesh, int k, uint64_t rng_seed);

// Graph-geodesic variant. Start = euclidean-deterministic first seed, then a
// double sweep (Dijkstra to the farthest vertex a, then from a to the
// farthest b) picks b as the first seed; remaining seeds by geodesic
// farthest-point iteration.
SeedSet fps_geodesic_deterministic(const Mesh& mesh, const EdgeGraph& graph, int k);

} // namespace dgm
