#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgm/mesh.hpp"

namespace dgm {

// Synthetic closed-surface generators used by tests and the CLI. Every
// generator is bitwise deterministic in its arguments and returns a
// preprocessed mesh (centered, unit surface area, connected).

enum class FixtureKind { Icosphere, Torus, BumpySphere, TwoClassBlobs, RegisteredPair };

const char* fixture_kind_name(FixtureKind kind);
FixtureKind fixture_kind_from_name(const std::string& name);

struct FixtureSpec {
  FixtureKind kind = FixtureKind::Icosphere;
  int resolution = 3;              // icosphere subdivisions, or torus major segments
  uint64_t deformation_seed = 13;  // drives bumpy/registered displacement fields
  double amplitude = 0.15;         // displacement strength where applicable
};

// A mesh plus a copy with known exact vertex correspondence:
// target.vertices.row(gt[i]) corresponds to source.vertices.row(i).
struct RegisteredPair {
  Mesh source;
  Mesh target;
  std::vector<int> gt;
};

Mesh make_icosphere(int subdivisions);
Mesh make_torus(int major_segments, int minor_segments, double tube_ratio = 0.35);
Mesh make_bumpy_sphere(int subdivisions, double amplitude, int bands, uint64_t seed);
// two-lobed blob: a sphere pinched at the equator into a peanut profile
Mesh make_two_lobed_blob(int subdivisions);

// Dispatch on FixtureSpec; RegisteredPair kind yields the pair's source mesh.
Mesh make_fixture(const FixtureSpec& spec);

// Vertex-permuted (and optionally smoothly deformed) copy with exact gt.
RegisteredPair make_registered_pair(int subdivisions, bool deform, uint64_t seed);

// Same construction on top of an existing mesh instead of the sphere.
RegisteredPair make_pair_from_mesh(const Mesh& mesh, bool deform, uint64_t seed);

// Relabel vertices: result.vertices.row(perm[i]) = mesh.vertices.row(i).
Mesh permute_vertices(const Mesh& mesh, const std::vector<int>& perm);
std::vector<int> random_permutation(int n, RngStream& rng);

// classes × per_class meshes: each class is a distinct base shape, members are
// near-isometric low-frequency radial deformations of it (scale 0 => identical
// members). Writes OFF files plus manifest.jsonl under out_dir and returns the
// loaded manifest with resolved paths.
Manifest make_retrieval_set(int classes, int per_class, double deformation_scale,
                            uint64_t rng_seed, const std::string& out_dir);

} // namespace dgm
