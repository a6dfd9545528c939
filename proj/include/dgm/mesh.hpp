#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgm/rng.hpp"

namespace dgm {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Triangle mesh. After preprocess(): unit total surface area, area-weighted
// centroid at the origin, no degenerate faces, no unreferenced vertices.
struct Mesh {
  Eigen::MatrixXd vertices; // n x 3
  Eigen::MatrixXi faces;    // m x 3
  std::string shape_id;
  std::string label;
  std::string split;

  int num_vertices() const { return static_cast<int>(vertices.rows()); }
  int num_faces() const { return static_cast<int>(faces.rows()); }
};

struct ManifestRecord {
  std::string path;
  std::string shape_id;
  std::string label;
  std::string split;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::string dataset_name;
};

// Undirected vertex adjacency with edge lengths.
struct EdgeGraph {
  struct Neighbor {
    int vertex;
    double length;
  };
  std::vector<std::vector<Neighbor>> adjacency;

  int num_vertices() const { return static_cast<int>(adjacency.size()); }
};

enum class PerturbKind { Noise, Decimation, Partial };

const char* perturb_kind_name(PerturbKind kind);
PerturbKind perturb_kind_from_name(const std::string& name);

// --- io ---

// ASCII OFF or OBJ. Polygonal faces are fan-triangulated. Only positions and
// face indices are read.
Mesh load_mesh(const std::string& path);
void write_off(const Mesh& mesh, const std::string& path);

// JSON-lines manifest: one {path, shape_id, label, split} object per line.
// Relative mesh paths resolve against the manifest's directory.
Manifest load_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

// --- preprocessing ---

double total_surface_area(const Mesh& mesh);
Eigen::Vector3d area_weighted_centroid(const Mesh& mesh);

// Drops degenerate faces (area < 1e-14) and unreferenced vertices, centers
// the area-weighted centroid at the origin, scales to unit total area.
Mesh preprocess(const Mesh& mesh);

// Digest of the sorted face-index structure only; geometry-independent.
std::string topology_hash(const Mesh& mesh);

// --- connectivity ---

EdgeGraph build_edge_graph(const Mesh& mesh);
int count_connected_components(const EdgeGraph& graph);

// Dijkstra distances from a source vertex over the edge graph.
std::vector<double> dijkstra(const EdgeGraph& graph, int source);

// --- synthetic perturbations ---

// noise: i.i.d. Gaussian vertex displacement with std = severity.
// decimation: shortest-edge-first collapse removing ~severity of the faces.
// partial: random plane cut keeping ~severity of the vertices, then the
// largest connected component. Output is re-preprocessed in all modes.
Mesh perturb(const Mesh& mesh, PerturbKind kind, double severity, uint64_t rng_seed);

} // namespace dgm
