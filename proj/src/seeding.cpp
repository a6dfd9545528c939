#include "dgm/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dgm {

namespace {

// position-lexicographic comparison used as the distance tie-break
bool lex_less(const Eigen::MatrixXd& V, int a, int b) {
  for (int j = 0; j < 3; ++j) {
    if (V(a, j) < V(b, j)) return true;
    if (V(a, j) > V(b, j)) return false;
  }
  return a < b;
}

// argmax of dist with ties resolved toward lex-smaller positions
int argmax_tiebroken(const Eigen::MatrixXd& V, const std::vector<double>& dist) {
  int best = 0;
  for (int v = 1; v < static_cast<int>(dist.size()); ++v) {
    if (dist[v] > dist[best] || (dist[v] == dist[best] && lex_less(V, v, best))) best = v;
  }
  return best;
}

// coordinate mean accumulated in value-sorted order: identical for any
// vertex relabeling, unlike a straight index-order sum
Eigen::Vector3d order_independent_mean(const Eigen::MatrixXd& V) {
  Eigen::Vector3d mean;
  std::vector<double> column(V.rows());
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < V.rows(); ++i) column[i] = V(i, j);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double x : column) sum += x;
    mean[j] = sum / static_cast<double>(V.rows());
  }
  return mean;
}

int euclidean_first_seed(const Mesh& mesh) {
  Eigen::Vector3d c = order_independent_mean(mesh.vertices);
  std::vector<double> dist(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v)
    dist[v] = (mesh.vertices.row(v).transpose() - c).norm();
  return argmax_tiebroken(mesh.vertices, dist);
}

// Greedy farthest-point loop, shared by both metrics: `expand(seed, dist)`
// refreshes dist to min(dist, distance-to-seed).
template <typename Expand>
std::vector<int> fps_loop(const Mesh& mesh, int k, int first, Expand expand) {
  std::vector<int> seeds{first};
  std::vector<double> dist(mesh.num_vertices(), std::numeric_limits<double>::infinity());
  expand(first, dist);
  double prev_radius = std::numeric_limits<double>::infinity();
  while (static_cast<int>(seeds.size()) < k) {
    int next = argmax_tiebroken(mesh.vertices, dist);
    double radius = dist[next];
    // covering radii shrink as seeds accumulate; a violation means the
    // distance refresh is broken
    if (radius > prev_radius)
      throw std::logic_error("farthest-point radius increased during selection");
    prev_radius = radius;
    seeds.push_back(next);
    expand(next, dist);
  }
  return seeds;
}

void expand_euclidean(const Mesh& mesh, int seed, std::vector<double>& dist) {
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    double d = (mesh.vertices.row(v) - mesh.vertices.row(seed)).norm();
    if (d < dist[v]) dist[v] = d;
  }
}

} // namespace

const char* seed_mode_name(SeedMode mode) {
  switch (mode) {
    case SeedMode::EuclideanRandom: return "euclidean_random";
    case SeedMode::EuclideanDeterministic: return "euclidean_deterministic";
    case SeedMode::GeodesicDeterministic: return "geodesic_deterministic";
  }
  return "unknown";
}

SeedMode seed_mode_from_name(const std::string& name) {
  if (name == "euclidean_random") return SeedMode::EuclideanRandom;
  if (name == "euclidean_deterministic") return SeedMode::EuclideanDeterministic;
  if (name == "geodesic_deterministic") return SeedMode::GeodesicDeterministic;
  throw std::invalid_argument("unknown seed mode: " + name);
}

SeedSet fps_euclidean_deterministic(const Mesh& mesh, int k) {
  if (k < 1 || k > mesh.num_vertices())
    throw std::invalid_argument("seed count must be in [1, |V|]");
  SeedSet set;
  set.mode = SeedMode::EuclideanDeterministic;
  set.indices = fps_loop(mesh, k, euclidean_first_seed(mesh),
                         [&](int s, std::vector<double>& d) { expand_euclidean(mesh, s, d); });
  return set;
}

SeedSet fps_euclidean_random(const Mesh& mesh, int k, uint64_t rng_seed) {
  if (k < 1 || k > mesh.num_vertices())
    throw std::invalid_argument("seed count must be in [1, |V|]");
  RngStream rng(hash64("fps_euclidean_random", rng_seed));
  int first = static_cast<int>(rng.next_index(static_cast<uint64_t>(mesh.num_vertices())));
  SeedSet set;
  set.mode = SeedMode::EuclideanRandom;
  set.rng_seed = rng_seed;
  set.indices = fps_loop(mesh, k, first,
                         [&](int s, std::vector<double>& d) { expand_euclidean(mesh, s, d); });
  return set;
}

SeedSet fps_geodesic_deterministic(const Mesh& mesh, const EdgeGraph& graph, int k) {
  if (k < 1 || k > mesh.num_vertices())
    throw std::invalid_argument("seed count must be in [1, |V|]");
  int comps = count_connected_components(graph);
  if (comps != 1)
    throw std::invalid_argument("geodesic seeding needs a connected graph, found " +
                                std::to_string(comps) + " components");

  // double sweep: farthest from the euclidean start, then farthest from that
  int start = euclidean_first_seed(mesh);
  std::vector<double> d1 = dijkstra(graph, start);
  int a = argmax_tiebroken(mesh.vertices, d1);
  std::vector<double> d2 = dijkstra(graph, a);
  int b = argmax_tiebroken(mesh.vertices, d2);

  SeedSet set;
  set.mode = SeedMode::GeodesicDeterministic;
  set.indices = fps_loop(mesh, k, b, [&](int s, std::vector<double>& dist) {
    std::vector<double> d = dijkstra(graph, s);
    for (size_t v = 0; v < dist.size(); ++v)
      if (d[v] < dist[v]) dist[v] = d[v];
  });
  return set;
}

} // namespace dgm
