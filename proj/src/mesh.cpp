#include "dgm/mesh.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace dgm {

namespace {

constexpr double kDegenerateArea = 1e-14;

double face_area(const Eigen::MatrixXd& V, int a, int b, int c) {
  Eigen::Vector3d e1 = V.row(b) - V.row(a);
  Eigen::Vector3d e2 = V.row(c) - V.row(a);
  return 0.5 * e1.cross(e2).norm();
}

// strip comments and blank lines, return the next token-bearing line
bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) {
        blank = false;
        break;
      }
    if (!blank) return true;
  }
  return false;
}

void fan_triangulate(const std::vector<int>& poly, std::vector<Eigen::Vector3i>& out) {
  for (size_t i = 1; i + 1 < poly.size(); ++i)
    out.emplace_back(poly[0], poly[static_cast<int>(i)], poly[static_cast<int>(i) + 1]);
}

Mesh parse_off(std::istream& in, const std::string& path) {
  std::string line;
  if (!next_content_line(in, line)) throw MeshError(path + ": empty OFF file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  long nv = -1, nf = -1, ne = 0;
  if (magic != "OFF") throw MeshError(path + ": missing OFF header");
  if (!(header >> nv >> nf >> ne)) {
    if (!next_content_line(in, line)) throw MeshError(path + ": truncated OFF header");
    std::istringstream counts(line);
    if (!(counts >> nv >> nf >> ne)) throw MeshError(path + ": malformed OFF counts");
  }
  if (nv <= 0) throw MeshError(path + ": empty mesh");

  Mesh mesh;
  mesh.vertices.resize(nv, 3);
  long read = 0;
  while (read < nv) {
    if (!next_content_line(in, line)) throw MeshError(path + ": truncated vertex block");
    std::istringstream vs(line);
    double x, y, z;
    while (read < nv && (vs >> x >> y >> z)) {
      mesh.vertices.row(read) << x, y, z;
      ++read;
    }
  }

  std::vector<Eigen::Vector3i> tris;
  tris.reserve(nf);
  long fread = 0;
  while (fread < nf) {
    if (!next_content_line(in, line)) throw MeshError(path + ": truncated face block");
    std::istringstream fs(line);
    long arity;
    while (fread < nf && (fs >> arity)) {
      if (arity < 3) throw MeshError(path + ": face with fewer than 3 vertices");
      std::vector<int> poly(arity);
      for (long j = 0; j < arity; ++j) {
        if (!(fs >> poly[j])) throw MeshError(path + ": truncated face record");
        if (poly[j] < 0 || poly[j] >= nv) throw MeshError(path + ": face index out of range");
      }
      fan_triangulate(poly, tris);
      ++fread;
    }
  }
  if (tris.empty()) throw MeshError(path + ": empty mesh (no faces)");
  mesh.faces.resize(static_cast<long>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.faces.row(static_cast<long>(i)) = tris[i];
  return mesh;
}

Mesh parse_obj(std::istream& in, const std::string& path) {
  Mesh mesh;
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw MeshError(path + ": malformed vertex line");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        size_t slash = tok.find('/');
        if (slash != std::string::npos) tok.erase(slash);
        long idx = std::stol(tok);
        // OBJ is 1-based; negative indices count from the end
        long v = idx > 0 ? idx - 1 : static_cast<long>(verts.size()) + idx;
        if (v < 0 || v >= static_cast<long>(verts.size()))
          throw MeshError(path + ": face index out of range");
        poly.push_back(static_cast<int>(v));
      }
      if (poly.size() < 3) throw MeshError(path + ": face with fewer than 3 vertices");
      fan_triangulate(poly, tris);
    }
  }
  if (verts.empty() || tris.empty()) throw MeshError(path + ": empty mesh");
  mesh.vertices.resize(static_cast<long>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<long>(i)) = verts[i];
  mesh.faces.resize(static_cast<long>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i) mesh.faces.row(static_cast<long>(i)) = tris[i];
  return mesh;
}

std::string lowercase_ext(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// Keep faces listed in `keep`, drop vertices no face references, reindex.
// Surviving vertices keep their relative order so correspondences stay stable.
Mesh compact_mesh(const Mesh& mesh, const std::vector<int>& keep_faces) {
  std::vector<int> remap(mesh.num_vertices(), -1);
  for (int f : keep_faces)
    for (int j = 0; j < 3; ++j) remap[mesh.faces(f, j)] = 0;
  int next = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (remap[v] == 0) remap[v] = next++;
  Mesh out;
  out.shape_id = mesh.shape_id;
  out.label = mesh.label;
  out.split = mesh.split;
  out.vertices.resize(next, 3);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (remap[v] >= 0) out.vertices.row(remap[v]) = mesh.vertices.row(v);
  out.faces.resize(static_cast<long>(keep_faces.size()), 3);
  for (size_t i = 0; i < keep_faces.size(); ++i)
    for (int j = 0; j < 3; ++j) out.faces(static_cast<long>(i), j) = remap[mesh.faces(keep_faces[i], j)];
  return out;
}

} // namespace

const char* perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::Noise: return "noise";
    case PerturbKind::Decimation: return "decimation";
    case PerturbKind::Partial: return "partial";
  }
  return "unknown";
}

PerturbKind perturb_kind_from_name(const std::string& name) {
  if (name == "noise") return PerturbKind::Noise;
  if (name == "decimation") return PerturbKind::Decimation;
  if (name == "partial") return PerturbKind::Partial;
  throw std::invalid_argument("unknown perturbation kind: " + name);
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError(path + ": cannot open file");
  std::string ext = lowercase_ext(path);
  Mesh mesh;
  if (ext == ".obj") {
    mesh = parse_obj(in, path);
  } else {
    mesh = parse_off(in, path);
  }
  mesh.shape_id = std::filesystem::path(path).stem().string();
  return mesh;
}

void write_off(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError(path + ": cannot open for writing");
  out << "OFF\n" << mesh.num_vertices() << " " << mesh.num_faces() << " 0\n";
  out.precision(17);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    out << mesh.vertices(v, 0) << " " << mesh.vertices(v, 1) << " " << mesh.vertices(v, 2) << "\n";
  for (int f = 0; f < mesh.num_faces(); ++f)
    out << "3 " << mesh.faces(f, 0) << " " << mesh.faces(f, 1) << " " << mesh.faces(f, 2) << "\n";
  if (!out) throw MeshError(path + ": write failed");
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError(path + ": cannot open manifest");
  std::filesystem::path base = std::filesystem::path(path).parent_path();
  Manifest manifest;
  manifest.dataset_name = std::filesystem::path(path).stem().string();
  std::unordered_set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw MeshError(path + ":" + std::to_string(lineno) + ": bad manifest line: " + e.what());
    }
    ManifestRecord rec;
    rec.path = j.at("path").get<std::string>();
    rec.shape_id = j.at("shape_id").get<std::string>();
    rec.label = j.at("label").get<std::string>();
    rec.split = j.value("split", "all");
    if (!seen.insert(rec.shape_id).second)
      throw MeshError(path + ": duplicate shape_id " + rec.shape_id);
    std::filesystem::path p(rec.path);
    if (p.is_relative()) rec.path = (base / p).string();
    if (!std::filesystem::exists(rec.path))
      throw MeshError(path + ": mesh file not found: " + rec.path);
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError(path + ": cannot open for writing");
  for (const auto& rec : manifest.records) {
    nlohmann::json j{{"path", rec.path},
                     {"shape_id", rec.shape_id},
                     {"label", rec.label},
                     {"split", rec.split}};
    out << j.dump() << "\n";
  }
}

double total_surface_area(const Mesh& mesh) {
  double area = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f)
    area += face_area(mesh.vertices, mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2));
  return area;
}

Eigen::Vector3d area_weighted_centroid(const Mesh& mesh) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double area = 0.0;
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), d = mesh.faces(f, 2);
    double w = face_area(mesh.vertices, a, b, d);
    Eigen::Vector3d fc =
        (mesh.vertices.row(a) + mesh.vertices.row(b) + mesh.vertices.row(d)) / 3.0;
    c += w * fc;
    area += w;
  }
  if (area <= 0.0) throw MeshError("centroid of zero-area mesh");
  return c / area;
}

Mesh preprocess(const Mesh& mesh) {
  if (mesh.num_faces() == 0) throw MeshError("preprocess: mesh has no faces");
  std::vector<int> keep;
  keep.reserve(mesh.num_faces());
  for (int f = 0; f < mesh.num_faces(); ++f) {
    double a = face_area(mesh.vertices, mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2));
    if (a >= kDegenerateArea) keep.push_back(f);
  }
  if (keep.empty()) throw MeshError("preprocess: all faces degenerate");
  Mesh out = compact_mesh(mesh, keep);

  Eigen::Vector3d c = area_weighted_centroid(out);
  out.vertices.rowwise() -= c.transpose();
  double area = total_surface_area(out);
  out.vertices *= 1.0 / std::sqrt(area);
  return out;
}

std::string topology_hash(const Mesh& mesh) {
  // canonical face form: rotate the smallest index first, orientation kept
  std::vector<std::array<int, 3>> canon(mesh.num_faces());
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    if (b <= a && b <= c)
      canon[f] = {b, c, a};
    else if (c <= a && c <= b)
      canon[f] = {c, a, b};
    else
      canon[f] = {a, b, c};
  }
  std::sort(canon.begin(), canon.end());
  uint64_t h = hash64(static_cast<uint64_t>(mesh.num_vertices()));
  for (const auto& t : canon) h = fnv1a64_bytes(t.data(), sizeof(int) * 3, h);
  return hex64(h);
}

EdgeGraph build_edge_graph(const Mesh& mesh) {
  std::vector<std::set<int>> nbrs(mesh.num_vertices());
  for (int f = 0; f < mesh.num_faces(); ++f)
    for (int j = 0; j < 3; ++j) {
      int u = mesh.faces(f, j), v = mesh.faces(f, (j + 1) % 3);
      if (u == v) continue;
      nbrs[u].insert(v);
      nbrs[v].insert(u);
    }
  EdgeGraph graph;
  graph.adjacency.resize(mesh.num_vertices());
  for (int u = 0; u < mesh.num_vertices(); ++u) {
    graph.adjacency[u].reserve(nbrs[u].size());
    for (int v : nbrs[u]) {
      double len = (mesh.vertices.row(u) - mesh.vertices.row(v)).norm();
      if (len <= 0.0) len = 1e-300; // coincident vertices; keep lengths positive
      graph.adjacency[u].push_back({v, len});
    }
  }
  return graph;
}

int count_connected_components(const EdgeGraph& graph) {
  int n = graph.num_vertices();
  std::vector<char> seen(n, 0);
  int comps = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++comps;
    stack.assign(1, s);
    seen[s] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (const auto& nb : graph.adjacency[u])
        if (!seen[nb.vertex]) {
          seen[nb.vertex] = 1;
          stack.push_back(nb.vertex);
        }
    }
  }
  return comps;
}

std::vector<double> dijkstra(const EdgeGraph& graph, int source) {
  int n = graph.num_vertices();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  dist[source] = 0.0;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  heap.emplace(0.0, source);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[u]) continue;
    for (const auto& nb : graph.adjacency[u]) {
      double nd = d + nb.length;
      if (nd < dist[nb.vertex]) {
        dist[nb.vertex] = nd;
        heap.emplace(nd, nb.vertex);
      }
    }
  }
  return dist;
}

namespace {

Mesh perturb_noise(const Mesh& mesh, double severity, RngStream& rng) {
  Mesh out = mesh;
  if (severity > 0.0) {
    for (int v = 0; v < out.num_vertices(); ++v)
      for (int j = 0; j < 3; ++j) out.vertices(v, j) += severity * rng.next_normal();
  }
  return preprocess(out);
}

Mesh perturb_partial(const Mesh& mesh, double severity, RngStream& rng) {
  // random plane normal, uniform on the sphere
  Eigen::Vector3d normal;
  do {
    normal << rng.next_normal(), rng.next_normal(), rng.next_normal();
  } while (normal.norm() < 1e-12);
  normal.normalize();

  Eigen::VectorXd proj = mesh.vertices * normal;
  std::vector<double> sorted(proj.data(), proj.data() + proj.size());
  std::sort(sorted.begin(), sorted.end());
  int keep_count = std::max(1, static_cast<int>(std::llround(severity * mesh.num_vertices())));
  keep_count = std::min(keep_count, mesh.num_vertices());
  double threshold = sorted[keep_count - 1];

  std::vector<char> keep_vertex(mesh.num_vertices(), 0);
  for (int v = 0; v < mesh.num_vertices(); ++v) keep_vertex[v] = proj[v] <= threshold;

  std::vector<int> keep_faces;
  for (int f = 0; f < mesh.num_faces(); ++f)
    if (keep_vertex[mesh.faces(f, 0)] && keep_vertex[mesh.faces(f, 1)] &&
        keep_vertex[mesh.faces(f, 2)])
      keep_faces.push_back(f);
  if (keep_faces.empty()) throw MeshError("partial perturbation removed every face");

  Mesh cut = compact_mesh(mesh, keep_faces);

  // keep the largest connected component (by vertex count)
  EdgeGraph graph = build_edge_graph(cut);
  int n = cut.num_vertices();
  std::vector<int> comp(n, -1);
  int ncomp = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    stack.assign(1, s);
    comp[s] = ncomp;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (const auto& nb : graph.adjacency[u])
        if (comp[nb.vertex] < 0) {
          comp[nb.vertex] = ncomp;
          stack.push_back(nb.vertex);
        }
    }
    ++ncomp;
  }
  std::vector<int> comp_size(ncomp, 0);
  for (int v = 0; v < n; ++v) ++comp_size[comp[v]];
  int best = static_cast<int>(std::max_element(comp_size.begin(), comp_size.end()) -
                              comp_size.begin());
  std::vector<int> comp_faces;
  for (int f = 0; f < cut.num_faces(); ++f)
    if (comp[cut.faces(f, 0)] == best) comp_faces.push_back(f);
  if (comp_faces.empty()) throw MeshError("partial perturbation left an empty component");
  return preprocess(compact_mesh(cut, comp_faces));
}

struct CollapseMesh {
  Eigen::MatrixXd V;
  std::vector<std::array<int, 3>> F;     // live faces
  std::vector<char> face_alive;
  std::vector<std::set<int>> vertex_faces;
  std::vector<char> vertex_alive;

  explicit CollapseMesh(const Mesh& mesh)
      : V(mesh.vertices),
        face_alive(mesh.num_faces(), 1),
        vertex_faces(mesh.num_vertices()),
        vertex_alive(mesh.num_vertices(), 1) {
    F.resize(mesh.num_faces());
    for (int f = 0; f < mesh.num_faces(); ++f) {
      F[f] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
      for (int j = 0; j < 3; ++j) vertex_faces[F[f][j]].insert(f);
    }
  }

  int live_face_count() const {
    int c = 0;
    for (char a : face_alive) c += a;
    return c;
  }

  std::set<int> vertex_neighbors(int v) const {
    std::set<int> nbrs;
    for (int f : vertex_faces[v])
      for (int j = 0; j < 3; ++j)
        if (F[f][j] != v) nbrs.insert(F[f][j]);
    return nbrs;
  }

  static Eigen::Vector3d face_normal(const Eigen::MatrixXd& V, const std::array<int, 3>& f) {
    Eigen::Vector3d e1 = V.row(f[1]) - V.row(f[0]);
    Eigen::Vector3d e2 = V.row(f[2]) - V.row(f[0]);
    return e1.cross(e2);
  }

  // collapse edge (u,v) to the midpoint stored at u; v dies
  bool try_collapse(int u, int v) {
    if (!vertex_alive[u] || !vertex_alive[v]) return false;

    // link condition: shared neighbors must be exactly the opposite vertices
    // of the faces containing edge (u,v)
    std::set<int> shared_faces;
    for (int f : vertex_faces[u])
      if (vertex_faces[v].count(f)) shared_faces.insert(f);
    if (shared_faces.empty()) return false;
    std::set<int> opposite;
    for (int f : shared_faces)
      for (int j = 0; j < 3; ++j)
        if (F[f][j] != u && F[f][j] != v) opposite.insert(F[f][j]);
    std::set<int> nu = vertex_neighbors(u), nv = vertex_neighbors(v);
    std::vector<int> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(),
                          std::back_inserter(common));
    if (common.size() != opposite.size()) return false;

    Eigen::Vector3d mid = 0.5 * (V.row(u) + V.row(v));

    // reject collapses that flip a surviving face normal
    for (int w : {u, v}) {
      for (int f : vertex_faces[w]) {
        if (shared_faces.count(f)) continue;
        std::array<int, 3> nf = F[f];
        Eigen::Vector3d before = face_normal(V, nf);
        Eigen::Matrix<double, 1, 3> saved_u = V.row(u), saved_v = V.row(v);
        V.row(u) = mid.transpose();
        V.row(v) = mid.transpose();
        for (int j = 0; j < 3; ++j)
          if (nf[j] == v) nf[j] = u;
        Eigen::Vector3d after = face_normal(V, nf);
        V.row(u) = saved_u;
        V.row(v) = saved_v;
        if (before.norm() > 1e-18 && before.dot(after) <= 0.0) return false;
      }
    }

    // commit
    V.row(u) = mid.transpose();
    for (int f : shared_faces) {
      face_alive[f] = 0;
      for (int j = 0; j < 3; ++j) vertex_faces[F[f][j]].erase(f);
    }
    std::vector<int> vfaces(vertex_faces[v].begin(), vertex_faces[v].end());
    for (int f : vfaces) {
      vertex_faces[v].erase(f);
      for (int j = 0; j < 3; ++j)
        if (F[f][j] == v) F[f][j] = u;
      vertex_faces[u].insert(f);
    }
    vertex_alive[v] = 0;
    return true;
  }
};

Mesh perturb_decimation(const Mesh& mesh, double severity, RngStream& /*rng*/) {
  CollapseMesh cm(mesh);
  int target = std::max(1, static_cast<int>(std::llround((1.0 - severity) * mesh.num_faces())));

  using Entry = std::tuple<double, int, int>; // (length, u, v) with u < v
  auto cmp = [](const Entry& a, const Entry& b) { return a > b; };
  std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
  auto push_edges_of = [&](int v) {
    for (int w : cm.vertex_neighbors(v)) {
      int a = std::min(v, w), b = std::max(v, w);
      heap.emplace((cm.V.row(a) - cm.V.row(b)).norm(), a, b);
    }
  };
  EdgeGraph initial = build_edge_graph(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    for (const auto& nb : initial.adjacency[v])
      if (v < nb.vertex) heap.emplace(nb.length, v, nb.vertex);

  int live = cm.live_face_count();
  while (live > target && !heap.empty()) {
    auto [len, u, v] = heap.top();
    heap.pop();
    if (!cm.vertex_alive[u] || !cm.vertex_alive[v]) continue;
    double current = (cm.V.row(u) - cm.V.row(v)).norm();
    if (std::abs(current - len) > 1e-12 * (1.0 + current)) {
      heap.emplace(current, u, v); // stale entry, reinsert with fresh length
      continue;
    }
    if (!cm.try_collapse(u, v)) continue;
    live = cm.live_face_count();
    push_edges_of(u);
  }

  Mesh collapsed;
  collapsed.shape_id = mesh.shape_id;
  collapsed.label = mesh.label;
  collapsed.split = mesh.split;
  collapsed.vertices = cm.V;
  std::vector<Eigen::Vector3i> faces;
  for (size_t f = 0; f < cm.F.size(); ++f)
    if (cm.face_alive[f]) faces.emplace_back(cm.F[f][0], cm.F[f][1], cm.F[f][2]);
  if (faces.empty()) throw MeshError("decimation removed every face");
  collapsed.faces.resize(static_cast<long>(faces.size()), 3);
  for (size_t i = 0; i < faces.size(); ++i) collapsed.faces.row(static_cast<long>(i)) = faces[i];
  return preprocess(collapsed);
}

} // namespace

Mesh perturb(const Mesh& mesh, PerturbKind kind, double severity, uint64_t rng_seed) {
  if (kind != PerturbKind::Noise && (severity <= 0.0 || severity >= 1.0))
    throw std::invalid_argument("perturb: severity must be in (0,1)");
  if (kind == PerturbKind::Noise && severity < 0.0)
    throw std::invalid_argument("perturb: noise severity must be >= 0");
  RngStream rng(rng_seed);
  Mesh out;
  switch (kind) {
    case PerturbKind::Noise: out = perturb_noise(mesh, severity, rng); break;
    case PerturbKind::Decimation: out = perturb_decimation(mesh, severity, rng); break;
    case PerturbKind::Partial: out = perturb_partial(mesh, severity, rng); break;
  }
  out.shape_id = mesh.shape_id;
  out.label = mesh.label;
  out.split = mesh.split;
  return out;
}

} // namespace dgm
