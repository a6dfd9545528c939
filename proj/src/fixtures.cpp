#include "dgm/fixtures.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <stdexcept>

namespace dgm {

namespace {

// ---- raw generators (unit-scale coordinates, preprocessed by callers) ----

Mesh raw_icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh mesh;
  mesh.vertices.resize(12, 3);
  mesh.vertices << -1, t, 0, 1, t, 0, -1, -t, 0, 1, -t, 0,
                    0, -1, t, 0, 1, t, 0, -1, -t, 0, 1, -t,
                    t, 0, -1, t, 0, 1, -t, 0, -1, -t, 0, 1;
  mesh.vertices.rowwise().normalize();
  mesh.faces.resize(20, 3);
  mesh.faces << 0, 11, 5, 0, 5, 1, 0, 1, 7, 0, 7, 10, 0, 10, 11,
                1, 5, 9, 5, 11, 4, 11, 10, 2, 10, 7, 6, 7, 1, 8,
                3, 9, 4, 3, 4, 2, 3, 2, 6, 3, 6, 8, 3, 8, 9,
                4, 9, 5, 2, 4, 11, 6, 2, 10, 8, 6, 7, 9, 8, 1;
  return mesh;
}

Mesh subdivide_on_sphere(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> midpoint;
  std::vector<Eigen::Vector3d> verts;
  verts.reserve(mesh.num_vertices() * 4);
  for (int v = 0; v < mesh.num_vertices(); ++v) verts.emplace_back(mesh.vertices.row(v));
  auto mid = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    Eigen::Vector3d m = (verts[a] + verts[b]).normalized();
    verts.push_back(m);
    int idx = static_cast<int>(verts.size()) - 1;
    midpoint.emplace(key, idx);
    return idx;
  };
  Mesh out;
  out.faces.resize(mesh.num_faces() * 4, 3);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    out.faces.row(4 * f + 0) << a, ab, ca;
    out.faces.row(4 * f + 1) << b, bc, ab;
    out.faces.row(4 * f + 2) << c, ca, bc;
    out.faces.row(4 * f + 3) << ab, bc, ca;
  }
  out.vertices.resize(static_cast<long>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) out.vertices.row(static_cast<long>(i)) = verts[i];
  return out;
}

Mesh raw_unit_sphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 7)
    throw std::invalid_argument("icosphere subdivisions must be in [0, 7]");
  Mesh mesh = raw_icosahedron();
  for (int s = 0; s < subdivisions; ++s) mesh = subdivide_on_sphere(mesh);
  return mesh;
}

Mesh raw_torus(int major_segments, int minor_segments, double tube_ratio) {
  if (major_segments < 3 || minor_segments < 3)
    throw std::invalid_argument("torus needs at least 3 segments per ring");
  if (tube_ratio <= 0.0 || tube_ratio >= 1.0)
    throw std::invalid_argument("torus tube ratio must be in (0, 1)");
  const double two_pi = 2.0 * std::numbers::pi;
  Mesh mesh;
  mesh.vertices.resize(major_segments * minor_segments, 3);
  for (int i = 0; i < major_segments; ++i) {
    double u = two_pi * i / major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      double v = two_pi * j / minor_segments;
      double w = 1.0 + tube_ratio * std::cos(v);
      mesh.vertices.row(i * minor_segments + j)
          << w * std::cos(u), w * std::sin(u), tube_ratio * std::sin(v);
    }
  }
  mesh.faces.resize(2 * major_segments * minor_segments, 3);
  int f = 0;
  for (int i = 0; i < major_segments; ++i) {
    int in = (i + 1) % major_segments;
    for (int j = 0; j < minor_segments; ++j) {
      int jn = (j + 1) % minor_segments;
      int a = i * minor_segments + j, b = in * minor_segments + j;
      int c = in * minor_segments + jn, d = i * minor_segments + jn;
      mesh.faces.row(f++) << a, b, c;
      mesh.faces.row(f++) << a, c, d;
    }
  }
  return mesh;
}

// Smooth band-limited scalar field: a fixed sum of random plane waves.
struct WaveField {
  std::vector<Eigen::Vector3d> wavevec;
  std::vector<double> phase;
  std::vector<double> weight;

  WaveField(int bands, double min_freq, double max_freq, RngStream& rng) {
    for (int b = 0; b < bands; ++b) {
      Eigen::Vector3d dir;
      do {
        dir << rng.next_normal(), rng.next_normal(), rng.next_normal();
      } while (dir.norm() < 1e-12);
      dir.normalize();
      double freq = min_freq + (max_freq - min_freq) * rng.next_real();
      wavevec.push_back(freq * dir);
      phase.push_back(2.0 * std::numbers::pi * rng.next_real());
      weight.push_back(1.0 / std::sqrt(static_cast<double>(bands)));
    }
  }

  double operator()(const Eigen::Vector3d& p) const {
    double f = 0.0;
    for (size_t b = 0; b < wavevec.size(); ++b)
      f += weight[b] * std::sin(wavevec[b].dot(p) + phase[b]);
    return f;
  }
};

Eigen::MatrixXd vertex_normals(const Mesh& mesh) {
  Eigen::MatrixXd normals = Eigen::MatrixXd::Zero(mesh.num_vertices(), 3);
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    Eigen::Vector3d e1 = mesh.vertices.row(b) - mesh.vertices.row(a);
    Eigen::Vector3d e2 = mesh.vertices.row(c) - mesh.vertices.row(a);
    Eigen::Vector3d n = e1.cross(e2); // area-weighted
    normals.row(a) += n;
    normals.row(b) += n;
    normals.row(c) += n;
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    double len = normals.row(v).norm();
    if (len > 1e-18) normals.row(v) /= len;
  }
  return normals;
}

// Displace every vertex along its normal by amplitude * field(position).
Mesh displace_along_normals(const Mesh& mesh, const WaveField& field, double amplitude) {
  Mesh out = mesh;
  if (amplitude == 0.0) return out;
  Eigen::MatrixXd normals = vertex_normals(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    Eigen::Vector3d p = mesh.vertices.row(v);
    out.vertices.row(v) += amplitude * field(p) * normals.row(v);
  }
  return out;
}

} // namespace

const char* fixture_kind_name(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::Icosphere: return "icosphere";
    case FixtureKind::Torus: return "torus";
    case FixtureKind::BumpySphere: return "bumpy_sphere";
    case FixtureKind::TwoClassBlobs: return "two_class_blobs";
    case FixtureKind::RegisteredPair: return "registered_pair";
  }
  return "unknown";
}

FixtureKind fixture_kind_from_name(const std::string& name) {
  if (name == "icosphere") return FixtureKind::Icosphere;
  if (name == "torus") return FixtureKind::Torus;
  if (name == "bumpy_sphere") return FixtureKind::BumpySphere;
  if (name == "two_class_blobs") return FixtureKind::TwoClassBlobs;
  if (name == "registered_pair") return FixtureKind::RegisteredPair;
  throw std::invalid_argument("unknown fixture kind: " + name);
}

Mesh make_icosphere(int subdivisions) {
  Mesh mesh = preprocess(raw_unit_sphere(subdivisions));
  mesh.shape_id = "icosphere" + std::to_string(subdivisions);
  return mesh;
}

Mesh make_torus(int major_segments, int minor_segments, double tube_ratio) {
  Mesh mesh = preprocess(raw_torus(major_segments, minor_segments, tube_ratio));
  mesh.shape_id = "torus" + std::to_string(major_segments) + "x" + std::to_string(minor_segments);
  return mesh;
}

Mesh make_bumpy_sphere(int subdivisions, double amplitude, int bands, uint64_t seed) {
  if (bands < 1) throw std::invalid_argument("bumpy sphere needs at least one band");
  Mesh sphere = raw_unit_sphere(subdivisions);
  RngStream rng(hash64("bumpy_sphere", seed));
  WaveField field(bands, 1.5, 4.0, rng);
  Mesh mesh = preprocess(displace_along_normals(sphere, field, amplitude));
  mesh.shape_id = "bumpy" + std::to_string(subdivisions) + "_" + hex64(seed);
  return mesh;
}

Mesh make_two_lobed_blob(int subdivisions) {
  Mesh sphere = raw_unit_sphere(subdivisions);
  // pinch the equator: radius 1.25 at the poles, 0.65 at the waist
  for (int v = 0; v < sphere.num_vertices(); ++v) {
    double z = sphere.vertices(v, 2);
    sphere.vertices.row(v) *= 0.65 + 0.6 * z * z;
  }
  Mesh mesh = preprocess(sphere);
  mesh.shape_id = "blob" + std::to_string(subdivisions);
  return mesh;
}

Mesh make_fixture(const FixtureSpec& spec) {
  switch (spec.kind) {
    case FixtureKind::Icosphere: return make_icosphere(spec.resolution);
    case FixtureKind::Torus: {
      int minor = std::max(3, (3 * spec.resolution) / 4);
      return make_torus(std::max(3, spec.resolution), minor);
    }
    case FixtureKind::BumpySphere:
      return make_bumpy_sphere(spec.resolution, spec.amplitude, 6, spec.deformation_seed);
    case FixtureKind::TwoClassBlobs: return make_two_lobed_blob(spec.resolution);
    case FixtureKind::RegisteredPair:
      return make_registered_pair(spec.resolution, spec.amplitude != 0.0, spec.deformation_seed)
          .source;
  }
  throw std::invalid_argument("unknown fixture kind");
}

Mesh permute_vertices(const Mesh& mesh, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != mesh.num_vertices())
    throw std::invalid_argument("permutation size mismatch");
  Mesh out = mesh;
  for (int v = 0; v < mesh.num_vertices(); ++v) out.vertices.row(perm[v]) = mesh.vertices.row(v);
  for (int f = 0; f < mesh.num_faces(); ++f)
    for (int j = 0; j < 3; ++j) out.faces(f, j) = perm[mesh.faces(f, j)];
  return out;
}

std::vector<int> random_permutation(int n, RngStream& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_index(static_cast<uint64_t>(i) + 1));
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

RegisteredPair make_pair_from_mesh(const Mesh& mesh, bool deform, uint64_t seed) {
  std::string stem = mesh.shape_id.empty() ? std::string("pair") : mesh.shape_id;
  RegisteredPair pair;
  pair.source = preprocess(mesh);
  pair.source.shape_id = stem + "_src";

  Mesh target_raw = mesh;
  if (deform) {
    RngStream field_rng(hash64("registered_pair_field", seed));
    WaveField field(4, 1.0, 2.5, field_rng);
    target_raw = displace_along_normals(mesh, field, 0.08);
  }
  Mesh target = preprocess(target_raw);

  RngStream perm_rng(hash64("registered_pair_perm", seed));
  pair.gt = random_permutation(target.num_vertices(), perm_rng);
  pair.target = permute_vertices(target, pair.gt);
  pair.target.shape_id = stem + "_tgt";
  return pair;
}

RegisteredPair make_registered_pair(int subdivisions, bool deform, uint64_t seed) {
  return make_pair_from_mesh(raw_unit_sphere(subdivisions), deform, seed);
}

Manifest make_retrieval_set(int classes, int per_class, double deformation_scale,
                            uint64_t rng_seed, const std::string& out_dir) {
  if (classes < 2 || per_class < 2)
    throw std::invalid_argument("retrieval set needs at least 2 classes and 2 members");
  std::filesystem::create_directories(out_dir);

  Manifest relative;
  for (int c = 0; c < classes; ++c) {
    // distinct base shape per class, cycling through the generator zoo
    Mesh base_raw;
    switch (c % 4) {
      case 0: base_raw = raw_unit_sphere(2); break;
      case 1: base_raw = raw_torus(16, 12, 0.35); break;
      case 2: {
        base_raw = raw_unit_sphere(2);
        for (int v = 0; v < base_raw.num_vertices(); ++v) {
          double z = base_raw.vertices(v, 2);
          base_raw.vertices.row(v) *= 0.65 + 0.6 * z * z;
        }
        break;
      }
      default: {
        base_raw = raw_unit_sphere(2);
        RngStream rng(hash64("retrieval_base", rng_seed, static_cast<uint64_t>(c)));
        WaveField field(6, 1.5, 4.0, rng);
        base_raw = displace_along_normals(base_raw, field, 0.25);
        break;
      }
    }

    for (int m = 0; m < per_class; ++m) {
      Mesh member_raw = base_raw;
      if (m > 0 && deformation_scale != 0.0) {
        RngStream rng(hash64("retrieval_member", rng_seed, static_cast<uint64_t>(c),
                             static_cast<uint64_t>(m)));
        WaveField field(4, 0.8, 2.0, rng);
        member_raw = displace_along_normals(member_raw, field, deformation_scale);
      }
      Mesh member = preprocess(member_raw);
      std::string shape_id = "c" + std::to_string(c) + "_m" + std::to_string(m);
      member.shape_id = shape_id;
      std::string filename = shape_id + ".off";
      write_off(member, (std::filesystem::path(out_dir) / filename).string());
      ManifestRecord rec;
      rec.path = filename;
      rec.shape_id = shape_id;
      rec.label = "class" + std::to_string(c);
      rec.split = (m < per_class / 2) ? "train" : "test";
      relative.records.push_back(rec);
    }
  }

  std::string manifest_path = (std::filesystem::path(out_dir) / "manifest.jsonl").string();
  write_manifest(relative, manifest_path);
  return load_manifest(manifest_path); // reload to resolve paths and validate
}

} // namespace dgm
