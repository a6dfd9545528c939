#include "dgm/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dgm/diagnostics.hpp"
#include "dgm/fields.hpp"
#include "dgm/fixtures.hpp"
#include "dgm/operators.hpp"
#include "dgm/rng.hpp"
#include "dgm/seeding.hpp"

namespace fs = std::filesystem;

namespace dgm {

namespace {

// ---- formatting ----

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string md_escape(const std::string& field) {
  std::string out;
  for (char c : field) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

// ---- binary cache helpers ----

constexpr char kDescriptorMagic[8] = {'D', 'G', 'M', 'D', 'E', 'S', 'C', '1'};

void put_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void put_string(std::ofstream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint64_t get_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("truncated descriptor cache entry");
  return v;
}

std::string get_string(std::ifstream& in) {
  uint64_t len = get_u64(in);
  if (len > (1ull << 30)) throw std::runtime_error("corrupt descriptor cache entry");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("truncated descriptor cache entry");
  return s;
}

std::string sanitize_filename(const std::string& name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out;
}

CodebookPolicy policy_from_name(const std::string& name) {
  if (name == "fit_all") return CodebookPolicy::FitAll;
  if (name == "fit_split") return CodebookPolicy::FitSplit;
  if (name == "transfer") return CodebookPolicy::Transfer;
  if (name == "repeat") return CodebookPolicy::Repeat;
  throw std::invalid_argument("unknown codebook policy: " + name);
}

// ---- shared dgm construction ----

struct DgmPieces {
  SeedSet seeds;
  FieldStack stack;
  OperatorPair ops;
  EdgeGraph graph;
  bool ops_built = false;
  bool graph_built = false;
};

DgmPieces build_dgm_pieces(const Mesh& pre, const RunConfig& config, bool retain_raw) {
  DgmPieces p;
  const bool heat = config.field_mode == "heat";
  if (!heat || config.seed_mode == "geodesic_deterministic") {
    p.graph = build_edge_graph(pre);
    p.graph_built = true;
  }
  if (config.seed_mode == "euclidean_random")
    p.seeds = fps_euclidean_random(pre, config.seeds, config.rng_seed);
  else if (config.seed_mode == "euclidean_deterministic")
    p.seeds = fps_euclidean_deterministic(pre, config.seeds);
  else
    p.seeds = fps_geodesic_deterministic(pre, p.graph, config.seeds);
  if (heat || config.tensor_channels) {
    p.ops = assemble(pre);
    p.ops_built = true;
  }
  p.stack = heat ? build_field_stack(p.ops, p.seeds, config.scales, config.steps, retain_raw)
                 : build_field_stack_geodesic(p.graph, p.seeds, config.scales);
  return p;
}

// ---- extraction core shared by disk and in-memory entry points ----

ExtractionRun extract_with_provider(const std::vector<ManifestRecord>& records,
                                    const std::function<Mesh(int)>& mesh_at,
                                    const RunConfig& config, bool use_cache) {
  std::vector<int> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return records[a].shape_id < records[b].shape_id;
  });

  const std::string cache_root = resolve_cache_root(config);
  if (use_cache) fs::create_directories(cache_root);
  const uint64_t params_digest = config.descriptor_digest();

  ExtractionRun run;
  std::string first_error;
  for (int idx : order) {
    const ManifestRecord& rec = records[idx];
    ShapeExtraction se;
    se.shape_id = rec.shape_id;
    se.label = rec.label;
    se.split = rec.split;

    const std::string path = descriptor_cache_path(cache_root, rec.shape_id, config);
    if (use_cache && fs::exists(path)) {
      try {
        se.descriptors = load_descriptor(path, params_digest);
        se.ok = true;
        se.from_cache = true;
        ++run.cache_hits;
      } catch (const std::exception&) {
        se.ok = false; // unreadable entry: fall through and recompute
      }
    }
    if (!se.ok) {
      try {
        se.descriptors = extract_descriptor(mesh_at(idx), config);
        se.ok = true;
        ++run.computed;
        if (use_cache) save_descriptor(se.descriptors, params_digest, path);
      } catch (const std::exception& e) {
        se.ok = false;
        se.error = e.what();
        ++run.failed;
        if (first_error.empty()) first_error = rec.shape_id + ": " + se.error;
      }
    }
    run.shapes.push_back(std::move(se));
  }

  if (!records.empty() && run.failed == static_cast<int>(records.size()))
    throw std::runtime_error("descriptor extraction failed for every shape (first: " +
                             first_error + ")");
  return run;
}

Mesh load_record_mesh(const ManifestRecord& rec) {
  Mesh mesh = load_mesh(rec.path);
  mesh.shape_id = rec.shape_id;
  mesh.label = rec.label;
  mesh.split = rec.split;
  return mesh;
}

// Manifest shapes in sorted shape_id order with per-shape failure isolation.
std::vector<std::pair<ManifestRecord, Mesh>> load_sorted_shapes(
    const Manifest& manifest, std::vector<std::string>& skipped) {
  std::vector<const ManifestRecord*> recs;
  for (const auto& rec : manifest.records) recs.push_back(&rec);
  std::stable_sort(recs.begin(), recs.end(),
                   [](const ManifestRecord* a, const ManifestRecord* b) {
                     return a->shape_id < b->shape_id;
                   });
  std::vector<std::pair<ManifestRecord, Mesh>> out;
  for (const ManifestRecord* rec : recs) {
    try {
      out.emplace_back(*rec, load_record_mesh(*rec));
    } catch (const std::exception& e) {
      skipped.push_back(rec->shape_id + ": " + e.what());
    }
  }
  return out;
}

Mesh first_loadable_mesh(const Manifest& manifest, std::vector<std::string>& skipped) {
  std::vector<const ManifestRecord*> recs;
  for (const auto& rec : manifest.records) recs.push_back(&rec);
  std::stable_sort(recs.begin(), recs.end(),
                   [](const ManifestRecord* a, const ManifestRecord* b) {
                     return a->shape_id < b->shape_id;
                   });
  for (const ManifestRecord* rec : recs) {
    try {
      return load_record_mesh(*rec);
    } catch (const std::exception& e) {
      skipped.push_back(rec->shape_id + ": " + e.what());
    }
  }
  throw std::runtime_error("no manifest shape could be loaded");
}

void require_used(int used, const std::string& what) {
  if (used == 0) throw std::runtime_error(what + " failed on every shape");
}

// ---- diagnostics (registered below) ----

Table diag_soft_voronoi(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"scale", "mean_entropy", "mean_margin", "shapes"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  std::vector<double> entropy(config.scales.size(), 0.0), margin(config.scales.size(), 0.0);
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      DgmPieces p = build_dgm_pieces(preprocess(mesh), config, false);
      auto rows = soft_voronoi_stats(p.stack, 0.01);
      for (size_t i = 0; i < rows.size(); ++i) {
        entropy[i] += rows[i].entropy;
        margin[i] += rows[i].margin;
      }
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "soft voronoi diagnostic");
  for (size_t i = 0; i < config.scales.size(); ++i)
    t.rows.push_back({format_double(config.scales[i]), format_double(entropy[i] / used),
                      format_double(margin[i] / used), std::to_string(used)});
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_information_compression(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"scale",    "mean_entropy", "mean_margin", "pca6_explained",
               "ridge_r2", "ridge_r2_lo",  "ridge_r2_hi", "shapes"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  const size_t ns = config.scales.size();
  std::vector<double> entropy(ns, 0.0), margin(ns, 0.0), pca6(ns, 0.0), r2(ns, 0.0),
      r2lo(ns, 0.0), r2hi(ns, 0.0);
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      DgmPieces p = build_dgm_pieces(preprocess(mesh), config, false);
      auto sharp = soft_voronoi_stats(p.stack, 0.01);
      auto comp = moment_compression(p.stack, 500, hash64(config.rng_seed, rec.shape_id));
      for (size_t i = 0; i < ns; ++i) {
        entropy[i] += sharp[i].entropy;
        margin[i] += sharp[i].margin;
        pca6[i] += comp[i].pca6_explained;
        r2[i] += comp[i].ridge_r2;
        r2lo[i] += comp[i].ridge_r2_lo;
        r2hi[i] += comp[i].ridge_r2_hi;
      }
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "information compression diagnostic");
  for (size_t i = 0; i < ns; ++i)
    t.rows.push_back({format_double(config.scales[i]), format_double(entropy[i] / used),
                      format_double(margin[i] / used), format_double(pca6[i] / used),
                      format_double(r2[i] / used), format_double(r2lo[i] / used),
                      format_double(r2hi[i] / used), std::to_string(used)});
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_heat_response(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"shape_id",     "mean_negative_fraction", "max_negative_fraction",
               "min_response", "max_response",           "degenerate_fields"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  RunConfig heat_config = config;
  heat_config.field_mode = "heat"; // the overshoot audit is about heat responses
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      DgmPieces p = build_dgm_pieces(preprocess(mesh), heat_config, true);
      RawResponseStats stats = raw_response_stats(p.stack);
      t.rows.push_back({rec.shape_id, format_double(stats.mean_negative_fraction),
                        format_double(stats.max_negative_fraction),
                        format_double(stats.min_response), format_double(stats.max_response),
                        std::to_string(p.stack.degenerate_fields)});
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "heat response diagnostic");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_seed_permutation(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"family", "seed_mode", "local_relative_error", "global_cosine"};
  std::vector<std::string> skipped;
  Mesh mesh = first_loadable_mesh(manifest, skipped);
  RegisteredPair pair = make_pair_from_mesh(mesh, false, config.rng_seed);
  DescriptorMatrix original = extract_descriptor(pair.source, config);
  DescriptorMatrix permuted = extract_descriptor(pair.target, config);
  PermutationAlignment a = align_descriptors_after_permutation(original, permuted, pair.gt);
  t.rows.push_back({config.family, config.seed_mode, format_double(a.local_relative_error),
                    format_double(a.global_cosine)});
  t.footnotes.push_back("shape " + mesh.shape_id + ", identical geometry under a random relabeling");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_csas(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"family", "direct_cosine",     "map_r2",        "map_r2_lo",
               "map_r2_hi", "relative_residual", "gt_nn_accuracy"};
  std::vector<std::string> skipped;
  Mesh mesh = first_loadable_mesh(manifest, skipped);
  RegisteredPair pair = make_pair_from_mesh(mesh, true, config.rng_seed);
  DescriptorMatrix source = extract_descriptor(pair.source, config);
  DescriptorMatrix target = extract_descriptor(pair.target, config);
  CsasReport rep = csas(source, target, pair.gt, config.rng_seed);
  t.rows.push_back({config.family, format_double(rep.direct_cosine), format_double(rep.r2),
                    format_double(rep.r2_lo), format_double(rep.r2_hi),
                    format_double(rep.relative_residual), format_double(rep.gt_nn_accuracy)});
  t.footnotes.push_back("shape " + mesh.shape_id + ", smoothly deformed and relabeled copy");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_symmetry_side(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"shape_id", "family", "balanced_accuracy", "roc_auc", "held_out"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      Mesh pre = preprocess(mesh);
      DescriptorMatrix desc = extract_descriptor(pre, config);
      SymmetrySideReport rep =
          symmetry_side_probe(desc, pre, hash64(config.rng_seed, rec.shape_id));
      t.rows.push_back({rec.shape_id, config.family, format_double(rep.balanced_accuracy),
                        format_double(rep.roc_auc), std::to_string(rep.held_out)});
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "symmetry side diagnostic");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_spectral_compressibility(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"k", "mean_energy_captured", "shapes"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  const std::vector<int> want = {4, 8, 16, 32, 48};
  std::vector<double> sums;
  std::vector<int> k_used;
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      Mesh pre = preprocess(mesh);
      OperatorPair ops = assemble(pre);
      int r = std::min(config.eigenpairs, pre.num_vertices());
      EigenBasis basis = partial_eigs(ops, r);
      std::vector<int> k_list;
      for (int k : want)
        if (k <= basis.count()) k_list.push_back(k);
      if (k_list.empty()) k_list.push_back(basis.count());
      DescriptorMatrix desc = extract_descriptor(pre, config);
      std::vector<double> vals = spectral_compressibility(desc, basis, ops.M, k_list);
      if (used == 0) {
        k_used = k_list;
        sums.assign(vals.size(), 0.0);
      }
      if (k_list != k_used)
        throw std::runtime_error("eigenpair budget differs across shapes");
      for (size_t i = 0; i < vals.size(); ++i) sums[i] += vals[i];
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "spectral compressibility diagnostic");
  for (size_t i = 0; i < k_used.size(); ++i)
    t.rows.push_back(
        {std::to_string(k_used[i]), format_double(sums[i] / used), std::to_string(used)});
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_persistence(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"scale", "mean_total_persistence", "shapes"};
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  std::vector<double> totals(config.scales.size(), 0.0);
  int used = 0;
  for (auto& [rec, mesh] : shapes) {
    try {
      Mesh pre = preprocess(mesh);
      DgmPieces p = build_dgm_pieces(pre, config, false);
      const EdgeGraph& graph = p.graph_built ? p.graph : (p.graph = build_edge_graph(pre));
      for (int si = 0; si < p.stack.num_scales(); ++si) {
        Eigen::VectorXd field = p.stack.phi[si].rowwise().mean();
        totals[si] += persistence0d(field, graph);
      }
      ++used;
    } catch (const std::exception& e) {
      skipped.push_back(rec.shape_id + ": " + e.what());
    }
  }
  require_used(used, "persistence diagnostic");
  for (size_t i = 0; i < config.scales.size(); ++i)
    t.rows.push_back({format_double(config.scales[i]), format_double(totals[i] / used),
                      std::to_string(used)});
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_nn_correspondence(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"family", "mean_geodesic_error", "hit_at_10", "diameter"};
  std::vector<std::string> skipped;
  Mesh mesh = first_loadable_mesh(manifest, skipped);
  RegisteredPair pair = make_pair_from_mesh(mesh, true, config.rng_seed);
  DescriptorMatrix source = extract_descriptor(pair.source, config);
  DescriptorMatrix target = extract_descriptor(pair.target, config);
  EdgeGraph graph = build_edge_graph(pair.target);
  CorrespondenceReport rep = nn_correspondence(source, target, graph, pair.gt);
  t.rows.push_back({config.family, format_double(rep.mean_geodesic_error),
                    format_double(rep.hit_at_10), format_double(rep.diameter)});
  t.footnotes.push_back("shape " + mesh.shape_id + ", smoothly deformed and relabeled copy");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

Table diag_synchronized_seeds(const Manifest& manifest, const RunConfig& config) {
  Table t;
  t.columns = {"policy", "overlap"};
  std::vector<std::string> skipped;
  Mesh mesh = first_loadable_mesh(manifest, skipped);
  RegisteredPair pair = make_pair_from_mesh(mesh, true, config.rng_seed);
  const int k = std::min(config.seeds, pair.source.num_vertices());

  EdgeGraph source_graph = build_edge_graph(pair.source);
  EdgeGraph target_graph = build_edge_graph(pair.target);

  SeedSet src_euclid = fps_euclidean_deterministic(pair.source, k);
  SeedSet tgt_euclid = fps_euclidean_deterministic(pair.target, k);
  t.rows.push_back({"euclidean_deterministic",
                    format_double(seed_overlap(synchronized_seeds(src_euclid, pair.gt),
                                               tgt_euclid))});

  SeedSet src_geo = fps_geodesic_deterministic(pair.source, source_graph, k);
  SeedSet tgt_geo = fps_geodesic_deterministic(pair.target, target_graph, k);
  SeedSet synced = synchronized_seeds(src_geo, pair.gt);
  t.rows.push_back(
      {"geodesic_deterministic", format_double(seed_overlap(synced, tgt_geo))});
  t.rows.push_back({"synchronized", format_double(seed_overlap(synced, synced))});

  t.footnotes.push_back("shape " + mesh.shape_id +
                        ", smoothly deformed and relabeled copy; independent reseeding vs "
                        "pushing source seeds through the correspondence");
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

}  // namespace

// ---- formatting / table emission ----

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
  }
  return std::string(buf, res.ptr);
}

void append_digest_column(Table& table, const RunConfig& config) {
  if (!table.columns.empty() && table.columns.back() == "config_digest") return;
  const std::string digest = hex64(config.digest());
  table.columns.push_back("config_digest");
  for (auto& row : table.rows) row.push_back(digest);
}

void write_csv(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary); // binary: no platform newline surprises
  if (!out) throw std::runtime_error("cannot write " + path);
  for (size_t i = 0; i < table.columns.size(); ++i)
    out << (i ? "," : "") << csv_escape(table.columns[i]);
  out << "\n";
  for (const auto& row : table.rows) {
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
    out << "\n";
  }
  for (const auto& note : table.footnotes) out << "# " << note << "\n";
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_markdown(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "|";
  for (const auto& col : table.columns) out << " " << md_escape(col) << " |";
  out << "\n|";
  for (size_t i = 0; i < table.columns.size(); ++i) out << " --- |";
  out << "\n";
  for (const auto& row : table.rows) {
    out << "|";
    for (const auto& cell : row) out << " " << md_escape(cell) << " |";
    out << "\n";
  }
  if (!table.footnotes.empty()) out << "\n";
  for (const auto& note : table.footnotes) out << "_" << note << "_\n";
  if (!out) throw std::runtime_error("failed writing " + path);
}

void emit_table(const Table& table, const RunConfig& config, const std::string& stem) {
  Table stamped = table;
  append_digest_column(stamped, config);
  fs::create_directories(config.output_dir);
  write_csv(stamped, (fs::path(config.output_dir) / (stem + ".csv")).string());
  write_markdown(stamped, (fs::path(config.output_dir) / (stem + ".md")).string());
}

// ---- extraction ----

DescriptorMatrix extract_descriptor(const Mesh& mesh, const RunConfig& config) {
  Mesh pre = preprocess(mesh);
  const std::string& fam = config.family;
  const int n = pre.num_vertices();

  if (fam == "dgm") {
    DgmPieces p = build_dgm_pieces(pre, config, false);
    DescriptorMatrix local = dgm_local(p.stack, normalization_from_name(config.normalization));
    if (!config.tensor_channels) return local;
    DescriptorMatrix tensor = dgm_tensor_channels(pre, p.ops.M, p.stack);
    DescriptorMatrix out;
    out.rows.resize(n, local.num_channels() + tensor.num_channels());
    out.rows << local.rows, tensor.rows;
    out.channel_names = local.channel_names;
    out.channel_names.insert(out.channel_names.end(), tensor.channel_names.begin(),
                             tensor.channel_names.end());
    out.family = "dgm";
    out.params = config.descriptor_params_json();
    return out;
  }
  if (fam == "hks" || fam == "sihks" || fam == "wks" || fam == "gmsd_hks" ||
      fam == "gmsd_wks") {
    OperatorPair ops = assemble(pre);
    EigenBasis basis = partial_eigs(ops, std::min(config.eigenpairs, n));
    if (fam == "hks") return hks(basis, config.times);
    if (fam == "sihks") return sihks(basis);
    if (fam == "wks") return wks(basis, config.times);
    DescriptorMatrix base = (fam == "gmsd_hks") ? hks(basis, config.times)
                                                : wks(basis, config.times);
    return gmsd(base, build_edge_graph(pre));
  }
  if (fam == "hks_cheb" || fam == "hks_pade") {
    OperatorPair ops = assemble(pre);
    std::vector<double> times = approx_heat_times(ops, config.times);
    int probes = std::min(config.probes, n);
    if (fam == "hks_cheb")
      return hks_cheb(ops, times, config.cheb_degree, probes, config.rng_seed);
    return hks_pade(ops, times, config.pade_steps, probes, config.rng_seed);
  }
  if (fam == "hks_mr_proxy")
    return hks_mr_proxy(pre, build_edge_graph(pre), config.landmarks, config.times);
  throw std::invalid_argument("unknown descriptor family: " + fam);
}

std::string resolve_cache_root(const RunConfig& config) {
  if (const char* env = std::getenv("DGM_CACHE_ROOT"); env && *env) return env;
  return (fs::path(config.output_dir) / "cache").string();
}

std::string descriptor_cache_path(const std::string& cache_root, const std::string& shape_id,
                                  const RunConfig& config) {
  const std::string name = sanitize_filename(shape_id) + "__" + config.family + "__" +
                           hex64(config.descriptor_digest()) + ".desc";
  return (fs::path(cache_root) / name).string();
}

void save_descriptor(const DescriptorMatrix& descriptors, uint64_t params_digest,
                     const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(kDescriptorMagic, sizeof(kDescriptorMagic));
    put_u64(out, params_digest);
    put_u64(out, static_cast<uint64_t>(descriptors.rows.rows()));
    put_u64(out, static_cast<uint64_t>(descriptors.rows.cols()));
    put_string(out, descriptors.family);
    put_string(out, descriptors.params);
    put_u64(out, descriptors.channel_names.size());
    for (const auto& name : descriptors.channel_names) put_string(out, name);
    out.write(reinterpret_cast<const char*>(descriptors.rows.data()),
              static_cast<std::streamsize>(sizeof(double) * descriptors.rows.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

DescriptorMatrix load_descriptor(const std::string& path, uint64_t expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kDescriptorMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path + ": not a descriptor cache entry");
  if (get_u64(in) != expected_digest)
    throw std::runtime_error(path + ": cache entry was built under different settings");
  const auto rows = static_cast<int64_t>(get_u64(in));
  const auto cols = static_cast<int64_t>(get_u64(in));
  if (rows < 0 || cols < 0 || rows > (1 << 26) || cols > (1 << 20))
    throw std::runtime_error(path + ": corrupt descriptor cache entry");
  DescriptorMatrix desc;
  desc.family = get_string(in);
  desc.params = get_string(in);
  const uint64_t names = get_u64(in);
  if (names != static_cast<uint64_t>(cols))
    throw std::runtime_error(path + ": channel name count mismatch");
  desc.channel_names.reserve(names);
  for (uint64_t i = 0; i < names; ++i) desc.channel_names.push_back(get_string(in));
  desc.rows.resize(rows, cols);
  in.read(reinterpret_cast<char*>(desc.rows.data()),
          static_cast<std::streamsize>(sizeof(double) * desc.rows.size()));
  if (!in) throw std::runtime_error(path + ": truncated descriptor cache entry");
  return desc;
}

ExtractionRun extract_all(const Manifest& manifest, const RunConfig& config, bool use_cache) {
  return extract_with_provider(
      manifest.records, [&](int i) { return load_record_mesh(manifest.records[i]); }, config,
      use_cache);
}

ExtractionRun extract_shapes(const std::vector<Mesh>& meshes,
                             const std::vector<ManifestRecord>& records,
                             const RunConfig& config, bool use_cache) {
  if (meshes.size() != records.size())
    throw std::invalid_argument("one manifest record per mesh is required");
  return extract_with_provider(
      records,
      [&](int i) {
        Mesh m = meshes[i];
        m.shape_id = records[i].shape_id;
        m.label = records[i].label;
        m.split = records[i].split;
        return m;
      },
      config, use_cache);
}

// ---- retrieval ----

RetrievalRun run_retrieval(const ExtractionRun& extraction, const RunConfig& config) {
  RetrievalRun run;
  std::vector<ShapeDescriptors> shapes;
  for (const auto& se : extraction.shapes) {
    if (se.ok)
      shapes.push_back({se.shape_id, se.label, se.split, se.descriptors});
    else
      run.failed_shapes.push_back(se.shape_id);
  }
  if (shapes.size() < 2)
    throw std::runtime_error("retrieval needs at least 2 successfully extracted shapes");

  ProtocolOptions opt;
  opt.aggregation = aggregation_kind_from_name(config.aggregation);
  opt.policy = policy_from_name(config.policy);
  opt.clusters = config.clusters;
  opt.rng_seed = config.rng_seed;
  opt.repeat_seeds = config.repeat_seeds;
  opt.use_projection = config.use_projection;
  opt.projection_dim = config.pca_dim;
  Codebook transfer;
  if (opt.policy == CodebookPolicy::Transfer && !config.transfer_codebook.empty()) {
    transfer = load_codebook(config.transfer_codebook);
    opt.transfer_source = &transfer;
  }

  ProtocolResult protocol = run_protocol(shapes, opt);
  std::vector<std::string> labels, ids;
  for (const auto& s : shapes) {
    labels.push_back(s.label);
    ids.push_back(s.shape_id);
  }
  for (size_t set = 0; set < protocol.code_sets.size(); ++set) {
    RetrievalResult r = retrieve(protocol.code_sets[set], labels, ids);
    if (set == 0) run.result = r;
    run.repeat_maps.push_back(r.mAP);
  }
  run.record = protocol.record;

  double sum = 0.0;
  for (double m : run.repeat_maps) sum += m;
  run.map_mean = sum / static_cast<double>(run.repeat_maps.size());
  double var = 0.0;
  for (double m : run.repeat_maps) var += (m - run.map_mean) * (m - run.map_mean);
  run.map_std = std::sqrt(var / static_cast<double>(run.repeat_maps.size()));
  return run;
}

RetrievalRun run_retrieval(const Manifest& manifest, const RunConfig& config, bool use_cache) {
  return run_retrieval(extract_all(manifest, config, use_cache), config);
}

// ---- robustness ----

RobustnessRun run_robustness(const Manifest& manifest, const RunConfig& config,
                             PerturbKind kind, double severity, bool use_cache) {
  RobustnessRun rb;
  rb.clean = run_retrieval(manifest, config, use_cache);

  const std::string kind_name = perturb_kind_name(kind);
  const std::string suffix = "__" + kind_name + format_double(severity);
  std::vector<ManifestRecord> records;
  for (const auto& rec : manifest.records) {
    ManifestRecord prec = rec;
    prec.shape_id = rec.shape_id + suffix;
    records.push_back(prec);
  }
  ExtractionRun perturbed = extract_with_provider(
      records,
      [&](int i) {
        const ManifestRecord& rec = manifest.records[i];
        Mesh m = load_record_mesh(rec);
        uint64_t seed =
            hash64("perturb", config.rng_seed, rec.shape_id, kind_name, format_double(severity));
        Mesh p = perturb(m, kind, severity, seed);
        p.shape_id = records[i].shape_id;
        return p;
      },
      config, use_cache);
  rb.perturbed = run_retrieval(perturbed, config);

  rb.clean_map = rb.clean.result.mAP;
  rb.perturbed_map = rb.perturbed.result.mAP;
  rb.drop = robustness_drop(rb.clean.result, rb.perturbed.result);
  return rb;
}

// ---- diagnostics registry ----

const std::vector<DiagnosticEntry>& diagnostic_registry() {
  static const std::vector<DiagnosticEntry> entries = {
      {"soft_voronoi", "soft_voronoi", diag_soft_voronoi},
      {"information_compression", "information_compression", diag_information_compression},
      {"heat_response", "heat_response", diag_heat_response},
      {"seed_permutation", "seed_permutation", diag_seed_permutation},
      {"csas", "csas_extended", diag_csas},
      {"symmetry_side", "symmetry_side", diag_symmetry_side},
      {"spectral_compressibility", "spectral_compressibility", diag_spectral_compressibility},
      {"persistence", "persistence", diag_persistence},
      {"nn_correspondence", "nn_correspondence", diag_nn_correspondence},
      {"synchronized_seeds", "synchronized_seeds", diag_synchronized_seeds},
  };
  return entries;
}

const DiagnosticEntry& find_diagnostic(const std::string& name) {
  for (const auto& entry : diagnostic_registry())
    if (entry.name == name) return entry;
  std::string names;
  for (const auto& entry : diagnostic_registry())
    names += (names.empty() ? "" : ", ") + entry.name;
  throw std::invalid_argument("unknown diagnostic '" + name + "' (available: " + names + ")");
}

// ---- cascade ----

Table run_cascade(const Manifest& manifest, const RunConfig& config, bool use_cache) {
  RunConfig base = config;
  base.family = "dgm";
  base.aggregation = "vlad";
  base.policy = "fit_all";

  RunConfig pooled = base;
  pooled.aggregation = "pooled";
  RunConfig geodesic = base;
  geodesic.field_mode = (base.field_mode == "heat") ? "graph_geodesic" : "heat";
  RunConfig multistep = base;
  multistep.steps = (base.steps == 1) ? 4 : 1;
  RunConfig repeat = base;
  repeat.policy = "repeat";
  repeat.repeat_seeds =
      config.repeat_seeds.empty() ? std::vector<uint64_t>{13, 17, 29, 41, 53} : config.repeat_seeds;

  auto name_of = [](const RunConfig& c) {
    std::string n = c.family + "_" + c.field_mode + "_steps" + std::to_string(c.steps) + "_" +
                    c.aggregation;
    if (c.policy != "fit_all") n += "_" + c.policy;
    return n;
  };

  const double map_base = run_retrieval(manifest, base, use_cache).result.mAP;
  const double map_pooled = run_retrieval(manifest, pooled, use_cache).result.mAP;
  const double map_geodesic = run_retrieval(manifest, geodesic, use_cache).result.mAP;
  const double map_multistep = run_retrieval(manifest, multistep, use_cache).result.mAP;
  const RetrievalRun rep = run_retrieval(manifest, repeat, use_cache);

  Table t;
  t.columns = {"effect", "run_a", "run_b", "value"};
  t.rows.push_back({"aggregation_effect", name_of(base), name_of(pooled),
                    format_double(map_base - map_pooled)});
  t.rows.push_back({"input_signal_effect", name_of(base), name_of(geodesic),
                    format_double(map_base - map_geodesic)});
  t.rows.push_back({"heat_step_effect", name_of(multistep), name_of(base),
                    format_double(map_multistep - map_base)});
  t.rows.push_back({"codebook_repeat_std", name_of(repeat), "", format_double(rep.map_std)});
  if (!config.transfer_codebook.empty()) {
    RunConfig transfer = base;
    transfer.policy = "transfer";
    transfer.transfer_codebook = config.transfer_codebook;
    const double map_transfer = run_retrieval(manifest, transfer, use_cache).result.mAP;
    t.rows.push_back({"transfer_drop", name_of(transfer), name_of(base),
                      format_double(map_transfer - map_base)});
  }
  t.footnotes.push_back("value = mAP(run_a) - mAP(run_b); codebook_repeat_std is the mAP spread "
                        "over refit seeds");
  return t;
}

// ---- timing ----

Table run_timing(const Manifest& manifest, const RunConfig& config) {
  std::vector<std::string> skipped;
  auto shapes = load_sorted_shapes(manifest, skipped);
  if (shapes.empty()) throw std::runtime_error("no manifest shape could be loaded");

  TimingReport rep = timing_harness(static_cast<int>(shapes.size()), [&](int i) {
    (void)extract_descriptor(shapes[static_cast<size_t>(i)].second, config);
  });

  Table t;
  t.columns = {"family", "shapes", "seconds_per_shape", "environment"};
  t.rows.push_back({config.family, std::to_string(rep.shapes),
                    format_double(rep.seconds_per_shape), rep.environment});
  for (const auto& s : skipped) t.footnotes.push_back("skipped " + s);
  return t;
}

}  // namespace dgm
