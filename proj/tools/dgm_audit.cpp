// Batch audit runner: extraction with caching, retrieval protocols,
// robustness sweeps, diagnostics, the protocol cascade, and timing, all
// driven by one reproducible configuration whose digest stamps every row.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgm/config.hpp"
#include "dgm/fixtures.hpp"
#include "dgm/mesh.hpp"
#include "dgm/pipeline.hpp"
#include "dgm/rng.hpp"

namespace {

using dgm::RunConfig;
using dgm::Table;

void report_written(const RunConfig& config, const std::string& stem) {
  namespace fs = std::filesystem;
  std::cout << "wrote " << (fs::path(config.output_dir) / (stem + ".csv")).string()
            << " (+ .md)\n";
}

void report_failures(const dgm::ExtractionRun& run) {
  for (const auto& se : run.shapes)
    if (!se.ok) std::cerr << "shape " << se.shape_id << " failed: " << se.error << "\n";
}

std::string map_cell(const dgm::RetrievalRun& run) {
  if (run.repeat_maps.size() > 1)
    return dgm::format_double(run.map_mean) + "±" + dgm::format_double(run.map_std);
  return dgm::format_double(run.result.mAP);
}

int cmd_extract(const dgm::Manifest& manifest, RunConfig config,
                const std::vector<std::string>& families, bool use_cache) {
  Table t;
  t.columns = {"shape_id", "family", "vertices", "channels", "source", "params_digest"};
  for (const auto& family : families) {
    config.family = family;
    config.validate();
    dgm::ExtractionRun run = dgm::extract_all(manifest, config, use_cache);
    report_failures(run);
    for (const auto& se : run.shapes) {
      if (!se.ok) {
        t.footnotes.push_back("skipped " + se.shape_id + " (" + family + "): " + se.error);
        continue;
      }
      t.rows.push_back({se.shape_id, family, std::to_string(se.descriptors.num_vertices()),
                        std::to_string(se.descriptors.num_channels()),
                        se.from_cache ? "cache" : "computed",
                        dgm::hex64(config.descriptor_digest())});
    }
    std::cout << family << ": " << run.computed << " computed, " << run.cache_hits
              << " cache hits, " << run.failed << " failed\n";
  }
  dgm::emit_table(t, config, "extract_summary");
  report_written(config, "extract_summary");
  return 0;
}

int cmd_retrieve(const dgm::Manifest& manifest, RunConfig config,
                 const std::vector<std::string>& families, bool use_cache,
                 const std::string& save_codebook_path) {
  Table t;
  t.columns = {"family", "aggregation", "policy",  "clusters", "shapes",
               "map",    "top1",        "map_std", "sets",     "skipped_queries"};
  for (const auto& family : families) {
    config.family = family;
    config.validate();
    dgm::ExtractionRun extraction = dgm::extract_all(manifest, config, use_cache);
    report_failures(extraction);
    dgm::RetrievalRun run = dgm::run_retrieval(extraction, config);
    t.rows.push_back({family, config.aggregation, config.policy,
                      std::to_string(config.clusters),
                      std::to_string(extraction.shapes.size() - run.failed_shapes.size()),
                      map_cell(run), dgm::format_double(run.result.top1),
                      dgm::format_double(run.map_std),
                      std::to_string(run.repeat_maps.size()),
                      std::to_string(run.result.skipped_queries.size())});
    for (const auto& id : run.failed_shapes)
      t.footnotes.push_back("skipped " + id + " (" + family + "): extraction failed");
    for (const auto& id : run.result.skipped_queries)
      t.footnotes.push_back("query " + id + " skipped: singleton class");
    std::cout << family << ": mAP " << map_cell(run) << ", top-1 "
              << dgm::format_double(run.result.top1) << "\n";

    if (!save_codebook_path.empty() && family == families.front() &&
        config.aggregation == "vlad") {
      std::vector<dgm::ShapeRows> rows;
      for (const auto& se : extraction.shapes)
        if (se.ok) rows.push_back({se.shape_id, &se.descriptors.rows});
      dgm::Codebook book = dgm::fit_codebook(rows, config.clusters, config.rng_seed);
      dgm::save_codebook(book, save_codebook_path);
      std::cout << "saved codebook to " << save_codebook_path << "\n";
    }
  }
  dgm::emit_table(t, config, "retrieval");
  report_written(config, "retrieval");
  return 0;
}

int cmd_robustness(const dgm::Manifest& manifest, RunConfig config,
                   const std::vector<std::string>& families, bool use_cache,
                   const std::string& kind_name, double severity) {
  dgm::PerturbKind kind = dgm::perturb_kind_from_name(kind_name);
  Table t;
  t.columns = {"family", "kind", "severity", "clean_map", "perturbed_map", "drop"};
  for (const auto& family : families) {
    config.family = family;
    config.validate();
    dgm::RobustnessRun run = dgm::run_robustness(manifest, config, kind, severity, use_cache);
    t.rows.push_back({family, kind_name, dgm::format_double(severity),
                      dgm::format_double(run.clean_map), dgm::format_double(run.perturbed_map),
                      dgm::format_double(run.drop)});
    for (const auto& id : run.clean.failed_shapes)
      t.footnotes.push_back("skipped " + id + " (" + family + ", clean): extraction failed");
    for (const auto& id : run.perturbed.failed_shapes)
      t.footnotes.push_back("skipped " + id + " (" + family + ", perturbed): extraction failed");
    std::cout << family << " under " << kind_name << " " << dgm::format_double(severity)
              << ": clean " << dgm::format_double(run.clean_map) << ", perturbed "
              << dgm::format_double(run.perturbed_map) << ", drop "
              << dgm::format_double(run.drop) << "\n";
  }
  dgm::emit_table(t, config, "robustness");
  report_written(config, "robustness");
  return 0;
}

int cmd_diagnose(const dgm::Manifest& manifest, RunConfig config, const std::string& name) {
  config.validate();
  const dgm::DiagnosticEntry& entry = dgm::find_diagnostic(name);
  Table t = entry.run(manifest, config);
  dgm::emit_table(t, config, entry.stem);
  report_written(config, entry.stem);
  return 0;
}

int cmd_cascade(const dgm::Manifest& manifest, RunConfig config, bool use_cache) {
  config.family = "dgm";
  config.validate();
  Table t = dgm::run_cascade(manifest, config, use_cache);
  dgm::emit_table(t, config, "protocol_cascade");
  report_written(config, "protocol_cascade");
  return 0;
}

int cmd_timing(const dgm::Manifest& manifest, RunConfig config,
               const std::vector<std::string>& families) {
  Table t;
  for (const auto& family : families) {
    config.family = family;
    config.validate();
    Table part = dgm::run_timing(manifest, config);
    if (t.columns.empty()) t.columns = part.columns;
    t.rows.insert(t.rows.end(), part.rows.begin(), part.rows.end());
    t.footnotes.insert(t.footnotes.end(), part.footnotes.begin(), part.footnotes.end());
  }
  dgm::emit_table(t, config, "timing");
  report_written(config, "timing");
  return 0;
}

int cmd_make_fixtures(const RunConfig& config, int classes, int members, double deformation) {
  dgm::Manifest manifest = dgm::make_retrieval_set(classes, members, deformation,
                                                   config.rng_seed, config.output_dir);
  std::cout << "wrote " << manifest.records.size() << " shapes and "
            << (std::filesystem::path(config.output_dir) / "manifest.jsonl").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free shape descriptor audit tool"};
  app.require_subcommand(1);
  app.footer("Descriptor caches live under $DGM_CACHE_ROOT (default: <out>/cache).");

  RunConfig config;
  std::vector<std::string> families{"dgm"};
  bool no_cache = false;

  app.add_option("--manifest", config.manifest_path, "dataset manifest (JSONL)");
  app.add_option("--out", config.output_dir, "output directory")->capture_default_str();
  app.add_option("--family", families,
                 "descriptor families (dgm, hks, sihks, wks, gmsd_hks, gmsd_wks, hks_cheb, "
                 "hks_pade, hks_mr_proxy)")
      ->delimiter(',')
      ->capture_default_str();
  app.add_option("--normalization", config.normalization,
                 "dgm channel normalization (nonlinear, linear_whiten, raw)")
      ->capture_default_str();
  app.add_flag("--tensor-channels", config.tensor_channels,
               "append covariance-eigenvalue channels to dgm");
  app.add_option("--field-mode", config.field_mode, "seed field input (heat, graph_geodesic)")
      ->capture_default_str();
  app.add_option("--scales", config.scales, "diffusion scales (comma separated)")
      ->delimiter(',');
  app.add_option("--steps", config.steps, "implicit heat steps per scale")
      ->capture_default_str();
  app.add_option("--seed-mode", config.seed_mode,
                 "seed selection (euclidean_random, euclidean_deterministic, "
                 "geodesic_deterministic)")
      ->capture_default_str();
  app.add_option("--seeds", config.seeds, "seed count k")->capture_default_str();
  app.add_option("--eigenpairs", config.eigenpairs, "eigenpairs for spectral families")
      ->capture_default_str();
  app.add_option("--times", config.times, "sample count (heat times / energy bins)")
      ->capture_default_str();
  app.add_option("--cheb-degree", config.cheb_degree, "polynomial degree for hks_cheb")
      ->capture_default_str();
  app.add_option("--probes", config.probes, "stochastic probes for hks_cheb / hks_pade")
      ->capture_default_str();
  app.add_option("--pade-steps", config.pade_steps, "implicit steps for hks_pade")
      ->capture_default_str();
  app.add_option("--landmarks", config.landmarks, "landmark count for hks_mr_proxy")
      ->capture_default_str();
  app.add_option("--aggregation", config.aggregation, "global code (pooled, vlad)")
      ->capture_default_str();
  app.add_option("--policy", config.policy,
                 "codebook policy (fit_all, fit_split, transfer, repeat)")
      ->capture_default_str();
  app.add_option("--clusters", config.clusters, "VLAD cluster count")->capture_default_str();
  app.add_option("--repeat-seeds", config.repeat_seeds,
                 "codebook seeds for the repeat policy (comma separated)")
      ->delimiter(',');
  app.add_option("--transfer-codebook", config.transfer_codebook,
                 "saved codebook for the transfer policy");
  app.add_flag("--use-projection", config.use_projection, "project global codes by PCA");
  app.add_option("--pca-dim", config.pca_dim, "projection dimension")->capture_default_str();
  app.add_option("--rng-seed", config.rng_seed, "global random seed")->capture_default_str();
  app.add_flag("--no-cache", no_cache, "bypass the descriptor cache");

  auto* extract = app.add_subcommand("extract", "compute and cache descriptors");
  extract->fallthrough();
  auto* retrieve = app.add_subcommand("retrieve", "leave-one-out retrieval table");
  retrieve->fallthrough();
  std::string save_codebook_path;
  retrieve->add_option("--save-codebook", save_codebook_path,
                       "write the fitted codebook (first family) to this path");
  auto* robustness = app.add_subcommand("robustness", "clean vs perturbed retrieval");
  robustness->fallthrough();
  std::string kind = "noise";
  double severity = 0.02;
  robustness->add_option("--kind", kind, "perturbation (noise, decimation, partial)")
      ->capture_default_str();
  robustness->add_option("--severity", severity, "perturbation severity")
      ->capture_default_str();
  auto* diagnose = app.add_subcommand("diagnose", "run one diagnostic");
  diagnose->fallthrough();
  std::string diagnostic_name;
  diagnose->add_option("--name", diagnostic_name, "diagnostic name")->required();
  auto* cascade = app.add_subcommand("audit-cascade", "protocol swap deltas around one run");
  cascade->fallthrough();
  auto* timing = app.add_subcommand("timing", "per-shape extraction wall time");
  timing->fallthrough();
  auto* fixtures = app.add_subcommand("make-fixtures", "generate a synthetic retrieval set");
  fixtures->fallthrough();
  int classes = 3, members = 4;
  double deformation = 0.05;
  fixtures->add_option("--classes", classes, "class count")->capture_default_str();
  fixtures->add_option("--members", members, "members per class")->capture_default_str();
  fixtures->add_option("--deformation", deformation, "within-class deformation scale")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fixtures->parsed()) return cmd_make_fixtures(config, classes, members, deformation);

    if (config.manifest_path.empty())
      throw std::invalid_argument("--manifest is required for this command");
    if (families.empty()) throw std::invalid_argument("at least one --family is required");
    dgm::Manifest manifest = dgm::load_manifest(config.manifest_path);
    const bool use_cache = !no_cache;

    if (extract->parsed()) return cmd_extract(manifest, config, families, use_cache);
    if (retrieve->parsed())
      return cmd_retrieve(manifest, config, families, use_cache, save_codebook_path);
    if (robustness->parsed())
      return cmd_robustness(manifest, config, families, use_cache, kind, severity);
    if (diagnose->parsed()) {
      config.family = families.front();
      return cmd_diagnose(manifest, config, diagnostic_name);
    }
    if (cascade->parsed()) return cmd_cascade(manifest, config, use_cache);
    if (timing->parsed()) return cmd_timing(manifest, config, families);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command selected\n";
  return 1;
}
