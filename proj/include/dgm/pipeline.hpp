#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dgm/aggregation.hpp"
#include "dgm/config.hpp"
#include "dgm/descriptors.hpp"
#include "dgm/evaluation.hpp"
#include "dgm/mesh.hpp"

namespace dgm {

// ---- tables (CSV is the source of truth, markdown is derived from it) ----

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> footnotes; // skip notices etc.; CSV comment lines
};

std::string format_double(double value); // shortest round-trip decimal form
void append_digest_column(Table& table, const RunConfig& config);
void write_csv(const Table& table, const std::string& path);
void write_markdown(const Table& table, const std::string& path);
// Writes <stem>.csv and <stem>.md under the config's output directory.
void emit_table(const Table& table, const RunConfig& config, const std::string& stem);

// ---- descriptor extraction with a per-shape cache ----

// One shape's extraction outcome. A failure never aborts the run; it is
// recorded here and surfaces as a footnote in the output tables.
struct ShapeExtraction {
  std::string shape_id;
  std::string label;
  std::string split;
  DescriptorMatrix descriptors;
  bool ok = false;
  bool from_cache = false;
  std::string error;
};

struct ExtractionRun {
  std::vector<ShapeExtraction> shapes; // sorted by shape_id
  int cache_hits = 0;
  int computed = 0;
  int failed = 0;
};

// Descriptor rows for one preprocessed mesh under the configured family.
DescriptorMatrix extract_descriptor(const Mesh& mesh, const RunConfig& config);

// $DGM_CACHE_ROOT if set, else <output_dir>/cache.
std::string resolve_cache_root(const RunConfig& config);
std::string descriptor_cache_path(const std::string& cache_root, const std::string& shape_id,
                                  const RunConfig& config);
void save_descriptor(const DescriptorMatrix& descriptors, uint64_t params_digest,
                     const std::string& path);
DescriptorMatrix load_descriptor(const std::string& path, uint64_t expected_digest);

// Extract every manifest shape (meshes loaded from disk), isolating failures.
// Throws only when every shape fails.
ExtractionRun extract_all(const Manifest& manifest, const RunConfig& config, bool use_cache);

// Same pipeline over in-memory meshes; records carry ids/labels/splits and
// meshes[i] pairs with records[i].
ExtractionRun extract_shapes(const std::vector<Mesh>& meshes,
                             const std::vector<ManifestRecord>& records,
                             const RunConfig& config, bool use_cache);

// ---- retrieval / robustness runs ----

struct RetrievalRun {
  RetrievalResult result;        // first code set (repeat policy: first seed)
  ProtocolRecord record;
  std::vector<double> repeat_maps; // one mAP per code set
  double map_mean = 0.0;
  double map_std = 0.0;
  std::vector<std::string> failed_shapes;
};

RetrievalRun run_retrieval(const Manifest& manifest, const RunConfig& config, bool use_cache);
RetrievalRun run_retrieval(const ExtractionRun& extraction, const RunConfig& config);

struct RobustnessRun {
  double clean_map = 0.0;
  double perturbed_map = 0.0;
  double drop = 0.0;
  RetrievalRun clean;
  RetrievalRun perturbed;
};

RobustnessRun run_robustness(const Manifest& manifest, const RunConfig& config,
                             PerturbKind kind, double severity, bool use_cache);

// ---- diagnostics registry ----

struct DiagnosticEntry {
  std::string name;     // CLI name
  std::string stem;     // output file stem (stem.csv / stem.md)
  std::function<Table(const Manifest&, const RunConfig&)> run;
};

const std::vector<DiagnosticEntry>& diagnostic_registry();
const DiagnosticEntry& find_diagnostic(const std::string& name); // throws with the name list

// ---- cascade and timing ----

// Fixed ablation battery around the configured run: aggregation swap, field
// input swap, multi-step heat swap, codebook refit spread, optional transfer.
Table run_cascade(const Manifest& manifest, const RunConfig& config, bool use_cache);

Table run_timing(const Manifest& manifest, const RunConfig& config);

} // namespace dgm
