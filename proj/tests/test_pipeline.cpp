#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "dgm/config.hpp"
#include "dgm/fixtures.hpp"
#include "dgm/mesh.hpp"
#include "dgm/pipeline.hpp"
#include "dgm/rng.hpp"

using namespace dgm;
namespace fs = std::filesystem;

namespace {

// Scratch directory that cleans up after itself.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           (tag + "_" + std::to_string(static_cast<long>(::getpid())) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string thrown_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Small, fast settings shared by the integration-style cases below.
RunConfig small_config(const std::string& out_dir) {
  RunConfig config;
  config.output_dir = out_dir;
  config.family = "dgm";
  config.scales = {0.02, 0.08};
  config.seeds = 6;
  config.eigenpairs = 20;
  config.times = 6;
  config.clusters = 4;
  config.landmarks = 16;
  return config;
}

ManifestRecord record_of(const std::string& id) {
  ManifestRecord rec;
  rec.shape_id = id;
  rec.label = "lab";
  rec.split = "train";
  return rec;
}

Mesh no_face_mesh() {
  Mesh m;
  m.vertices.resize(3, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  m.faces.resize(0, 3);
  return m;
}

} // namespace

TEST_CASE("floating point values render in shortest round-trip form") {
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.5) == "1.5");
  CHECK(format_double(0.0) == "0");
  for (double v : {1.0 / 3.0, 2.0 / 7.0, 1e-17, 6.02214076e23, -123.456}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("tables render to CSV and markdown byte-for-byte") {
  Table t;
  t.columns = {"id", "note"};
  t.rows.push_back({"plain", "x,y"});
  t.rows.push_back({"q\"q", "line"});
  t.rows.push_back({"a|b", "z"});
  t.footnotes.push_back("skipped s1: bad");

  TempDir dir("dgm_table");

  SUBCASE("CSV quotes only when needed and doubles embedded quotes") {
    const std::string path = (dir.path / "t.csv").string();
    write_csv(t, path);
    const std::string expected =
        "id,note\n"
        "plain,\"x,y\"\n"
        "\"q\"\"q\",line\n"
        "a|b,z\n"
        "# skipped s1: bad\n";
    CHECK(slurp(path) == expected);
  }

  SUBCASE("markdown escapes pipes and renders footnotes in italics") {
    const std::string path = (dir.path / "t.md").string();
    write_markdown(t, path);
    const std::string expected =
        "| id | note |\n"
        "| --- | --- |\n"
        "| plain | x,y |\n"
        "| q\"q | line |\n"
        "| a\\|b | z |\n"
        "\n"
        "_skipped s1: bad_\n";
    CHECK(slurp(path) == expected);
  }
}

TEST_CASE("the config digest stamps every row exactly once") {
  RunConfig config;
  Table t;
  t.columns = {"x"};
  t.rows.push_back({"1"});
  t.rows.push_back({"2"});

  append_digest_column(t, config);
  REQUIRE(t.columns.size() == 2);
  CHECK(t.columns.back() == "config_digest");
  const std::string digest = hex64(config.digest());
  for (const auto& row : t.rows) {
    REQUIRE(row.size() == 2);
    CHECK(row.back() == digest);
  }

  append_digest_column(t, config); // idempotent
  CHECK(t.columns.size() == 2);
  CHECK(t.rows[0].size() == 2);
}

TEST_CASE("the canonical configuration form is sorted and stable") {
  RunConfig config;

  SUBCASE("keys appear in alphabetical order") {
    const std::string json = config.canonical_json();
    const std::vector<std::string> keys = {
        "aggregation", "cheb_degree", "clusters",     "eigenpairs",  "family",
        "field_mode",  "landmarks",   "manifest_path", "metric",      "normalization",
        "output_dir",  "pade_steps",  "pca_dim",      "policy",      "probes",
        "repeat_seeds", "rng_seed",   "scales",       "seed_mode",   "seeds",
        "steps",       "tensor_channels", "times",    "transfer_codebook", "use_projection"};
    size_t last = 0;
    for (const auto& key : keys) {
      size_t pos = json.find("\"" + key + "\":");
      CAPTURE(key);
      REQUIRE(pos != std::string::npos);
      CHECK(pos >= last);
      last = pos;
    }
  }

  SUBCASE("equal configs produce equal bytes, different configs different digests") {
    RunConfig other;
    CHECK(config.canonical_json() == other.canonical_json());
    CHECK(config.digest() == other.digest());
    other.clusters = 17;
    CHECK(config.digest() != other.digest());
  }
}

TEST_CASE("descriptor digests track only the settings that shape rows") {
  RunConfig config;

  SUBCASE("aggregation settings never enter the descriptor digest") {
    RunConfig other = config;
    other.aggregation = "pooled";
    other.clusters = 3;
    other.pca_dim = 7;
    other.output_dir = "elsewhere";
    CHECK(config.descriptor_digest() == other.descriptor_digest());
  }

  SUBCASE("field settings do enter it") {
    RunConfig other = config;
    other.scales = {0.5};
    CHECK(config.descriptor_digest() != other.descriptor_digest());
  }

  SUBCASE("the rng seed counts only when seeding actually draws random numbers") {
    RunConfig det = config; // geodesic_deterministic by default
    RunConfig det2 = det;
    det2.rng_seed = 999;
    CHECK(det.descriptor_digest() == det2.descriptor_digest());

    RunConfig rnd = config;
    rnd.seed_mode = "euclidean_random";
    RunConfig rnd2 = rnd;
    rnd2.rng_seed = 999;
    CHECK(rnd.descriptor_digest() != rnd2.descriptor_digest());
  }

  SUBCASE("spectral families ignore field settings") {
    RunConfig a = config;
    a.family = "hks";
    RunConfig b = a;
    b.seeds = 99;
    b.scales = {0.5};
    CHECK(a.descriptor_digest() == b.descriptor_digest());
    b.times = 7;
    CHECK(a.descriptor_digest() != b.descriptor_digest());
  }

  SUBCASE("validation rejects unusable settings") {
    auto bad = [](const std::function<void(RunConfig&)>& tweak) {
      RunConfig c;
      tweak(c);
      return thrown_message([&] { c.validate(); });
    };
    CHECK(bad([](RunConfig& c) { c.family = "nope"; }).find("unknown descriptor family") !=
          std::string::npos);
    CHECK(!bad([](RunConfig& c) { c.metric = "l2"; }).empty());
    CHECK(!bad([](RunConfig& c) { c.eigenpairs = 1; }).empty());
    CHECK(!bad([](RunConfig& c) { c.landmarks = 3; }).empty());
    CHECK(!bad([](RunConfig& c) { c.scales = {}; }).empty());
    CHECK(!bad([](RunConfig& c) { c.scales = {0.1, -0.2}; }).empty());
    CHECK(!bad([](RunConfig& c) { c.policy = "repeat"; }).empty());
    CHECK(!bad([](RunConfig& c) { c.policy = "transfer"; }).empty());
    RunConfig fine;
    CHECK_NOTHROW(fine.validate());
    fine.policy = "repeat";
    fine.repeat_seeds = {1, 2};
    CHECK_NOTHROW(fine.validate());
  }
}

TEST_CASE("descriptor cache entries round-trip and reject foreign settings") {
  TempDir dir("dgm_cache");
  DescriptorMatrix d;
  d.rows.resize(3, 2);
  d.rows << 1.0, -2.5, 0.125, 3.75, 1e-30, 42.0;
  d.channel_names = {"m0", "m1"};
  d.family = "test";
  d.params = "{\"family\":\"test\"}";

  const std::string path = (dir.path / "entry.desc").string();
  save_descriptor(d, 42, path);

  SUBCASE("a saved entry loads back bitwise-identical") {
    DescriptorMatrix back = load_descriptor(path, 42);
    CHECK(back.rows == d.rows);
    CHECK(back.channel_names == d.channel_names);
    CHECK(back.family == d.family);
    CHECK(back.params == d.params);
  }

  SUBCASE("a digest mismatch is refused") {
    const std::string msg =
        thrown_message([&] { (void)load_descriptor(path, 43); });
    CHECK(msg.find("different settings") != std::string::npos);
  }

  SUBCASE("garbage files are refused") {
    const std::string bad = (dir.path / "bad.desc").string();
    std::ofstream(bad, std::ios::binary) << "this is not a cache entry at all";
    const std::string msg = thrown_message([&] { (void)load_descriptor(bad, 42); });
    CHECK(msg.find("not a descriptor cache entry") != std::string::npos);
  }

  SUBCASE("truncated files are refused") {
    const std::string whole = slurp(path);
    const std::string cut = (dir.path / "cut.desc").string();
    std::ofstream(cut, std::ios::binary) << whole.substr(0, whole.size() / 2);
    CHECK_THROWS_AS((void)load_descriptor(cut, 42), std::runtime_error);
  }

  SUBCASE("cache paths sanitize hostile shape ids") {
    RunConfig config;
    const std::string p = descriptor_cache_path("/tmp/root", "we/ird id!", config);
    const std::string expected = std::string("/tmp/root/we_ird_id__") + "_" + config.family +
                                 "__" + hex64(config.descriptor_digest()) + ".desc";
    CHECK(p == expected);
  }
}

TEST_CASE("extraction sorts shapes, isolates failures, and reuses the cache") {
  TempDir dir("dgm_extract");
  RunConfig config = small_config(dir.str());

  Mesh sphere = make_icosphere(1);

  SUBCASE("results come back in shape-id order and the second run hits the cache") {
    std::vector<Mesh> meshes = {sphere, sphere};
    std::vector<ManifestRecord> records = {record_of("s2"), record_of("s1")};

    ExtractionRun first = extract_shapes(meshes, records, config, true);
    REQUIRE(first.shapes.size() == 2);
    CHECK(first.shapes[0].shape_id == "s1");
    CHECK(first.shapes[1].shape_id == "s2");
    CHECK(first.computed == 2);
    CHECK(first.cache_hits == 0);
    CHECK(first.failed == 0);
    for (const auto& se : first.shapes) {
      CHECK(se.ok);
      CHECK(!se.from_cache);
    }

    ExtractionRun second = extract_shapes(meshes, records, config, true);
    CHECK(second.cache_hits == 2);
    CHECK(second.computed == 0);
    for (size_t i = 0; i < second.shapes.size(); ++i) {
      CHECK(second.shapes[i].from_cache);
      CHECK(second.shapes[i].descriptors.rows == first.shapes[i].descriptors.rows);
    }

    ExtractionRun bypass = extract_shapes(meshes, records, config, false);
    CHECK(bypass.cache_hits == 0);
    CHECK(bypass.computed == 2);
  }

  SUBCASE("one broken shape does not poison the rest") {
    std::vector<Mesh> meshes = {sphere, no_face_mesh()};
    std::vector<ManifestRecord> records = {record_of("a"), record_of("b")};
    ExtractionRun run = extract_shapes(meshes, records, config, true);
    REQUIRE(run.shapes.size() == 2);
    CHECK(run.shapes[0].ok);
    CHECK(!run.shapes[1].ok);
    CHECK(!run.shapes[1].error.empty());
    CHECK(run.failed == 1);

    int entries = 0;
    for (const auto& e : fs::directory_iterator(fs::path(resolve_cache_root(config))))
      entries += e.path().extension() == ".desc";
    CHECK(entries == 1); // only the healthy shape was cached
  }

  SUBCASE("an all-failure run aborts loudly") {
    std::vector<Mesh> meshes = {no_face_mesh(), no_face_mesh()};
    std::vector<ManifestRecord> records = {record_of("a"), record_of("b")};
    const std::string msg =
        thrown_message([&] { (void)extract_shapes(meshes, records, config, false); });
    CHECK(msg.find("every shape") != std::string::npos);
  }

  SUBCASE("mismatched mesh and record counts are rejected") {
    std::vector<Mesh> meshes = {sphere};
    std::vector<ManifestRecord> records = {record_of("a"), record_of("b")};
    CHECK_THROWS_AS((void)extract_shapes(meshes, records, config, false),
                    std::invalid_argument);
  }

  SUBCASE("the cache root honours the environment override") {
    const char* prev = std::getenv("DGM_CACHE_ROOT");
    const std::string saved = prev ? prev : "";
    ::setenv("DGM_CACHE_ROOT", "/tmp/elsewhere", 1);
    CHECK(resolve_cache_root(config) == "/tmp/elsewhere");
    ::unsetenv("DGM_CACHE_ROOT");
    CHECK(resolve_cache_root(config) ==
          (fs::path(config.output_dir) / "cache").string());
    if (prev) ::setenv("DGM_CACHE_ROOT", saved.c_str(), 1);
  }
}

TEST_CASE("every family produces its advertised channel layout") {
  TempDir dir("dgm_families");
  RunConfig config = small_config(dir.str());
  config.times = 10;
  Mesh sphere = make_icosphere(1);
  const int n = sphere.num_vertices();

  auto channels_of = [&](const std::string& family, int expected) {
    RunConfig c = config;
    c.family = family;
    if (family == "hks_cheb" || family == "hks_pade") c.times = 6;
    if (family == "hks_mr_proxy") c.times = 6;
    if (family == "wks") c.times = 12;
    c.validate();
    DescriptorMatrix d = extract_descriptor(sphere, c);
    CAPTURE(family);
    CHECK(d.num_vertices() == n);
    CHECK(d.num_channels() == expected);
    CHECK(static_cast<int>(d.channel_names.size()) == expected);
  };

  channels_of("dgm", 12); // 6 moment channels per scale, 2 scales
  channels_of("hks", 10);
  channels_of("sihks", 6);
  channels_of("wks", 12);
  channels_of("gmsd_hks", 6);
  channels_of("gmsd_wks", 6);
  channels_of("hks_cheb", 6);
  channels_of("hks_pade", 6);
  channels_of("hks_mr_proxy", 6);

  RunConfig tensor = config;
  tensor.tensor_channels = true;
  DescriptorMatrix d = extract_descriptor(sphere, tensor);
  CHECK(d.num_channels() == 12 + 3 * 2); // + 3 covariance eigenvalues per scale
  CHECK(d.family == "dgm");

  RunConfig unknown = config;
  unknown.family = "mystery";
  CHECK_THROWS_AS((void)extract_descriptor(sphere, unknown), std::invalid_argument);
}

TEST_CASE("retrieval runs produce bounded scores and honest bookkeeping") {
  TempDir dir("dgm_retrieval");
  Manifest manifest = make_retrieval_set(2, 3, 0.01, 13, dir.str());
  RunConfig config = small_config((dir.path / "out").string());

  SUBCASE("a clean small set retrieves its own classes") {
    RetrievalRun run = run_retrieval(manifest, config, true);
    CHECK(run.result.mAP >= 0.9);
    CHECK(run.result.mAP <= 1.0 + 1e-12);
    CHECK(run.result.top1 >= 0.0);
    CHECK(run.repeat_maps.size() == 1);
    CHECK(run.map_std == 0.0);
    CHECK(run.map_mean == run.result.mAP);
    CHECK(run.failed_shapes.empty());
    CHECK(run.result.query_ids.size() == manifest.records.size());
  }

  SUBCASE("the repeat policy reports one mAP per refit seed") {
    RunConfig rep = config;
    rep.policy = "repeat";
    rep.repeat_seeds = {3, 5};
    RetrievalRun run = run_retrieval(manifest, rep, true);
    CHECK(run.repeat_maps.size() == 2);
    double lo = std::min(run.repeat_maps[0], run.repeat_maps[1]);
    double hi = std::max(run.repeat_maps[0], run.repeat_maps[1]);
    CHECK(run.map_mean >= lo);
    CHECK(run.map_mean <= hi);
    CHECK(run.result.mAP == run.repeat_maps[0]);
  }

  SUBCASE("fewer than two usable shapes is an error") {
    Manifest tiny;
    tiny.records.push_back(manifest.records[0]);
    CHECK_THROWS_AS((void)run_retrieval(tiny, config, false), std::runtime_error);
  }
}

TEST_CASE("robustness compares clean and perturbed retrieval runs") {
  TempDir dir("dgm_robust");
  Manifest manifest = make_retrieval_set(2, 2, 0.01, 13, dir.str());
  RunConfig config = small_config((dir.path / "out").string());

  RobustnessRun run = run_robustness(manifest, config, PerturbKind::Noise, 0.01, true);
  CHECK(run.clean_map >= 0.0);
  CHECK(run.clean_map <= 1.0 + 1e-12);
  CHECK(run.perturbed_map >= 0.0);
  CHECK(run.perturbed_map <= 1.0 + 1e-12);
  CHECK(run.drop == doctest::Approx(run.clean_map - run.perturbed_map).epsilon(1e-12));

  // perturbed duplicates must not collide with the clean cache entries
  for (const auto& se : run.perturbed.result.query_ids)
    CHECK(se.find("__noise") != std::string::npos);
}

TEST_CASE("the diagnostic registry knows its catalogue") {
  const std::vector<std::string> expected = {
      "soft_voronoi",        "information_compression",
      "heat_response",       "seed_permutation",
      "csas",                "symmetry_side",
      "spectral_compressibility", "persistence",
      "nn_correspondence",   "synchronized_seeds"};

  const auto& registry = diagnostic_registry();
  REQUIRE(registry.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) CHECK(registry[i].name == expected[i]);

  CHECK(find_diagnostic("csas").stem == "csas_extended");

  const std::string msg = thrown_message([] { (void)find_diagnostic("nope"); });
  CHECK(msg.find("unknown diagnostic 'nope'") != std::string::npos);
  CHECK(msg.find("soft_voronoi") != std::string::npos);
  CHECK(msg.find("synchronized_seeds") != std::string::npos);

  SUBCASE("a cheap diagnostic runs end to end") {
    TempDir dir("dgm_diag");
    Manifest manifest = make_retrieval_set(2, 2, 0.01, 13, dir.str());
    RunConfig config = small_config((dir.path / "out").string());

    Table seeds = find_diagnostic("synchronized_seeds").run(manifest, config);
    CHECK(seeds.columns == std::vector<std::string>{"policy", "overlap"});
    REQUIRE(seeds.rows.size() == 3);
    CHECK(seeds.rows[2][0] == "synchronized");
    CHECK(seeds.rows[2][1] == "1");

    Table voronoi = find_diagnostic("soft_voronoi").run(manifest, config);
    CHECK(voronoi.columns ==
          std::vector<std::string>{"scale", "mean_entropy", "mean_margin", "shapes"});
    CHECK(voronoi.rows.size() == config.scales.size());
  }
}

TEST_CASE("the protocol cascade reports the fixed effect battery") {
  TempDir dir("dgm_cascade");
  Manifest manifest = make_retrieval_set(2, 2, 0.01, 13, dir.str());
  RunConfig config = small_config((dir.path / "out").string());
  config.repeat_seeds = {3, 5}; // keep the refit spread cheap

  Table t = run_cascade(manifest, config, true);
  CHECK(t.columns == std::vector<std::string>{"effect", "run_a", "run_b", "value"});
  REQUIRE(t.rows.size() == 4); // no transfer codebook configured
  CHECK(t.rows[0][0] == "aggregation_effect");
  CHECK(t.rows[1][0] == "input_signal_effect");
  CHECK(t.rows[2][0] == "heat_step_effect");
  CHECK(t.rows[3][0] == "codebook_repeat_std");
  CHECK(t.rows[0][1] == "dgm_heat_steps1_vlad");
  CHECK(t.rows[0][2] == "dgm_heat_steps1_pooled");
  CHECK(t.rows[1][2] == "dgm_graph_geodesic_steps1_vlad");
  CHECK(t.rows[2][1] == "dgm_heat_steps4_vlad");
  CHECK(t.rows[3][1] == "dgm_heat_steps1_vlad_repeat");
  for (const auto& row : t.rows) {
    double v = std::stod(row[3]);
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
  REQUIRE(!t.footnotes.empty());
  CHECK(t.footnotes[0].find("mAP") != std::string::npos);
}

TEST_CASE("timing reports wall time per shape") {
  TempDir dir("dgm_timing");
  Manifest manifest = make_retrieval_set(2, 2, 0.0, 13, dir.str());
  RunConfig config = small_config((dir.path / "out").string());

  Table t = run_timing(manifest, config);
  CHECK(t.columns ==
        std::vector<std::string>{"family", "shapes", "seconds_per_shape", "environment"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "dgm");
  CHECK(t.rows[0][1] == "4");
  CHECK(std::stod(t.rows[0][2]) >= 0.0);
  CHECK(!t.rows[0][3].empty());
}

TEST_CASE("emitted tables are byte-identical across runs") {
  TempDir dir("dgm_emit");
  RunConfig config;
  config.output_dir = (dir.path / "out").string();

  Table t;
  t.columns = {"k", "v"};
  t.rows.push_back({"a", "1"});
  t.footnotes.push_back("one note");

  emit_table(t, config, "demo");
  const fs::path csv = fs::path(config.output_dir) / "demo.csv";
  const fs::path md = fs::path(config.output_dir) / "demo.md";
  REQUIRE(fs::exists(csv));
  REQUIRE(fs::exists(md));
  const std::string csv_first = slurp(csv);
  const std::string md_first = slurp(md);
  CHECK(csv_first.find("k,v,config_digest") == 0);
  CHECK(csv_first.find(hex64(config.digest())) != std::string::npos);

  emit_table(t, config, "demo");
  CHECK(slurp(csv) == csv_first);
  CHECK(slurp(md) == md_first);

  // the caller's table is not mutated by the digest stamping
  CHECK(t.columns.size() == 2);
  CHECK(t.rows[0].size() == 2);
}
