#include "dgm/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "dgm/rng.hpp"

namespace dgm {

namespace {

std::string fmt_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

// Tiny appender that keeps keys in the order the caller supplies them.
// Callers list keys alphabetically so equal configs serialize identically.
class JsonObject {
 public:
  void add_string(const std::string& key, const std::string& value) {
    field(key) << '"' << json_escape(value) << '"';
  }
  void add_bool(const std::string& key, bool value) { field(key) << (value ? "true" : "false"); }
  void add_int(const std::string& key, long long value) { field(key) << value; }
  void add_uint(const std::string& key, unsigned long long value) { field(key) << value; }
  void add_double(const std::string& key, double value) { field(key) << fmt_double(value); }
  void add_double_list(const std::string& key, const std::vector<double>& values) {
    auto& s = field(key);
    s << '[';
    for (size_t i = 0; i < values.size(); ++i) s << (i ? "," : "") << fmt_double(values[i]);
    s << ']';
  }
  void add_uint_list(const std::string& key, const std::vector<uint64_t>& values) {
    auto& s = field(key);
    s << '[';
    for (size_t i = 0; i < values.size(); ++i) s << (i ? "," : "") << values[i];
    s << ']';
  }

  std::string str() const { return "{" + body_.str() + "}"; }

 private:
  std::ostringstream& field(const std::string& key) {
    if (!first_) body_ << ',';
    first_ = false;
    body_ << '"' << json_escape(key) << "\":";
    return body_;
  }
  std::ostringstream body_;
  bool first_ = true;
};

bool family_draws_probes(const std::string& family) {
  return family == "hks_cheb" || family == "hks_pade";
}

}  // namespace

const std::vector<std::string>& known_families() {
  static const std::vector<std::string> families = {
      "dgm",      "hks",      "sihks",    "wks",      "gmsd_hks",
      "gmsd_wks", "hks_cheb", "hks_pade", "hks_mr_proxy"};
  return families;
}

std::string RunConfig::canonical_json() const {
  JsonObject j;
  j.add_string("aggregation", aggregation);
  j.add_int("cheb_degree", cheb_degree);
  j.add_int("clusters", clusters);
  j.add_int("eigenpairs", eigenpairs);
  j.add_string("family", family);
  j.add_string("field_mode", field_mode);
  j.add_int("landmarks", landmarks);
  j.add_string("manifest_path", manifest_path);
  j.add_string("metric", metric);
  j.add_string("normalization", normalization);
  j.add_string("output_dir", output_dir);
  j.add_int("pade_steps", pade_steps);
  j.add_int("pca_dim", pca_dim);
  j.add_string("policy", policy);
  j.add_int("probes", probes);
  j.add_uint_list("repeat_seeds", repeat_seeds);
  j.add_uint("rng_seed", rng_seed);
  j.add_double_list("scales", scales);
  j.add_string("seed_mode", seed_mode);
  j.add_int("seeds", seeds);
  j.add_int("steps", steps);
  j.add_bool("tensor_channels", tensor_channels);
  j.add_int("times", times);
  j.add_string("transfer_codebook", transfer_codebook);
  j.add_bool("use_projection", use_projection);
  return j.str();
}

uint64_t RunConfig::digest() const {
  const std::string json = canonical_json();
  return fnv1a64(json);
}

std::string RunConfig::descriptor_params_json() const {
  JsonObject j;
  j.add_string("family", family);
  if (family == "dgm") {
    j.add_string("field_mode", field_mode);
    j.add_string("normalization", normalization);
    if (seed_mode == "euclidean_random") j.add_uint("rng_seed", rng_seed);
    j.add_double_list("scales", scales);
    j.add_string("seed_mode", seed_mode);
    j.add_int("seeds", seeds);
    j.add_int("steps", steps);
    j.add_bool("tensor_channels", tensor_channels);
  } else if (family == "hks" || family == "wks" || family == "gmsd_hks" ||
             family == "gmsd_wks") {
    j.add_int("eigenpairs", eigenpairs);
    j.add_int("times", times);
  } else if (family == "sihks") {
    j.add_int("eigenpairs", eigenpairs);
  } else if (family == "hks_cheb") {
    j.add_int("cheb_degree", cheb_degree);
    j.add_int("probes", probes);
    j.add_uint("rng_seed", rng_seed);
    j.add_int("times", times);
  } else if (family == "hks_pade") {
    j.add_int("pade_steps", pade_steps);
    j.add_int("probes", probes);
    j.add_uint("rng_seed", rng_seed);
    j.add_int("times", times);
  } else if (family == "hks_mr_proxy") {
    j.add_int("landmarks", landmarks);
    j.add_int("times", times);
  } else {
    throw std::invalid_argument("unknown descriptor family: " + family);
  }
  return j.str();
}

uint64_t RunConfig::descriptor_digest() const {
  const std::string json = descriptor_params_json();
  return fnv1a64(json);
}

void RunConfig::validate() const {
  const auto& families = known_families();
  if (std::find(families.begin(), families.end(), family) == families.end()) {
    std::string names;
    for (const auto& f : families) names += (names.empty() ? "" : ", ") + f;
    throw std::invalid_argument("unknown descriptor family '" + family +
                                "' (available: " + names + ")");
  }
  if (normalization != "nonlinear" && normalization != "linear_whiten" && normalization != "raw")
    throw std::invalid_argument("unknown normalization: " + normalization);
  if (field_mode != "heat" && field_mode != "graph_geodesic")
    throw std::invalid_argument("unknown field mode: " + field_mode);
  if (seed_mode != "euclidean_random" && seed_mode != "euclidean_deterministic" &&
      seed_mode != "geodesic_deterministic")
    throw std::invalid_argument("unknown seed mode: " + seed_mode);
  if (aggregation != "pooled" && aggregation != "vlad")
    throw std::invalid_argument("unknown aggregation: " + aggregation);
  if (policy != "fit_all" && policy != "fit_split" && policy != "transfer" && policy != "repeat")
    throw std::invalid_argument("unknown codebook policy: " + policy);
  if (metric != "cosine") throw std::invalid_argument("unsupported metric: " + metric);
  if (seeds < 1) throw std::invalid_argument("seeds must be positive");
  if (scales.empty()) throw std::invalid_argument("at least one diffusion scale is required");
  for (double s : scales)
    if (!(s > 0.0)) throw std::invalid_argument("diffusion scales must be positive");
  if (steps < 1) throw std::invalid_argument("steps must be positive");
  if (eigenpairs < 2) throw std::invalid_argument("eigenpairs must be at least 2");
  if (times < 1) throw std::invalid_argument("times must be positive");
  if (cheb_degree < 1) throw std::invalid_argument("cheb_degree must be positive");
  if (probes < 1) throw std::invalid_argument("probes must be positive");
  if (pade_steps < 1) throw std::invalid_argument("pade_steps must be positive");
  if (landmarks < 4) throw std::invalid_argument("landmarks must be at least 4");
  if (clusters < 1) throw std::invalid_argument("clusters must be positive");
  if (pca_dim < 1) throw std::invalid_argument("pca_dim must be positive");
  if (policy == "repeat" && repeat_seeds.empty())
    throw std::invalid_argument("repeat policy needs at least one seed in repeat_seeds");
  if (policy == "transfer" && aggregation == "vlad" && transfer_codebook.empty())
    throw std::invalid_argument("transfer policy needs a source codebook path");
  if (family_draws_probes(family) && probes < 1)
    throw std::invalid_argument("probes must be positive");
}

}  // namespace dgm
