#include "dgm/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace dgm {

GlobalCode pool(const DescriptorMatrix& descriptors) {
  if (descriptors.num_vertices() < 1) throw std::invalid_argument("pool of an empty shape");
  const int c = descriptors.num_channels();
  GlobalCode code;
  code.aggregation = "pooled";
  code.vector.resize(3 * c);
  for (int j = 0; j < c; ++j) {
    double mean = descriptors.rows.col(j).mean();
    double var = (descriptors.rows.col(j).array() - mean).square().mean();
    code.vector[j] = mean;
    code.vector[c + j] = std::sqrt(var);
    code.vector[2 * c + j] = descriptors.rows.col(j).maxCoeff();
  }
  double norm = code.vector.norm();
  if (norm > 0.0)
    code.vector /= norm;
  else
    code.degenerate = true;
  return code;
}

namespace {

int nearest_center(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& row) {
  int best = 0;
  double best_d = (centers.row(0) - row).squaredNorm();
  for (int j = 1; j < centers.rows(); ++j) {
    double d = (centers.row(j) - row).squaredNorm();
    if (d < best_d) { // strict: ties stay with the lowest index
      best_d = d;
      best = j;
    }
  }
  return best;
}

Codebook kmeans(const Eigen::MatrixXd& samples, int c, RngStream& rng,
                const std::string& fit_meta) {
  const int n = static_cast<int>(samples.rows());
  if (n < c) throw std::invalid_argument("fewer samples than clusters");

  // k-means++ seeding: D^2-weighted draws through the stream
  Eigen::MatrixXd centers(c, samples.cols());
  centers.row(0) = samples.row(static_cast<int>(rng.next_index(n)));
  Eigen::VectorXd d2(n);
  for (int i = 0; i < n; ++i) d2[i] = (samples.row(i) - centers.row(0)).squaredNorm();
  for (int j = 1; j < c; ++j) {
    double total = d2.sum();
    if (total <= 0.0) throw std::invalid_argument("fewer distinct samples than clusters");
    double r = rng.next_real() * total;
    int pick = -1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i; // last positive-weight index is the rounding fallback
      acc += d2[i];
      if (acc >= r) break;
    }
    centers.row(j) = samples.row(pick);
    for (int i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (samples.row(i) - centers.row(j)).squaredNorm());
  }

  std::vector<int> assign(n, 0);
  double prev_wcss = std::numeric_limits<double>::infinity();
  int iterations = 0;
  for (int iter = 0; iter < 100; ++iter) {
    ++iterations;
    double wcss = 0.0;
    for (int i = 0; i < n; ++i) {
      assign[i] = nearest_center(centers, samples.row(i));
      wcss += (samples.row(i) - centers.row(assign[i])).squaredNorm();
    }
    if (wcss > prev_wcss + 1e-9 * (1.0 + prev_wcss))
      throw std::logic_error("k-means objective increased");
    prev_wcss = wcss;

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(c, samples.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(c);
    for (int i = 0; i < n; ++i) {
      next.row(assign[i]) += samples.row(i);
      counts[assign[i]] += 1;
    }
    double movement = 0.0;
    for (int j = 0; j < c; ++j) {
      if (counts[j] == 0) {
        next.row(j) = centers.row(j); // empty cluster keeps its center
      } else {
        next.row(j) /= static_cast<double>(counts[j]);
      }
      movement = std::max(movement, (next.row(j) - centers.row(j)).norm());
    }
    centers = next;
    if (movement <= 1e-7) break;
  }

  Codebook book;
  book.centers = centers;
  book.fit_meta = fit_meta.substr(0, fit_meta.size() - 1) +
                  ",\"iterations\":" + std::to_string(iterations) + "}";
  return book;
}

} // namespace

Codebook fit_codebook(const Eigen::MatrixXd& samples, int c, uint64_t rng_seed) {
  RngStream rng(hash64("codebook", rng_seed));
  return kmeans(samples, c, rng,
                "{\"rng_seed\":" + std::to_string(rng_seed) +
                    ",\"samples\":" + std::to_string(samples.rows()) + "}");
}

Codebook fit_codebook(const std::vector<ShapeRows>& shapes, int c, uint64_t rng_seed) {
  constexpr int kPerShapeCap = 2000;
  long total = 0;
  for (const auto& s : shapes)
    total += std::min<long>(kPerShapeCap, s.rows->rows());
  if (total < c) throw std::invalid_argument("fewer samples than clusters");

  Eigen::MatrixXd samples(total, shapes.front().rows->cols());
  long at = 0;
  for (const auto& s : shapes) {
    const long n = s.rows->rows();
    if (n <= kPerShapeCap) {
      samples.middleRows(at, n) = *s.rows;
      at += n;
    } else {
      RngStream rng(hash64("codebook_subsample", rng_seed, s.shape_id));
      std::vector<int> picks =
          rng.sample_without_replacement(static_cast<int>(n), kPerShapeCap);
      for (int row : picks) samples.row(at++) = s.rows->row(row);
    }
  }

  RngStream rng(hash64("codebook", rng_seed));
  return kmeans(samples, c, rng,
                "{\"rng_seed\":" + std::to_string(rng_seed) +
                    ",\"samples\":" + std::to_string(total) +
                    ",\"shapes\":" + std::to_string(shapes.size()) + "}");
}

GlobalCode vlad_encode(const DescriptorMatrix& descriptors, const Codebook& codebook) {
  if (descriptors.num_channels() != codebook.dim())
    throw std::invalid_argument("descriptor/codebook dimension mismatch");
  const int c = codebook.count();
  const int d = codebook.dim();

  Eigen::MatrixXd residuals = Eigen::MatrixXd::Zero(c, d);
  for (int v = 0; v < descriptors.num_vertices(); ++v) {
    int j = nearest_center(codebook.centers, descriptors.rows.row(v));
    residuals.row(j) += descriptors.rows.row(v) - codebook.centers.row(j);
  }

  GlobalCode code;
  code.aggregation = "vlad";
  code.provenance = "codebook:" + hex64(codebook_digest(codebook));
  code.vector.resize(c * d);
  for (int j = 0; j < c; ++j) {
    Eigen::RowVectorXd r = residuals.row(j);
    for (int q = 0; q < d; ++q)
      r[q] = (r[q] >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(r[q]));
    double norm = r.norm();
    if (norm > 0.0) r /= norm; // zero clusters stay zero
    code.vector.segment(j * d, d) = r.transpose();
  }
  double norm = code.vector.norm();
  if (norm > 0.0)
    code.vector /= norm;
  else
    code.degenerate = true;
  return code;
}

Projection fit_projection(const std::vector<GlobalCode>& codes, int d) {
  if (codes.size() < 2) throw std::invalid_argument("projection needs at least 2 codes");
  const int n = static_cast<int>(codes.size());
  const int dim = static_cast<int>(codes.front().vector.size());
  Eigen::MatrixXd X(n, dim);
  for (int i = 0; i < n; ++i) X.row(i) = codes[i].vector.transpose();

  Projection proj;
  proj.mean = X.colwise().mean().transpose();
  Eigen::MatrixXd centered = X.rowwise() - proj.mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);

  // eigenvalues ascending: walk from the top, stop at the data rank
  double floor = 1e-12 * std::max(es.eigenvalues().maxCoeff(), 0.0) + 1e-300;
  int keep = 0;
  for (int i = dim - 1; i >= 0 && keep < d; --i) {
    if (es.eigenvalues()[i] <= floor) break;
    ++keep;
  }
  keep = std::max(keep, 1);
  proj.components.resize(dim, keep);
  for (int j = 0; j < keep; ++j) proj.components.col(j) = es.eigenvectors().col(dim - 1 - j);
  return proj;
}

namespace {

uint64_t matrix_digest(uint64_t h, const Eigen::MatrixXd& m) {
  h = hash64(h, static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols()));
  return fnv1a64_bytes(m.data(), sizeof(double) * m.size(), h);
}

} // namespace

uint64_t codebook_digest(const Codebook& codebook) {
  return matrix_digest(hash64("codebook"), codebook.centers);
}

uint64_t projection_digest(const Projection& projection) {
  uint64_t h = hash64("projection");
  h = fnv1a64_bytes(projection.mean.data(), sizeof(double) * projection.mean.size(), h);
  return matrix_digest(h, projection.components);
}

void save_codebook(const Codebook& codebook, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  const char magic[8] = {'D', 'G', 'M', 'C', 'B', '0', '0', '1'};
  out.write(magic, 8);
  int64_t dims[2] = {codebook.count(), codebook.dim()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(codebook.centers.data()),
            sizeof(double) * codebook.centers.size());
  if (!out) throw std::runtime_error(path + ": write failed");
  std::ofstream side(path + ".json");
  side << "{\"version\":1,\"clusters\":" << codebook.count() << ",\"dim\":" << codebook.dim()
       << ",\"digest\":\"" << hex64(codebook_digest(codebook))
       << "\",\"fit_meta\":" << (codebook.fit_meta.empty() ? "{}" : codebook.fit_meta) << "}\n";
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 5) != "DGMCB")
    throw std::runtime_error(path + ": not a codebook file");
  int64_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  Codebook book;
  book.centers.resize(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(book.centers.data()), sizeof(double) * dims[0] * dims[1]);
  if (!in) throw std::runtime_error(path + ": truncated codebook file");
  return book;
}

const char* aggregation_kind_name(AggregationKind kind) {
  switch (kind) {
    case AggregationKind::Pooled: return "pooled";
    case AggregationKind::Vlad: return "vlad";
  }
  return "unknown";
}

AggregationKind aggregation_kind_from_name(const std::string& name) {
  if (name == "pooled") return AggregationKind::Pooled;
  if (name == "vlad") return AggregationKind::Vlad;
  throw std::invalid_argument("unknown aggregation: " + name);
}

const char* codebook_policy_name(CodebookPolicy policy) {
  switch (policy) {
    case CodebookPolicy::FitAll: return "fit_all";
    case CodebookPolicy::FitSplit: return "fit_split";
    case CodebookPolicy::Transfer: return "transfer";
    case CodebookPolicy::Repeat: return "repeat";
  }
  return "unknown";
}

namespace {

std::vector<GlobalCode> encode_all(const std::vector<ShapeDescriptors>& shapes,
                                   AggregationKind kind, const Codebook* book) {
  std::vector<GlobalCode> codes;
  codes.reserve(shapes.size());
  for (const auto& s : shapes)
    codes.push_back(kind == AggregationKind::Pooled ? pool(s.descriptors)
                                                    : vlad_encode(s.descriptors, *book));
  return codes;
}

void project_codes(std::vector<GlobalCode>& codes, const Projection& proj) {
  for (auto& code : codes) {
    code.vector = proj.apply(code.vector);
    double norm = code.vector.norm();
    if (norm > 0.0) code.vector /= norm;
    code.provenance += (code.provenance.empty() ? "" : ";");
    code.provenance += "projection:" + hex64(projection_digest(proj));
  }
}

} // namespace

ProtocolResult run_protocol(const std::vector<ShapeDescriptors>& shapes,
                            const ProtocolOptions& options) {
  if (shapes.empty()) throw std::invalid_argument("protocol needs at least one shape");
  ProtocolResult result;
  result.record.aggregation = aggregation_kind_name(options.aggregation);
  result.record.policy = codebook_policy_name(options.policy);

  auto fitting_rows = [&](bool split_only) {
    std::vector<ShapeRows> rows;
    for (const auto& s : shapes)
      if (!split_only || s.split == "train")
        rows.push_back({s.shape_id, &s.descriptors.rows});
    if (rows.empty())
      throw std::invalid_argument("no shapes labeled split=train for the split-fit policy");
    return rows;
  };

  std::vector<std::pair<std::optional<Codebook>, uint64_t>> fits; // (book, seed)
  switch (options.policy) {
    case CodebookPolicy::FitAll:
      fits.emplace_back(std::nullopt, options.rng_seed);
      if (options.aggregation == AggregationKind::Vlad)
        fits.back().first = fit_codebook(fitting_rows(false), options.clusters,
                                         options.rng_seed);
      break;
    case CodebookPolicy::FitSplit:
      fits.emplace_back(std::nullopt, options.rng_seed);
      if (options.aggregation == AggregationKind::Vlad)
        fits.back().first = fit_codebook(fitting_rows(true), options.clusters,
                                         options.rng_seed);
      break;
    case CodebookPolicy::Transfer:
      if (options.aggregation == AggregationKind::Vlad && !options.transfer_source)
        throw std::invalid_argument("transfer policy needs a source codebook");
      fits.emplace_back(options.transfer_source ? std::optional<Codebook>(*options.transfer_source)
                                                : std::nullopt,
                        options.rng_seed);
      break;
    case CodebookPolicy::Repeat: {
      if (options.repeat_seeds.empty())
        throw std::invalid_argument("repeat policy needs seeds");
      for (uint64_t seed : options.repeat_seeds) {
        fits.emplace_back(std::nullopt, seed);
        if (options.aggregation == AggregationKind::Vlad)
          fits.back().first = fit_codebook(fitting_rows(false), options.clusters, seed);
      }
      break;
    }
  }

  for (auto& [book, seed] : fits) {
    std::vector<GlobalCode> codes =
        encode_all(shapes, options.aggregation, book ? &*book : nullptr);
    if (options.use_projection) {
      // fit on the shapes the policy designates; FitSplit restricts to train
      std::vector<GlobalCode> fit_set;
      if (options.policy == CodebookPolicy::FitSplit) {
        for (size_t i = 0; i < shapes.size(); ++i)
          if (shapes[i].split == "train") fit_set.push_back(codes[i]);
      } else {
        fit_set = codes;
      }
      Projection proj = fit_projection(fit_set, options.projection_dim);
      project_codes(codes, proj);
      result.record.projection_digest = hex64(projection_digest(proj));
    }
    result.record.codebook_digests.push_back(book ? hex64(codebook_digest(*book)) : "");
    result.record.rng_seeds.push_back(seed);
    result.code_sets.push_back(std::move(codes));
  }
  return result;
}

} // namespace dgm
