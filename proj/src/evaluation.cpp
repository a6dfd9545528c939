#include "dgm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

namespace dgm {

namespace {

// rank all shapes against one query by descending similarity, shape_id ties
RetrievalResult rank_and_score(const Eigen::MatrixXd& similarity,
                               const std::vector<std::string>& labels,
                               const std::vector<std::string>& shape_ids) {
  const int n = static_cast<int>(labels.size());
  if (n < 2) throw std::invalid_argument("retrieval needs at least 2 shapes");
  if (static_cast<int>(shape_ids.size()) != n || similarity.rows() != n ||
      similarity.cols() != n)
    throw std::invalid_argument("retrieval input size mismatch");

  std::map<std::string, int> class_sizes;
  for (const auto& l : labels) class_sizes[l] += 1;

  RetrievalResult result;
  double ap_sum = 0.0;
  int top1_hits = 0;
  for (int q = 0; q < n; ++q) {
    if (class_sizes[labels[q]] < 2) {
      result.skipped_queries.push_back(shape_ids[q]);
      continue;
    }
    std::vector<int> order;
    order.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != q) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (similarity(q, a) != similarity(q, b)) return similarity(q, a) > similarity(q, b);
      return shape_ids[a] < shape_ids[b];
    });

    std::vector<RankedHit> ranking;
    ranking.reserve(order.size());
    int relevant_seen = 0;
    double precision_sum = 0.0;
    for (size_t r = 0; r < order.size(); ++r) {
      int j = order[r];
      bool rel = labels[j] == labels[q];
      if (rel) {
        ++relevant_seen;
        precision_sum += static_cast<double>(relevant_seen) / static_cast<double>(r + 1);
      }
      ranking.push_back({shape_ids[j], similarity(q, j), rel});
    }
    double ap = precision_sum / static_cast<double>(relevant_seen);
    top1_hits += ranking.front().relevant;

    result.query_ids.push_back(shape_ids[q]);
    result.rankings.push_back(std::move(ranking));
    result.average_precisions.push_back(ap);
    ap_sum += ap;
  }
  if (result.query_ids.empty()) throw std::invalid_argument("every query was skipped");
  result.mAP = ap_sum / static_cast<double>(result.query_ids.size());
  result.top1 = static_cast<double>(top1_hits) / static_cast<double>(result.query_ids.size());
  return result;
}

} // namespace

RetrievalResult retrieve(const std::vector<GlobalCode>& codes,
                         const std::vector<std::string>& labels,
                         const std::vector<std::string>& shape_ids) {
  const int n = static_cast<int>(codes.size());
  Eigen::MatrixXd sim(n, n);
  for (int i = 0; i < n; ++i) {
    sim(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double ni = codes[i].vector.norm(), nj = codes[j].vector.norm();
      double s = (ni > 0.0 && nj > 0.0) ? codes[i].vector.dot(codes[j].vector) / (ni * nj) : 0.0;
      sim(i, j) = sim(j, i) = s;
    }
  }
  return rank_and_score(sim, labels, shape_ids);
}

RetrievalResult retrieve_distances(const Eigen::MatrixXd& distances,
                                   const std::vector<std::string>& labels,
                                   const std::vector<std::string>& shape_ids) {
  return rank_and_score(-distances, labels, shape_ids);
}

double robustness_drop(const RetrievalResult& clean, const RetrievalResult& perturbed) {
  return clean.mAP - perturbed.mAP;
}

Eigen::MatrixXd cosine_distance_matrix(const std::vector<GlobalCode>& codes) {
  const int n = static_cast<int>(codes.size());
  Eigen::MatrixXd dist(n, n);
  for (int i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      double ni = codes[i].vector.norm(), nj = codes[j].vector.norm();
      double s = (ni > 0.0 && nj > 0.0) ? codes[i].vector.dot(codes[j].vector) / (ni * nj) : 0.0;
      dist(i, j) = dist(j, i) = 1.0 - s;
    }
  }
  return dist;
}

RetrievalResult late_fuse(const std::vector<Eigen::MatrixXd>& distances,
                          const std::vector<double>& weights,
                          const std::vector<std::string>& labels,
                          const std::vector<std::string>& shape_ids) {
  if (distances.empty() || distances.size() != weights.size())
    throw std::invalid_argument("late fusion needs one weight per distance matrix");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("fusion weights must be nonnegative");
    wsum += w;
  }
  if (wsum <= 0.0) throw std::invalid_argument("fusion weights must not all be zero");

  const long n = distances.front().rows();
  Eigen::MatrixXd fused = Eigen::MatrixXd::Zero(n, n);
  for (size_t m = 0; m < distances.size(); ++m) {
    const Eigen::MatrixXd& D = distances[m];
    if (D.rows() != n || D.cols() != n)
      throw std::invalid_argument("fusion matrices must share one shape");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j) {
        if (i == j) continue;
        lo = std::min(lo, D(i, j));
        hi = std::max(hi, D(i, j));
      }
    double span = hi - lo;
    Eigen::MatrixXd norm(n, n);
    if (span <= 0.0) {
      norm.setZero(); // constant matrix carries no ranking signal
    } else {
      norm = (D.array() - lo) / span;
    }
    fused += (weights[m] / wsum) * norm;
  }
  return retrieve_distances(fused, labels, shape_ids);
}

DescriptorMatrix concat_local(const std::vector<const DescriptorMatrix*>& families) {
  if (families.empty()) throw std::invalid_argument("nothing to concatenate");
  const int n = families.front()->num_vertices();
  int channels = 0;
  for (const auto* f : families) {
    if (f->num_vertices() != n)
      throw std::invalid_argument("vertex count mismatch in concatenation");
    channels += f->num_channels();
  }

  DescriptorMatrix out;
  out.family = "concat";
  out.rows.resize(n, channels);
  std::string family_list;
  int at = 0;
  for (const auto* f : families) {
    Eigen::MatrixXd z = f->rows;
    for (int c = 0; c < z.cols(); ++c) {
      double mean = z.col(c).mean();
      double sigma = std::sqrt((z.col(c).array() - mean).square().mean());
      z.col(c) = (z.col(c).array() - mean) / (sigma + 1e-12);
    }
    out.rows.middleCols(at, z.cols()) = z;
    for (const auto& name : f->channel_names)
      out.channel_names.push_back(f->family + ":" + name);
    if (!family_list.empty()) family_list += ",";
    family_list += "\"" + f->family + "\"";
    at += static_cast<int>(z.cols());
  }
  out.params = "{\"family\":\"concat\",\"families\":[" + family_list + "]}";
  return out;
}

TimingReport timing_harness(int num_shapes, const std::function<void(int)>& extract) {
  if (num_shapes < 1) throw std::invalid_argument("timing needs at least one shape");
  TimingReport report;
  report.shapes = num_shapes;
  auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < num_shapes; ++i) extract(i);
  auto stop = std::chrono::steady_clock::now();
  report.seconds_per_shape =
      std::chrono::duration<double>(stop - start).count() / static_cast<double>(num_shapes);
#if defined(__clang__)
  report.environment = "clang single-thread";
#elif defined(__GNUC__)
  report.environment = "gcc single-thread";
#else
  report.environment = "unknown single-thread";
#endif
  return report;
}

} // namespace dgm
