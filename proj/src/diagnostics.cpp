#include "dgm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace dgm {

std::vector<SoftVoronoiRow> soft_voronoi_stats(const FieldStack& stack, double tau) {
  if (stack.num_seeds() < 2) throw std::invalid_argument("soft voronoi needs at least 2 seeds");
  if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
  const int n = stack.num_vertices();
  const int k = stack.num_seeds();
  const double logk = std::log(static_cast<double>(k));

  std::vector<SoftVoronoiRow> rows;
  for (int si = 0; si < stack.num_scales(); ++si) {
    const Eigen::MatrixXd& phi = stack.phi[si];
    double entropy_sum = 0.0, margin_sum = 0.0;
    for (int v = 0; v < n; ++v) {
      // softmax of -phi/tau, shifted by the row minimum for stability
      double lo = phi.row(v).minCoeff();
      double z = 0.0;
      Eigen::VectorXd p(k);
      for (int s = 0; s < k; ++s) {
        p[s] = std::exp(-(phi(v, s) - lo) / tau);
        z += p[s];
      }
      p /= z;
      double h = 0.0;
      double top1 = 0.0, top2 = 0.0;
      for (int s = 0; s < k; ++s) {
        if (p[s] > 0.0) h -= p[s] * std::log(p[s]);
        if (p[s] > top1) {
          top2 = top1;
          top1 = p[s];
        } else if (p[s] > top2) {
          top2 = p[s];
        }
      }
      entropy_sum += h / logk;
      margin_sum += top1 - top2;
    }
    rows.push_back({stack.scales[si], entropy_sum / n, margin_sum / n});
  }
  return rows;
}

namespace {

// Ridge regression with unpenalized intercept: X, Y are centered on the
// training means internally; returns pooled held-out R^2.
double ridge_heldout_r2(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                        const std::vector<int>& train, const std::vector<int>& test,
                        double lambda) {
  const int d = static_cast<int>(X.cols());
  Eigen::MatrixXd Xt(train.size(), X.cols()), Yt(train.size(), Y.cols());
  for (size_t i = 0; i < train.size(); ++i) {
    Xt.row(static_cast<int>(i)) = X.row(train[i]);
    Yt.row(static_cast<int>(i)) = Y.row(train[i]);
  }
  Eigen::RowVectorXd xmean = Xt.colwise().mean();
  Eigen::RowVectorXd ymean = Yt.colwise().mean();
  Xt.rowwise() -= xmean;
  Yt.rowwise() -= ymean;
  Eigen::MatrixXd gram = Xt.transpose() * Xt + lambda * Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd W = gram.ldlt().solve(Xt.transpose() * Yt);

  double sse = 0.0, sst = 0.0;
  Eigen::RowVectorXd test_mean = Eigen::RowVectorXd::Zero(Y.cols());
  for (int i : test) test_mean += Y.row(i);
  test_mean /= static_cast<double>(test.size());
  for (int i : test) {
    Eigen::RowVectorXd pred = (X.row(i) - xmean) * W + ymean;
    sse += (pred - Y.row(i)).squaredNorm();
    sst += (Y.row(i) - test_mean).squaredNorm();
  }
  if (sst <= 0.0) return sse <= 1e-18 ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

void split_indices(int n, double train_fraction, RngStream& rng, std::vector<int>& train,
                   std::vector<int>& test) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_index(static_cast<uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }
  int cut = std::max(1, static_cast<int>(std::llround(train_fraction * n)));
  cut = std::min(cut, n - 1);
  train.assign(order.begin(), order.begin() + cut);
  test.assign(order.begin() + cut, order.end());
}

} // namespace

std::vector<MomentCompressionRow> moment_compression(const FieldStack& stack, int sample,
                                                     uint64_t rng_seed) {
  if (sample < 50) throw std::invalid_argument("moment compression needs a sample of >= 50");
  const int n = stack.num_vertices();
  const int k = stack.num_seeds();
  sample = std::min(sample, n);

  RngStream pick_rng(hash64("moment_compression_sample", rng_seed));
  std::vector<int> picks = pick_rng.sample_without_replacement(n, sample);

  std::vector<MomentCompressionRow> rows;
  for (int si = 0; si < stack.num_scales(); ++si) {
    const Eigen::MatrixXd& phi = stack.phi[si];
    Eigen::MatrixXd sorted(sample, k);  // targets: sorted seed responses
    Eigen::MatrixXd feats(sample, 6);   // inputs: the moment channels
    for (int i = 0; i < sample; ++i) {
      Eigen::VectorXd row = phi.row(picks[i]).transpose();
      MomentVector m = moments(row);
      feats.row(i) << m.mean, m.variance, m.skewness, m.kurtosis, m.min, m.max;
      std::sort(row.data(), row.data() + row.size());
      sorted.row(i) = row.transpose();
    }

    // PCA-6 share of the sorted-response variance
    Eigen::RowVectorXd mean = sorted.colwise().mean();
    Eigen::MatrixXd centered = sorted.rowwise() - mean;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(sample);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    double total = es.eigenvalues().cwiseMax(0.0).sum();
    double top6 = 0.0;
    for (int j = 0; j < std::min<int>(6, k); ++j)
      top6 += std::max(0.0, es.eigenvalues()[k - 1 - j]);
    double pca6 = total > 1e-18 ? top6 / total : 1.0; // constant rows: fully captured

    RngStream split_rng(hash64("moment_compression_split", rng_seed,
                               static_cast<uint64_t>(si)));
    std::vector<int> train, test;
    split_indices(sample, 0.8, split_rng, train, test);
    MomentCompressionRow row;
    row.scale = stack.scales[si];
    row.pca6_explained = pca6;
    row.ridge_r2 = ridge_heldout_r2(feats, sorted, train, test, 1e-3);
    row.ridge_r2_lo = ridge_heldout_r2(feats, sorted, train, test, 1e-5);
    row.ridge_r2_hi = ridge_heldout_r2(feats, sorted, train, test, 1e-1);
    rows.push_back(row);
  }
  return rows;
}

CsasReport csas(const DescriptorMatrix& source, const DescriptorMatrix& target,
                const std::vector<int>& correspondence, uint64_t rng_seed) {
  const int n = source.num_vertices();
  if (static_cast<int>(correspondence.size()) != n)
    throw std::invalid_argument("correspondence must cover every source row");
  for (int j : correspondence)
    if (j < 0 || j >= target.num_vertices())
      throw std::invalid_argument("correspondence index out of range");

  Eigen::MatrixXd Y(n, target.num_channels());
  for (int i = 0; i < n; ++i) Y.row(i) = target.rows.row(correspondence[i]);
  const Eigen::MatrixXd& X = source.rows;

  double ybar_norm = (Y.rowwise() - Y.colwise().mean()).norm();
  if (ybar_norm <= 1e-15) throw std::invalid_argument("target descriptor variance is degenerate");

  CsasReport report;
  double cos_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double ns = X.row(i).norm(), nt = Y.row(i).norm();
    cos_sum += (ns > 0.0 && nt > 0.0) ? X.row(i).dot(Y.row(i)) / (ns * nt) : 0.0;
  }
  report.direct_cosine = cos_sum / n;

  RngStream rng(hash64("csas_split", rng_seed));
  std::vector<int> train, test;
  split_indices(n, 0.8, rng, train, test);
  report.r2 = ridge_heldout_r2(X, Y, train, test, 1e-3);
  report.r2_lo = ridge_heldout_r2(X, Y, train, test, 1e-5);
  report.r2_hi = ridge_heldout_r2(X, Y, train, test, 1e-1);

  { // relative residual of the ridge-1e-3 map on the held-out rows
    const int d = static_cast<int>(X.cols());
    Eigen::MatrixXd Xt(train.size(), d), Yt(train.size(), Y.cols());
    for (size_t i = 0; i < train.size(); ++i) {
      Xt.row(static_cast<int>(i)) = X.row(train[i]);
      Yt.row(static_cast<int>(i)) = Y.row(train[i]);
    }
    Eigen::RowVectorXd xmean = Xt.colwise().mean(), ymean = Yt.colwise().mean();
    Xt.rowwise() -= xmean;
    Yt.rowwise() -= ymean;
    Eigen::MatrixXd W = (Xt.transpose() * Xt + 1e-3 * Eigen::MatrixXd::Identity(d, d))
                            .ldlt()
                            .solve(Xt.transpose() * Yt);
    Eigen::RowVectorXd test_mean = Eigen::RowVectorXd::Zero(Y.cols());
    for (int i : test) test_mean += Y.row(i);
    test_mean /= static_cast<double>(test.size());
    double num = 0.0, den = 0.0;
    for (int i : test) {
      Eigen::RowVectorXd pred = (X.row(i) - xmean) * W + ymean;
      num += (pred - Y.row(i)).squaredNorm();
      den += (Y.row(i) - test_mean).squaredNorm();
    }
    report.relative_residual = den > 0.0 ? std::sqrt(num / den) : 0.0;
  }

  int hits = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (target.rows.row(0) - X.row(i)).squaredNorm();
    for (int j = 1; j < target.num_vertices(); ++j) {
      double d = (target.rows.row(j) - X.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    hits += best == correspondence[i];
  }
  report.gt_nn_accuracy = static_cast<double>(hits) / n;
  return report;
}

std::vector<double> spectral_compressibility(const DescriptorMatrix& descriptors,
                                             const EigenBasis& basis, const Eigen::VectorXd& M,
                                             const std::vector<int>& k_list) {
  int kmax = *std::max_element(k_list.begin(), k_list.end());
  if (basis.count() < kmax)
    throw std::invalid_argument("eigenbasis too small for the requested k");
  const int n = descriptors.num_vertices();
  if (basis.phis.rows() != n || M.size() != n)
    throw std::invalid_argument("spectral compressibility: size mismatch");
  const double msum = M.sum();

  std::vector<double> out(k_list.size(), 0.0);
  int used = 0;
  for (int c = 0; c < descriptors.num_channels(); ++c) {
    Eigen::VectorXd f = descriptors.rows.col(c);
    f.array() -= M.dot(f) / msum; // remove the mass-weighted mean
    double energy = f.dot(M.cwiseProduct(f));
    if (energy <= 1e-18) continue; // constant channel carries nothing
    Eigen::VectorXd coef = basis.phis.transpose() * M.cwiseProduct(f);
    Eigen::VectorXd partial(kmax);
    double acc = 0.0;
    for (int i = 0; i < kmax; ++i) {
      acc += coef[i] * coef[i];
      partial[i] = acc;
    }
    for (size_t j = 0; j < k_list.size(); ++j)
      out[j] += std::min(1.0, partial[k_list[j] - 1] / energy);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("every descriptor channel is constant");
  for (double& x : out) x /= used;
  return out;
}

double persistence0d(const Eigen::VectorXd& field, const EdgeGraph& graph) {
  const int n = graph.num_vertices();
  if (field.size() != n) throw std::invalid_argument("field/graph size mismatch");
  if (count_connected_components(graph) != 1)
    throw std::invalid_argument("persistence needs a connected graph");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (field[a] != field[b]) return field[a] < field[b];
    return a < b;
  });
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[order[i]] = i;

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<double> birth(n, 0.0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };

  double total = 0.0;
  for (int step = 0; step < n; ++step) {
    int v = order[step];
    birth[v] = field[v];
    for (const auto& nb : graph.adjacency[v]) {
      int u = nb.vertex;
      if (rank[u] > rank[v]) continue; // edge enters when its later endpoint does
      int ru = find(u), rv = find(v);
      if (ru == rv) continue;
      // elder rule: the component with the earlier birth survives the merge
      int survivor = ru, dying = rv;
      if (birth[rv] < birth[ru] || (birth[rv] == birth[ru] && rv < ru)) {
        survivor = rv;
        dying = ru;
      }
      total += field[v] - birth[dying];
      parent[dying] = survivor;
    }
  }
  return total;
}

namespace {

Eigen::VectorXd lumped_vertex_masses(const Mesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (int f = 0; f < mesh.num_faces(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    Eigen::Vector3d e1 = mesh.vertices.row(b) - mesh.vertices.row(a);
    Eigen::Vector3d e2 = mesh.vertices.row(c) - mesh.vertices.row(a);
    double third = e1.cross(e2).norm() / 6.0;
    m[a] += third;
    m[b] += third;
    m[c] += third;
  }
  return m;
}

double weighted_median(std::vector<std::pair<double, double>>& value_weight) {
  std::sort(value_weight.begin(), value_weight.end());
  double total = 0.0;
  for (const auto& [v, w] : value_weight) total += w;
  double acc = 0.0;
  for (const auto& [v, w] : value_weight) {
    acc += w;
    if (acc >= 0.5 * total) return v;
  }
  return value_weight.back().first;
}

// rank-based ROC-AUC with midranks for ties
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return scores[a] < scores[b]; });
  std::vector<double> ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double mid = 0.5 * (i + j) + 1.0;
    for (int t = i; t <= j; ++t) ranks[order[t]] = mid;
    i = j + 1;
  }
  double pos_ranks = 0.0;
  long npos = 0, nneg = 0;
  for (int t = 0; t < n; ++t) {
    if (labels[t]) {
      pos_ranks += ranks[t];
      ++npos;
    } else {
      ++nneg;
    }
  }
  if (npos == 0 || nneg == 0) return 0.5;
  return (pos_ranks - 0.5 * npos * (npos + 1)) / (static_cast<double>(npos) * nneg);
}

} // namespace

SymmetrySideReport symmetry_side_probe(const DescriptorMatrix& descriptors, const Mesh& mesh,
                                       uint64_t rng_seed) {
  const int n = mesh.num_vertices();
  if (descriptors.num_vertices() != n)
    throw std::invalid_argument("descriptor/mesh size mismatch");

  // mass-weighted body frame
  Eigen::VectorXd m = lumped_vertex_masses(mesh);
  double msum = m.sum();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  for (int v = 0; v < n; ++v) center += m[v] * mesh.vertices.row(v).transpose();
  center /= msum;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int v = 0; v < n; ++v) {
    Eigen::Vector3d d = mesh.vertices.row(v).transpose() - center;
    cov += m[v] * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov); // ascending eigenvalues

  // lateral axis: of the two non-principal axes, take the one whose
  // coordinate distribution is most median-symmetric (smallest |skewness|)
  Eigen::Vector3d candidates[2] = {es.eigenvectors().col(0), es.eigenvectors().col(1)};
  double best_skew = std::numeric_limits<double>::infinity();
  Eigen::VectorXd lateral(n);
  for (const Eigen::Vector3d& axis : candidates) {
    Eigen::VectorXd coord(n);
    for (int v = 0; v < n; ++v)
      coord[v] = (mesh.vertices.row(v).transpose() - center).dot(axis);
    MomentVector mv = moments(coord);
    if (std::abs(mv.skewness) < best_skew) {
      best_skew = std::abs(mv.skewness);
      lateral = coord;
    }
  }

  std::vector<std::pair<double, double>> vw(n);
  for (int v = 0; v < n; ++v) vw[v] = {lateral[v], m[v]};
  double median = weighted_median(vw);
  double extent = lateral.maxCoeff() - lateral.minCoeff();
  if (extent <= 0.0) throw std::invalid_argument("no lateral spread to classify");

  std::vector<int> keep;
  for (int v = 0; v < n; ++v)
    if (std::abs(lateral[v] - median) >= 0.05 * extent) keep.push_back(v);
  int pos = 0;
  for (int v : keep) pos += lateral[v] > median;
  if (pos == 0 || pos == static_cast<int>(keep.size()))
    throw std::invalid_argument("one-class data after the median band drop");

  // standardized features for a plain gradient-descent logistic fit
  Eigen::MatrixXd X(keep.size(), descriptors.num_channels());
  Eigen::VectorXi y(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    X.row(static_cast<int>(i)) = descriptors.rows.row(keep[i]);
    y[static_cast<int>(i)] = lateral[keep[i]] > median;
  }
  for (int c = 0; c < X.cols(); ++c) {
    double mean = X.col(c).mean();
    double sigma = std::sqrt((X.col(c).array() - mean).square().mean());
    X.col(c) = (X.col(c).array() - mean) / (sigma + 1e-12);
  }

  RngStream rng(hash64("symmetry_split", rng_seed));
  std::vector<int> train, test;
  split_indices(static_cast<int>(keep.size()), 0.7, rng, train, test);

  const double l2 = 1e-4, lr = 0.5;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
  double b = 0.0;
  for (int epoch = 0; epoch < 500; ++epoch) {
    Eigen::VectorXd grad_w = l2 * w;
    double grad_b = 0.0;
    for (int i : train) {
      double z = X.row(i).dot(w) + b;
      double p = 1.0 / (1.0 + std::exp(-z));
      double err = p - y[i];
      grad_w += err * X.row(i).transpose() / static_cast<double>(train.size());
      grad_b += err / static_cast<double>(train.size());
    }
    w -= lr * grad_w;
    b -= lr * grad_b;
  }

  long tp = 0, tn = 0, fp = 0, fn = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i : test) {
    double z = X.row(i).dot(w) + b;
    int pred = z > 0.0;
    scores.push_back(z);
    labels.push_back(y[i]);
    if (y[i] && pred) ++tp;
    else if (y[i] && !pred) ++fn;
    else if (!y[i] && pred) ++fp;
    else ++tn;
  }
  SymmetrySideReport report;
  double tpr = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  double tnr = tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
  report.balanced_accuracy = 0.5 * (tpr + tnr);
  report.roc_auc = roc_auc(scores, labels);
  report.held_out = static_cast<int>(test.size());
  return report;
}

CorrespondenceReport nn_correspondence(const DescriptorMatrix& source,
                                       const DescriptorMatrix& target,
                                       const EdgeGraph& target_graph,
                                       const std::vector<int>& gt) {
  const int n = source.num_vertices();
  if (static_cast<int>(gt.size()) != n)
    throw std::invalid_argument("correspondence must cover every source row");
  for (int j : gt)
    if (j < 0 || j >= target.num_vertices())
      throw std::invalid_argument("correspondence index out of range");
  if (target.num_vertices() != target_graph.num_vertices())
    throw std::invalid_argument("target graph size mismatch");
  if (count_connected_components(target_graph) != 1)
    throw std::invalid_argument("correspondence needs a connected target");

  // double-sweep diameter estimate on the target
  std::vector<double> d0 = dijkstra(target_graph, 0);
  int a = static_cast<int>(std::max_element(d0.begin(), d0.end()) - d0.begin());
  std::vector<double> da = dijkstra(target_graph, a);
  double diameter = *std::max_element(da.begin(), da.end());
  if (!(diameter > 0.0)) throw std::invalid_argument("degenerate target diameter");

  std::map<int, std::vector<double>> memo; // Dijkstra per unique prediction
  double err_sum = 0.0;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (target.rows.row(0) - source.rows.row(i)).squaredNorm();
    for (int j = 1; j < target.num_vertices(); ++j) {
      double d = (target.rows.row(j) - source.rows.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    auto it = memo.find(best);
    if (it == memo.end()) it = memo.emplace(best, dijkstra(target_graph, best)).first;
    double err = it->second[gt[i]] / diameter;
    err_sum += err;
    hits += err <= 0.1;
  }
  CorrespondenceReport report;
  report.mean_geodesic_error = err_sum / n;
  report.hit_at_10 = static_cast<double>(hits) / n;
  report.diameter = diameter;
  return report;
}

SeedSet synchronized_seeds(const SeedSet& source_seeds, const std::vector<int>& gt) {
  SeedSet out;
  out.mode = source_seeds.mode;
  out.rng_seed = source_seeds.rng_seed;
  out.indices.reserve(source_seeds.indices.size());
  for (int s : source_seeds.indices) {
    if (s < 0 || s >= static_cast<int>(gt.size()))
      throw std::invalid_argument("correspondence is missing a seed");
    out.indices.push_back(gt[s]);
  }
  return out;
}

double seed_overlap(const SeedSet& a, const SeedSet& b) {
  if (a.size() != b.size() || a.size() == 0)
    throw std::invalid_argument("seed overlap needs equal nonempty sets");
  std::vector<int> sa = a.indices, sb = b.indices;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<int> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(a.size());
}

PermutationAlignment align_descriptors_after_permutation(const DescriptorMatrix& original,
                                                         const DescriptorMatrix& permuted,
                                                         const std::vector<int>& permutation) {
  if (original.num_vertices() != permuted.num_vertices() ||
      original.num_channels() != permuted.num_channels() ||
      static_cast<int>(permutation.size()) != original.num_vertices())
    throw std::invalid_argument("permutation alignment shape mismatch");

  Eigen::MatrixXd aligned(original.rows.rows(), original.rows.cols());
  for (int i = 0; i < original.num_vertices(); ++i)
    aligned.row(i) = permuted.rows.row(permutation[i]);

  PermutationAlignment result;
  double denom = original.rows.norm();
  result.local_relative_error =
      denom > 0.0 ? (aligned - original.rows).norm() / denom : (aligned - original.rows).norm();

  GlobalCode ga = pool(original), gb = pool(permuted);
  double na = ga.vector.norm(), nb = gb.vector.norm();
  result.global_cosine = (na > 0.0 && nb > 0.0) ? ga.vector.dot(gb.vector) / (na * nb) : 0.0;
  return result;
}

} // namespace dgm
