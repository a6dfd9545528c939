#include "dgm/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <stdexcept>

#include "dgm/seeding.hpp"

namespace dgm {

namespace {

std::string format_scale(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

std::string json_number_list(const std::vector<double>& xs) {
  std::string out = "[";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format_scale(xs[i]);
  }
  return out + "]";
}

} // namespace

MomentVector moments(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw std::invalid_argument("moments of an empty sample");
  const double k = static_cast<double>(values.size());
  MomentVector m;
  m.mean = values.mean();
  Eigen::ArrayXd centered = values.array() - m.mean;
  m.variance = centered.square().mean();
  m.min = values.minCoeff();
  m.max = values.maxCoeff();
  if (m.variance < 1e-24) {
    m.skewness = 0.0;
    m.kurtosis = 0.0;
  } else {
    double m3 = centered.cube().mean();
    double m4 = centered.square().square().mean();
    m.skewness = m3 / std::pow(m.variance, 1.5);
    m.kurtosis = m4 / (m.variance * m.variance) - 3.0;
  }
  (void)k;
  return m;
}

const char* normalization_name(Normalization n) {
  switch (n) {
    case Normalization::Nonlinear: return "nonlinear";
    case Normalization::LinearWhiten: return "linear_whiten";
    case Normalization::Raw: return "raw";
  }
  return "unknown";
}

Normalization normalization_from_name(const std::string& name) {
  if (name == "nonlinear") return Normalization::Nonlinear;
  if (name == "linear_whiten") return Normalization::LinearWhiten;
  if (name == "raw") return Normalization::Raw;
  throw std::invalid_argument("unknown normalization: " + name);
}

namespace {

void zscore_signed_log(Eigen::MatrixXd& rows) {
  for (int c = 0; c < rows.cols(); ++c) {
    double mean = rows.col(c).mean();
    double var = (rows.col(c).array() - mean).square().mean();
    double sigma = std::sqrt(var);
    rows.col(c) = (rows.col(c).array() - mean) / (sigma + 1e-12);
    for (int v = 0; v < rows.rows(); ++v) {
      double x = rows(v, c);
      rows(v, c) = (x >= 0.0 ? 1.0 : -1.0) * std::log1p(std::abs(x));
    }
  }
}

void pca_whiten(Eigen::MatrixXd& rows) {
  Eigen::RowVectorXd mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(rows.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);
  double floor = 1e-15 * std::max(evals.maxCoeff(), 1e-300);
  Eigen::VectorXd scale(evals.size());
  for (int i = 0; i < evals.size(); ++i)
    scale[i] = evals[i] > floor ? 1.0 / std::sqrt(evals[i]) : 0.0;
  rows = centered * es.eigenvectors() * scale.asDiagonal();
}

} // namespace

DescriptorMatrix dgm_local(const FieldStack& stack, Normalization normalization) {
  if (stack.phi.empty()) throw std::invalid_argument("field stack is empty");
  const int n = stack.num_vertices();
  const int ns = stack.num_scales();
  static const char* kMomentNames[6] = {"mean", "var", "skew", "kurt", "min", "max"};

  DescriptorMatrix out;
  out.family = "dgm";
  out.rows.resize(n, 6 * ns);
  for (int si = 0; si < ns; ++si) {
    const Eigen::MatrixXd& phi = stack.phi[si];
    for (int v = 0; v < n; ++v) {
      MomentVector m = moments(phi.row(v).transpose());
      out.rows(v, 6 * si + 0) = m.mean;
      out.rows(v, 6 * si + 1) = m.variance;
      out.rows(v, 6 * si + 2) = m.skewness;
      out.rows(v, 6 * si + 3) = m.kurtosis;
      out.rows(v, 6 * si + 4) = m.min;
      out.rows(v, 6 * si + 5) = m.max;
    }
    for (const char* name : kMomentNames)
      out.channel_names.push_back("t" + format_scale(stack.scales[si]) + "_" + name);
  }

  switch (normalization) {
    case Normalization::Nonlinear: zscore_signed_log(out.rows); break;
    case Normalization::LinearWhiten: pca_whiten(out.rows); break;
    case Normalization::Raw: break;
  }
  if (normalization == Normalization::LinearWhiten)
    for (auto& name : out.channel_names) name = "whitened_" + name;

  out.params = std::string("{\"family\":\"dgm\",\"mode\":\"") + field_mode_name(stack.mode) +
               "\",\"scales\":" + json_number_list(stack.scales) +
               ",\"steps\":" + std::to_string(stack.steps) +
               ",\"seeds\":" + std::to_string(stack.num_seeds()) +
               ",\"seed_mode\":\"" + seed_mode_name(stack.seeds.mode) +
               "\",\"normalization\":\"" + normalization_name(normalization) + "\"}";
  return out;
}

DescriptorMatrix dgm_tensor_channels(const Mesh& mesh, const Eigen::VectorXd& vertex_mass,
                                     const FieldStack& stack) {
  const int n = stack.num_vertices();
  if (mesh.num_vertices() != n || vertex_mass.size() != n)
    throw std::invalid_argument("tensor channels: size mismatch");
  const int ns = stack.num_scales();
  DescriptorMatrix out;
  out.family = "dgm_tensor";
  out.rows.resize(n, 3 * ns);
  for (int si = 0; si < ns; ++si) {
    Eigen::VectorXd w = stack.phi[si].rowwise().mean().cwiseProduct(vertex_mass);
    double wsum = w.sum();
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    if (wsum > 1e-300) {
      for (int v = 0; v < n; ++v) center += w[v] * mesh.vertices.row(v).transpose();
      center /= wsum;
    }
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int v = 0; v < n; ++v) {
      Eigen::Vector3d d = mesh.vertices.row(v).transpose() - center;
      cov += w[v] * d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    for (int j = 0; j < 3; ++j) {
      out.rows.col(3 * si + j).setConstant(es.eigenvalues()[j]);
      out.channel_names.push_back("t" + format_scale(stack.scales[si]) + "_cov_eig" +
                                  std::to_string(j));
    }
  }
  out.params = std::string("{\"family\":\"dgm_tensor\",\"scales\":") +
               json_number_list(stack.scales) + "}";
  return out;
}

// ---- spectral signatures ----

namespace {

std::vector<double> log_spaced(double lo, double hi, int count) {
  std::vector<double> xs(count);
  if (count == 1) {
    xs[0] = lo;
    return xs;
  }
  double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < count; ++i)
    xs[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / (count - 1));
  return xs;
}

Eigen::MatrixXd hks_values(const EigenBasis& basis, const std::vector<double>& times) {
  const int n = static_cast<int>(basis.phis.rows());
  Eigen::MatrixXd sq = basis.phis.array().square();
  Eigen::MatrixXd out(n, static_cast<int>(times.size()));
  for (size_t ti = 0; ti < times.size(); ++ti) {
    Eigen::VectorXd weights = (-times[ti] * basis.lambdas.array()).exp();
    out.col(static_cast<int>(ti)) = sq * weights;
  }
  return out;
}

} // namespace

std::vector<double> hks_default_times(const EigenBasis& basis, int count) {
  if (basis.count() < 2) throw std::invalid_argument("signature needs at least 2 eigenpairs");
  double l2 = basis.lambdas[1];
  double lr = basis.lambdas[basis.count() - 1];
  if (l2 <= 0.0)
    throw std::invalid_argument("second eigenvalue is nonpositive (disconnected mesh?)");
  const double c = 4.0 * std::log(10.0);
  return log_spaced(c / lr, c / l2, count);
}

DescriptorMatrix hks(const EigenBasis& basis, const std::vector<double>& times) {
  if (basis.count() < 2) throw std::invalid_argument("signature needs at least 2 eigenpairs");
  DescriptorMatrix out;
  out.family = "hks";
  out.rows = hks_values(basis, times);
  for (double t : times) out.channel_names.push_back("t" + format_scale(t));
  out.params = "{\"family\":\"hks\",\"times\":" + json_number_list(times) +
               ",\"eigenpairs\":" + std::to_string(basis.count()) + "}";
  return out;
}

DescriptorMatrix hks(const EigenBasis& basis, int count) {
  return hks(basis, hks_default_times(basis, count));
}

DescriptorMatrix sihks(const EigenBasis& basis) {
  if (basis.count() < 2) throw std::invalid_argument("signature needs at least 2 eigenpairs");
  const double tau_lo = 1.0, tau_hi = 25.0, dtau = 1.0 / 16.0;
  std::vector<double> times;
  for (double tau = tau_lo; tau <= tau_hi + 1e-12; tau += dtau)
    times.push_back(std::pow(2.0, tau));
  Eigen::MatrixXd h = hks_values(basis, times);

  const int n = static_cast<int>(h.rows());
  const int m = static_cast<int>(times.size()) - 1; // derivative sample count
  bool clamped = false;
  Eigen::MatrixXd logh(n, times.size());
  for (int v = 0; v < n; ++v)
    for (int j = 0; j < static_cast<int>(times.size()); ++j) {
      double x = h(v, j);
      if (x < 1e-300) {
        x = 1e-300;
        clamped = true;
      }
      logh(v, j) = std::log(x);
    }

  const int keep = 6;
  DescriptorMatrix out;
  out.family = "sihks";
  out.rows.resize(n, keep);
  for (int v = 0; v < n; ++v) {
    // forward difference of log-HKS along tau, then DFT magnitudes
    for (int c = 0; c < keep; ++c) {
      std::complex<double> acc(0.0, 0.0);
      for (int j = 0; j < m; ++j) {
        double d = logh(v, j + 1) - logh(v, j);
        double angle = -2.0 * std::numbers::pi * c * j / static_cast<double>(m);
        acc += d * std::complex<double>(std::cos(angle), std::sin(angle));
      }
      out.rows(v, c) = std::abs(acc);
    }
  }
  for (int c = 0; c < keep; ++c) out.channel_names.push_back("fmag" + std::to_string(c));
  out.params = std::string("{\"family\":\"sihks\",\"tau\":[1,25],\"dtau\":0.0625,") +
               "\"coeffs\":6,\"clamped\":" + (clamped ? "true" : "false") + "}";
  return out;
}

DescriptorMatrix wks(const EigenBasis& basis, int bins) {
  if (basis.count() < 3) throw std::invalid_argument("wks needs at least 3 eigenpairs");
  // use strictly positive eigenvalues; the kernel pair carries no energy scale
  std::vector<int> idx;
  for (int i = 0; i < basis.count(); ++i)
    if (basis.lambdas[i] > 0.0) idx.push_back(i);
  if (idx.size() < 2) throw std::invalid_argument("wks: not enough positive eigenvalues");
  double l2 = basis.lambdas[idx.front()];
  double lr = basis.lambdas[idx.back()];
  double span = std::log(lr) - std::log(l2);
  if (!(span > 0.0)) throw std::invalid_argument("wks: degenerate energy range");

  // self-consistent spacing: energies span [log l2 + 2s, log lr - 2s] with
  // s = 7*delta and delta the bin spacing => delta = span / (bins + 27)
  double delta = span / (bins + 27);
  double sigma = 7.0 * delta;
  double e0 = std::log(l2) + 2.0 * sigma;

  const int n = static_cast<int>(basis.phis.rows());
  DescriptorMatrix out;
  out.family = "wks";
  out.rows.resize(n, bins);
  for (int b = 0; b < bins; ++b) {
    double e = e0 + b * delta;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(basis.count());
    double wsum = 0.0;
    for (int i : idx) {
      double z = (e - std::log(basis.lambdas[i])) / sigma;
      w[i] = std::exp(-0.5 * z * z);
      wsum += w[i];
    }
    w /= wsum; // filter weights sum to 1
    out.rows.col(b) = basis.phis.array().square().matrix() * w;
    out.channel_names.push_back("e" + std::to_string(b));
  }
  out.params = "{\"family\":\"wks\",\"bins\":" + std::to_string(bins) +
               ",\"eigenpairs\":" + std::to_string(basis.count()) + "}";
  return out;
}

DescriptorMatrix gmsd(const DescriptorMatrix& base, const EdgeGraph& graph) {
  if (base.num_channels() < 3)
    throw std::invalid_argument("gmsd needs at least 3 scale channels");
  const int n = base.num_vertices();
  if (graph.num_vertices() != n) throw std::invalid_argument("gmsd: graph size mismatch");

  Eigen::VectorXd mu(n), var(n), skew(n);
  for (int v = 0; v < n; ++v) {
    MomentVector m = moments(base.rows.row(v).transpose());
    mu[v] = m.mean;
    var[v] = m.variance;
    skew[v] = m.skewness;
  }

  DescriptorMatrix out;
  out.family = "gmsd_" + base.family;
  out.rows.resize(n, 6);
  for (int v = 0; v < n; ++v) {
    const auto& nbrs = graph.adjacency[v];
    double ring_mu, ring_mu_var, ring_var;
    if (nbrs.empty()) { // isolated vertex falls back to its own statistics
      ring_mu = mu[v];
      ring_mu_var = 0.0;
      ring_var = var[v];
    } else {
      Eigen::VectorXd nm(static_cast<int>(nbrs.size())), nv(static_cast<int>(nbrs.size()));
      for (size_t i = 0; i < nbrs.size(); ++i) {
        nm[static_cast<int>(i)] = mu[nbrs[i].vertex];
        nv[static_cast<int>(i)] = var[nbrs[i].vertex];
      }
      ring_mu = nm.mean();
      ring_mu_var = (nm.array() - ring_mu).square().mean();
      ring_var = nv.mean();
    }
    out.rows.row(v) << mu[v], var[v], skew[v], ring_mu, ring_mu_var, ring_var;
  }
  out.channel_names = {"temporal_mean",  "temporal_var",  "temporal_skew",
                       "ring_mean_mean", "ring_var_mean", "ring_mean_var"};
  out.params = "{\"family\":\"" + out.family +
               "\",\"base_channels\":" + std::to_string(base.num_channels()) + "}";
  return out;
}

// ---- heat-kernel approximation baselines ----

double spectral_upper_bound(const OperatorPair& ops) {
  const int n = ops.size();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) v[i] += 1e-3 * std::cos(1.0 + i); // break symmetry
  v.normalize();
  double lambda = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::VectorXd w = (ops.L * v).cwiseQuotient(ops.M);
    double norm = w.norm();
    if (norm < 1e-300) throw SolverError("spectral upper bound estimate failed");
    double next = v.dot(w);
    w /= norm;
    if (iter > 10 && std::abs(next - lambda) <= 1e-6 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
    v = w;
  }
  if (!(lambda > 0.0)) throw SolverError("spectral upper bound estimate failed");
  return 1.01 * lambda; // small safety margin for the Chebyshev interval
}

std::vector<double> approx_heat_times(const OperatorPair& ops, int count) {
  double lmax = spectral_upper_bound(ops);
  double tmin = 4.0 * std::log(10.0) / lmax;
  return log_spaced(tmin, 1000.0 * tmin, count);
}

namespace {

// Ratio diagonal estimator: diag ~= (sum_z z .* f(A)z) ./ (sum_z z .* z).
// Exact when the probes form the canonical basis; Rademacher probes make the
// denominator the probe count.
struct DiagonalAccumulator {
  Eigen::MatrixXd numerator; // n x times
  Eigen::VectorXd denominator;

  DiagonalAccumulator(int n, int times)
      : numerator(Eigen::MatrixXd::Zero(n, times)), denominator(Eigen::VectorXd::Zero(n)) {}

  void add(const Eigen::VectorXd& z, const Eigen::MatrixXd& fz) {
    for (int c = 0; c < fz.cols(); ++c)
      numerator.col(c) += z.cwiseProduct(fz.col(c));
    denominator += z.cwiseProduct(z);
  }

  Eigen::MatrixXd diagonal() const {
    Eigen::MatrixXd out = numerator;
    for (int c = 0; c < out.cols(); ++c)
      out.col(c) = out.col(c).cwiseQuotient(denominator.cwiseMax(1e-300));
    return out;
  }
};

Eigen::VectorXd make_probe(int n, int index, int probes, RngStream& rng) {
  Eigen::VectorXd z(n);
  if (probes == n) { // exhaustive canonical probes
    z.setZero();
    z[index] = 1.0;
  } else {
    for (int i = 0; i < n; ++i) z[i] = rng.next_u64() & 1 ? 1.0 : -1.0;
  }
  return z;
}

// Chebyshev coefficients of f on [-1, 1] via Chebyshev-Gauss quadrature.
std::vector<double> chebyshev_coeffs(const std::function<double(double)>& f, int degree) {
  const int K = degree + 1;
  std::vector<double> fk(K);
  for (int k = 0; k < K; ++k)
    fk[k] = f(std::cos(std::numbers::pi * (k + 0.5) / K));
  std::vector<double> c(K);
  for (int j = 0; j < K; ++j) {
    double acc = 0.0;
    for (int k = 0; k < K; ++k)
      acc += fk[k] * std::cos(std::numbers::pi * j * (k + 0.5) / K);
    c[j] = (j == 0 ? 1.0 : 2.0) * acc / K;
  }
  return c;
}

} // namespace

DescriptorMatrix hks_cheb(const OperatorPair& ops, const std::vector<double>& times,
                          int degree, int probes, uint64_t rng_seed) {
  if (degree < 1 || probes < 1) throw std::invalid_argument("degree and probes must be >= 1");
  const int n = ops.size();
  const int nt = static_cast<int>(times.size());
  double lmax = spectral_upper_bound(ops);

  // y in [-1,1] maps to lambda = (y+1) lmax/2
  std::vector<std::vector<double>> coeffs(nt);
  for (int ti = 0; ti < nt; ++ti) {
    double t = times[ti];
    coeffs[ti] = chebyshev_coeffs(
        [&](double y) { return std::exp(-t * (y + 1.0) * lmax / 2.0); }, degree);
  }

  auto apply_A_scaled = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    // 2A/lmax - I with A = M^{-1} L
    return (2.0 / lmax) * (ops.L * x).cwiseQuotient(ops.M) - x;
  };

  RngStream rng(hash64("hks_cheb", rng_seed));
  DiagonalAccumulator acc(n, nt);
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd z = make_probe(n, p, probes, rng);
    Eigen::MatrixXd fz = Eigen::MatrixXd::Zero(n, nt);
    Eigen::VectorXd t_prev = z;
    Eigen::VectorXd t_curr = apply_A_scaled(z);
    for (int ti = 0; ti < nt; ++ti)
      fz.col(ti) = coeffs[ti][0] * t_prev + coeffs[ti][1] * t_curr;
    for (int j = 2; j <= degree; ++j) {
      Eigen::VectorXd t_next = 2.0 * apply_A_scaled(t_curr) - t_prev;
      for (int ti = 0; ti < nt; ++ti) fz.col(ti) += coeffs[ti][j] * t_next;
      t_prev = std::move(t_curr);
      t_curr = std::move(t_next);
    }
    acc.add(z, fz);
  }

  DescriptorMatrix out;
  out.family = "hks_cheb";
  out.rows = acc.diagonal();
  for (double t : times) out.channel_names.push_back("t" + format_scale(t));
  out.params = "{\"family\":\"hks_cheb\",\"degree\":" + std::to_string(degree) +
               ",\"probes\":" + std::to_string(probes) +
               ",\"rng_seed\":" + std::to_string(rng_seed) + "}";
  return out;
}

DescriptorMatrix hks_pade(const OperatorPair& ops, const std::vector<double>& times,
                          int steps, int probes, uint64_t rng_seed) {
  if (steps < 1 || probes < 1) throw std::invalid_argument("steps and probes must be >= 1");
  const int n = ops.size();
  const int nt = static_cast<int>(times.size());

  // (I + h M^{-1}L)^{-1} = (M + hL)^{-1} M, solved without the regularizer so
  // the surrogate matches the dense (I + hA)^{-steps} oracle exactly
  std::vector<ShiftedSolver> solvers;
  solvers.reserve(nt);
  for (double t : times) solvers.emplace_back(ops, t / steps, 0.0);

  RngStream rng(hash64("hks_pade", rng_seed));
  DiagonalAccumulator acc(n, nt);
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd z = make_probe(n, p, probes, rng);
    Eigen::MatrixXd fz(n, nt);
    for (int ti = 0; ti < nt; ++ti) {
      Eigen::VectorXd w = z;
      for (int s = 0; s < steps; ++s) w = solvers[ti].solve(ops.M.cwiseProduct(w));
      fz.col(ti) = w;
    }
    acc.add(z, fz);
  }

  DescriptorMatrix out;
  out.family = "hks_pade";
  out.rows = acc.diagonal();
  for (double t : times) out.channel_names.push_back("t" + format_scale(t));
  out.params = "{\"family\":\"hks_pade\",\"steps\":" + std::to_string(steps) +
               ",\"probes\":" + std::to_string(probes) +
               ",\"rng_seed\":" + std::to_string(rng_seed) + "}";
  return out;
}

DescriptorMatrix hks_mr_proxy(const Mesh& mesh, const EdgeGraph& graph, int landmarks,
                              int num_times) {
  const int n = mesh.num_vertices();
  landmarks = std::min(landmarks, n);
  if (landmarks < 4) throw std::invalid_argument("landmark proxy needs at least 4 landmarks");

  SeedSet lm = fps_geodesic_deterministic(mesh, graph, landmarks);
  std::vector<std::vector<double>> dist(landmarks);
  for (int l = 0; l < landmarks; ++l) dist[l] = dijkstra(graph, lm.indices[l]);

  // geodesic Voronoi assignment (ties toward the lower landmark index)
  std::vector<int> owner(n, 0);
  for (int v = 0; v < n; ++v)
    for (int l = 1; l < landmarks; ++l)
      if (dist[l][v] < dist[owner[v]][v]) owner[v] = l;

  // coarse graph: adjacent cells, affinity = 1 / landmark geodesic distance
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(landmarks, landmarks);
  for (int u = 0; u < n; ++u)
    for (const auto& nb : graph.adjacency[u]) {
      int a = owner[u], b = owner[nb.vertex];
      if (a == b || W(a, b) != 0.0) continue;
      double d = dist[a][lm.indices[b]];
      double w = 1.0 / std::max(d, 1e-12);
      W(a, b) = W(b, a) = w;
    }
  Eigen::MatrixXd Lc = Eigen::MatrixXd(W.rowwise().sum().asDiagonal()) - W;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Lc);
  if (es.info() != Eigen::Success) throw SolverError("coarse eigensolver failed");
  Eigen::VectorXd evals = es.eigenvalues().cwiseMax(0.0);

  // signature times from the coarse spectrum itself (the classic bracket)
  double l2 = 0.0;
  for (int i = 0; i < evals.size(); ++i)
    if (evals[i] > 1e-12) {
      l2 = evals[i];
      break;
    }
  if (l2 <= 0.0) throw std::invalid_argument("coarse landmark graph is disconnected");
  double lr = evals[evals.size() - 1];
  const double c4 = 4.0 * std::log(10.0);
  std::vector<double> times = log_spaced(c4 / lr, c4 / l2, num_times);

  Eigen::MatrixXd coarse(landmarks, num_times);
  Eigen::MatrixXd sq = es.eigenvectors().array().square();
  for (int ti = 0; ti < num_times; ++ti)
    coarse.col(ti) = sq * (-times[ti] * evals.array()).exp().matrix();

  // blend the 3 nearest landmarks by inverse distance; a vertex sitting on a
  // landmark takes that landmark's row exactly
  DescriptorMatrix out;
  out.family = "hks_mr_proxy";
  out.rows.resize(n, num_times);
  for (int v = 0; v < n; ++v) {
    int near[3] = {-1, -1, -1};
    for (int l = 0; l < landmarks; ++l) {
      for (int j = 0; j < 3; ++j) {
        if (near[j] < 0 || dist[l][v] < dist[near[j]][v]) {
          for (int s = 2; s > j; --s) near[s] = near[s - 1];
          near[j] = l;
          break;
        }
      }
    }
    if (dist[near[0]][v] <= 0.0) {
      out.rows.row(v) = coarse.row(near[0]);
      continue;
    }
    double wsum = 0.0;
    Eigen::RowVectorXd blend = Eigen::RowVectorXd::Zero(num_times);
    for (int j = 0; j < 3 && near[j] >= 0; ++j) {
      double w = 1.0 / dist[near[j]][v];
      blend += w * coarse.row(near[j]);
      wsum += w;
    }
    out.rows.row(v) = blend / wsum;
  }
  for (double t : times) out.channel_names.push_back("t" + format_scale(t));
  out.params = "{\"family\":\"hks_mr_proxy\",\"landmarks\":" + std::to_string(landmarks) +
               ",\"times\":" + std::to_string(num_times) + "}";
  return out;
}

} // namespace dgm
