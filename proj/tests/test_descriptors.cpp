#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "doctest.h"
#include "dgm/descriptors.hpp"
#include "dgm/fixtures.hpp"
#include "dgm/operators.hpp"
#include "dgm/seeding.hpp"

using namespace dgm;

namespace {

Mesh tetrahedron() {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  m.faces.resize(4, 3);
  m.faces << 0, 1, 2, 0, 2, 3, 0, 3, 1, 1, 3, 2;
  return m;
}

// eigendecomposition of the mass-whitened operator M^{-1/2} L M^{-1/2};
// shares only the assembled operators with the code under test
std::pair<Eigen::VectorXd, Eigen::MatrixXd> whitened_eigs(const OperatorPair& ops) {
  Eigen::VectorXd inv_sqrt = ops.M.array().rsqrt();
  Eigen::MatrixXd B = inv_sqrt.asDiagonal() * Eigen::MatrixXd(ops.L) * inv_sqrt.asDiagonal();
  B = 0.5 * (B + B.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  return {es.eigenvalues(), es.eigenvectors()};
}

// diag(exp(-t M^{-1} L)): whitening cancels on the diagonal, leaving V.^2 e^{-td}
Eigen::VectorXd expm_diag(const OperatorPair& ops, double t) {
  auto [d, V] = whitened_eigs(ops);
  return V.array().square().matrix() * (-t * d.array()).exp().matrix();
}

// diag((I + (t/m) M^{-1}L)^{-m}) via repeated dense solves
Eigen::VectorXd backward_euler_diag(const OperatorPair& ops, double t, int m) {
  const int n = ops.size();
  Eigen::MatrixXd A = Eigen::VectorXd(ops.M.cwiseInverse()).asDiagonal() * Eigen::MatrixXd(ops.L);
  Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n, n) + (t / m) * A;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(step);
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(n, n);
  for (int s = 0; s < m; ++s) X = lu.solve(X);
  return X.diagonal();
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::ArrayXd ca = a.array() - a.mean();
  Eigen::ArrayXd cb = b.array() - b.mean();
  double denom = std::sqrt(ca.square().sum() * cb.square().sum());
  return denom > 0.0 ? (ca * cb).sum() / denom : 0.0;
}

FieldStack toy_stack() {
  FieldStack stack;
  stack.scales = {0.25};
  stack.steps = 1;
  stack.mode = FieldMode::Heat;
  stack.seeds.indices = {0, 1, 2};
  Eigen::MatrixXd phi(2, 3);
  phi << 0.0, 1.0, 2.0, 5.0, 5.0, 5.0;
  stack.phi.push_back(phi);
  return stack;
}

} // namespace

TEST_CASE("moments match hand-computed population statistics") {
  Eigen::VectorXd constant(3);
  constant << 1.0, 1.0, 1.0;
  MomentVector c = moments(constant);
  CHECK(c.mean == 1.0);
  CHECK(c.variance == 0.0);
  CHECK(c.skewness == 0.0); // variance floor kicks in
  CHECK(c.kurtosis == 0.0);
  CHECK(c.min == 1.0);
  CHECK(c.max == 1.0);

  Eigen::VectorXd coin(2);
  coin << 0.0, 1.0;
  MomentVector b = moments(coin);
  CHECK(b.mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b.variance == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(b.skewness == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(b.kurtosis == doctest::Approx(-2.0).epsilon(1e-12)); // two-point excess

  Eigen::VectorXd skewed(3);
  skewed << 0.0, 0.0, 3.0;
  MomentVector s = moments(skewed);
  CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.variance == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s.skewness == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.kurtosis == doctest::Approx(-1.5).epsilon(1e-12));

  MomentVector one = moments(Eigen::VectorXd::Constant(1, 7.0));
  CHECK(one.mean == 7.0);
  CHECK(one.min == 7.0);
  CHECK(one.max == 7.0);

  CHECK_THROWS_AS(moments(Eigen::VectorXd()), std::invalid_argument);
}

TEST_CASE("normalization names round-trip") {
  for (auto n : {Normalization::Nonlinear, Normalization::LinearWhiten, Normalization::Raw})
    CHECK(normalization_from_name(normalization_name(n)) == n);
  CHECK_THROWS_AS(normalization_from_name("zscore"), std::invalid_argument);
}

TEST_CASE("raw local descriptor rows are per-vertex seed moments") {
  DescriptorMatrix d = dgm_local(toy_stack(), Normalization::Raw);
  REQUIRE(d.num_vertices() == 2);
  REQUIRE(d.num_channels() == 6);
  CHECK(d.family == "dgm");
  REQUIRE(d.channel_names.size() == 6);
  CHECK(d.channel_names[0] == "t0.25_mean");
  CHECK(d.channel_names[3] == "t0.25_kurt");

  // vertex 0 sees {0,1,2} across seeds
  CHECK(d.rows(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.rows(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d.rows(0, 2) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  CHECK(d.rows(0, 3) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(d.rows(0, 4) == 0.0);
  CHECK(d.rows(0, 5) == 2.0);

  // vertex 1 sees a constant {5,5,5}
  CHECK(d.rows(1, 0) == 5.0);
  CHECK(d.rows(1, 1) == 0.0);
  CHECK(d.rows(1, 3) == 0.0);
  CHECK(d.rows(1, 5) == 5.0);

  FieldStack empty;
  CHECK_THROWS_AS(dgm_local(empty, Normalization::Raw), std::invalid_argument);
}

TEST_CASE("nonlinear normalization z-scores then compresses each channel") {
  DescriptorMatrix d = dgm_local(toy_stack(), Normalization::Nonlinear);
  // the mean channel held {1,5}: z = {-1,+1}, then sign(x) log1p(|x|)
  CHECK(d.rows(0, 0) == doctest::Approx(-std::log(2.0)).epsilon(1e-9));
  CHECK(d.rows(1, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("whitened normalization decorrelates the surviving directions") {
  Mesh m = make_icosphere(2);
  OperatorPair ops = assemble(m);
  SeedSet seeds = fps_euclidean_deterministic(m, 8);
  FieldStack stack = build_field_stack(ops, seeds, {0.01, 0.07}, 1, false);
  DescriptorMatrix d = dgm_local(stack, Normalization::LinearWhiten);

  CHECK(d.channel_names[0].rfind("whitened_", 0) == 0);
  Eigen::MatrixXd centered = d.rows.rowwise() - d.rows.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(d.rows.rows());
  for (int i = 0; i < cov.rows(); ++i)
    for (int j = 0; j < cov.cols(); ++j) {
      if (i == j) // each retained direction has unit variance, dropped ones zero
        CHECK((std::abs(cov(i, i)) < 1e-6 || std::abs(cov(i, i) - 1.0) < 1e-6));
      else
        CHECK(std::abs(cov(i, j)) < 1e-6);
    }
}

TEST_CASE("tensor channels broadcast sorted covariance spectra") {
  Mesh m = make_icosphere(1);
  OperatorPair ops = assemble(m);
  FieldStack stack =
      build_field_stack(ops, fps_euclidean_deterministic(m, 4), {0.01, 0.07}, 1, false);
  DescriptorMatrix d = dgm_tensor_channels(m, ops.M, stack);

  REQUIRE(d.num_channels() == 6);
  CHECK(d.family == "dgm_tensor");
  CHECK(d.channel_names[0] == "t0.01_cov_eig0");
  for (int c = 0; c < 6; ++c) {
    // broadcast: every vertex carries the same value
    CHECK((d.rows.col(c).array() - d.rows(0, c)).abs().maxCoeff() == 0.0);
  }
  for (int si = 0; si < 2; ++si) {
    CHECK(d.rows(0, 3 * si) <= d.rows(0, 3 * si + 1));
    CHECK(d.rows(0, 3 * si + 1) <= d.rows(0, 3 * si + 2));
  }

  CHECK_THROWS_AS(dgm_tensor_channels(m, Eigen::VectorXd::Ones(3), stack),
                  std::invalid_argument);
}

TEST_CASE("eigen-basis heat signature matches the dense matrix exponential") {
  OperatorPair ops = assemble(tetrahedron());
  EigenBasis basis = partial_eigs(ops, 4); // full spectrum of the 4-vertex mesh
  std::vector<double> times{0.05, 0.2, 1.0};
  DescriptorMatrix d = hks(basis, times);

  REQUIRE(d.num_channels() == 3);
  for (size_t ti = 0; ti < times.size(); ++ti) {
    Eigen::VectorXd oracle = expm_diag(ops, times[ti]).cwiseQuotient(ops.M);
    CHECK((d.rows.col(static_cast<int>(ti)) - oracle).cwiseAbs().maxCoeff() < 1e-8);
  }

  SUBCASE("short times recover the inverse vertex mass") {
    DescriptorMatrix d0 = hks(basis, std::vector<double>{1e-9});
    for (int v = 0; v < 4; ++v)
      CHECK(d0.rows(v, 0) == doctest::Approx(1.0 / ops.M(v)).epsilon(1e-6));
  }

  SUBCASE("long times flatten to the constant mode on a unit-area mesh") {
    OperatorPair sphere_ops = assemble(make_icosphere(1));
    EigenBasis sphere_basis = partial_eigs(sphere_ops, 20);
    DescriptorMatrix dinf = hks(sphere_basis, std::vector<double>{1e3});
    for (int v = 0; v < dinf.num_vertices(); ++v)
      CHECK(dinf.rows(v, 0) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("default signature times bracket the spectrum") {
  OperatorPair ops = assemble(make_icosphere(1));
  EigenBasis basis = partial_eigs(ops, 12);
  std::vector<double> times = hks_default_times(basis, 8);
  REQUIRE(times.size() == 8);
  const double c = 4.0 * std::log(10.0);
  CHECK(times.front() == doctest::Approx(c / basis.lambdas(11)).epsilon(1e-12));
  CHECK(times.back() == doctest::Approx(c / basis.lambdas(1)).epsilon(1e-12));
  for (size_t i = 1; i < times.size(); ++i) CHECK(times[i] > times[i - 1]);

  EigenBasis tiny;
  tiny.lambdas = Eigen::VectorXd::Zero(1);
  tiny.phis = Eigen::MatrixXd::Ones(4, 1);
  CHECK_THROWS_AS(hks_default_times(tiny, 4), std::invalid_argument);
  CHECK_THROWS_AS(hks(tiny, 4), std::invalid_argument);
}

TEST_CASE("scale-invariant signature ignores global rescaling") {
  // Scaling the mesh by 2 divides eigenvalues by 4, shifting the log2-time
  // axis by exactly 32 samples; Fourier magnitudes are unchanged up to the
  // content that crosses the window boundary. Place the spectral decay well
  // inside the fixed tau window (raw scale ~2000, low-order modes only) so
  // that boundary leakage is the only residual; it floors near 7e-6 because
  // samples entering at one edge and leaving at the other cannot both be
  // silenced over a 24-octave window.
  Mesh m = make_icosphere(2);
  m.vertices *= 2000.0;
  Mesh scaled = m;
  scaled.vertices *= 2.0; // raw rescale, deliberately not re-preprocessed

  EigenBasis a = partial_eigs(assemble(m), 4);
  EigenBasis b = partial_eigs(assemble(scaled), 4);
  DescriptorMatrix da = sihks(a);
  DescriptorMatrix db = sihks(b);

  REQUIRE(da.num_channels() == 6);
  CHECK(da.channel_names[0] == "fmag0");
  CHECK(da.rows.cwiseAbs().maxCoeff() > 1.0); // the window actually saw the decay
  CHECK((da.rows - db.rows).cwiseAbs().maxCoeff() < 1e-5);

  SUBCASE("a spectrally empty window gives a near-zero signature") {
    // unit-area meshes have lambda_2 ~ 25, so all heat is gone before the
    // first sample at t = 2: the log-HKS curve is flat and the magnitudes
    // collapse to numerical dust
    EigenBasis u = partial_eigs(assemble(make_icosphere(2)), 30);
    CHECK(sihks(u).rows.cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("energy signature weights sum to one per bin") {
  // all-ones eigenfunctions make every bin integrate its normalized filter
  EigenBasis fake;
  fake.lambdas.resize(4);
  fake.lambdas << 0.0, 1.0, 4.0, 9.0;
  fake.phis = Eigen::MatrixXd::Ones(5, 4);
  DescriptorMatrix d = wks(fake, 10);
  REQUIRE(d.num_channels() == 10);
  for (int v = 0; v < 5; ++v)
    for (int b = 0; b < 10; ++b) CHECK(d.rows(v, b) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("validation") {
    EigenBasis two;
    two.lambdas = Eigen::VectorXd::Zero(2);
    two.phis = Eigen::MatrixXd::Ones(3, 2);
    CHECK_THROWS_AS(wks(two, 4), std::invalid_argument);

    EigenBasis flat;
    flat.lambdas.resize(3);
    flat.lambdas << 0.0, 5.0, 5.0; // zero log-energy span
    flat.phis = Eigen::MatrixXd::Ones(3, 3);
    CHECK_THROWS_AS(wks(flat, 4), std::invalid_argument);
  }

  SUBCASE("real basis produces finite nonnegative responses") {
    EigenBasis basis = partial_eigs(assemble(make_icosphere(1)), 16);
    DescriptorMatrix real = wks(basis, 12);
    CHECK(real.rows.allFinite());
    CHECK(real.rows.minCoeff() >= 0.0);
  }
}

TEST_CASE("scale-moment summary combines temporal and ring statistics") {
  DescriptorMatrix base;
  base.family = "hks";
  base.rows.resize(3, 3);
  base.rows << 1, 1, 1, 2, 2, 2, 3, 3, 3;
  base.channel_names = {"a", "b", "c"};

  EdgeGraph path;
  path.adjacency.resize(3);
  path.adjacency[0].push_back({1, 1.0});
  path.adjacency[1].push_back({0, 1.0});
  path.adjacency[1].push_back({2, 1.0});
  path.adjacency[2].push_back({1, 1.0});

  DescriptorMatrix d = gmsd(base, path);
  CHECK(d.family == "gmsd_hks");
  REQUIRE(d.num_channels() == 6);
  REQUIRE(d.channel_names[0] == "temporal_mean");

  // vertex 1: own constant 2; ring {1,3} has mean 2 and spread 1
  Eigen::RowVectorXd v1(6);
  v1 << 2, 0, 0, 2, 1, 0;
  CHECK((d.rows.row(1) - v1).cwiseAbs().maxCoeff() < 1e-12);
  // vertex 0: single neighbor 1
  Eigen::RowVectorXd v0(6);
  v0 << 1, 0, 0, 2, 0, 0;
  CHECK((d.rows.row(0) - v0).cwiseAbs().maxCoeff() < 1e-12);

  SUBCASE("isolated vertices fall back to their own statistics") {
    EdgeGraph loner;
    loner.adjacency.resize(3);
    DescriptorMatrix iso = gmsd(base, loner);
    CHECK(iso.rows(2, 3) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(iso.rows(2, 4) == 0.0);
  }

  SUBCASE("validation") {
    DescriptorMatrix narrow;
    narrow.rows.resize(3, 2);
    narrow.rows.setZero();
    CHECK_THROWS_AS(gmsd(narrow, path), std::invalid_argument);
    EdgeGraph wrong;
    wrong.adjacency.resize(5);
    CHECK_THROWS_AS(gmsd(base, wrong), std::invalid_argument);
  }
}

TEST_CASE("power iteration brackets the top eigenvalue") {
  OperatorPair ops = assemble(tetrahedron());
  auto [d, V] = whitened_eigs(ops);
  double top = d.maxCoeff();
  double bound = spectral_upper_bound(ops);
  CHECK(bound >= top * (1.0 - 1e-6));
  CHECK(bound <= top * 1.05);

  std::vector<double> times = approx_heat_times(ops, 5);
  REQUIRE(times.size() == 5);
  CHECK(times.front() == doctest::Approx(4.0 * std::log(10.0) / bound).epsilon(1e-9));
  CHECK(times.back() == doctest::Approx(1000.0 * times.front()).epsilon(1e-9));
  for (size_t i = 1; i < times.size(); ++i) CHECK(times[i] > times[i - 1]);
}

TEST_CASE("Chebyshev diagonal estimate is exact with exhaustive probes") {
  OperatorPair ops = assemble(tetrahedron());
  double lmax = spectral_upper_bound(ops);
  std::vector<double> times{1.0 / lmax, 10.0 / lmax}; // well inside degree-40 reach
  DescriptorMatrix d = hks_cheb(ops, times, 40, /*probes=*/4, 13);

  for (size_t ti = 0; ti < times.size(); ++ti) {
    Eigen::VectorXd oracle = expm_diag(ops, times[ti]);
    CHECK((d.rows.col(static_cast<int>(ti)) - oracle).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("near-zero time gives a unit diagonal even with few probes") {
    DescriptorMatrix d0 = hks_cheb(ops, {1e-12}, 16, 2, 13);
    for (int v = 0; v < 4; ++v) CHECK(d0.rows(v, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("stochastic probes are seed-reproducible") {
    DescriptorMatrix a = hks_cheb(ops, times, 16, 2, 13);
    DescriptorMatrix b = hks_cheb(ops, times, 16, 2, 13);
    DescriptorMatrix c = hks_cheb(ops, times, 16, 2, 14);
    CHECK((a.rows - b.rows).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.rows - c.rows).cwiseAbs().maxCoeff() > 0.0);
  }

  CHECK_THROWS_AS(hks_cheb(ops, times, 0, 2, 13), std::invalid_argument);
  CHECK_THROWS_AS(hks_cheb(ops, times, 16, 0, 13), std::invalid_argument);
}

TEST_CASE("backward-Euler diagonal matches its dense oracle exactly") {
  OperatorPair ops = assemble(tetrahedron());
  std::vector<double> times = approx_heat_times(ops, 3);
  const int steps = 4;
  DescriptorMatrix d = hks_pade(ops, times, steps, /*probes=*/4, 13);

  for (size_t ti = 0; ti < times.size(); ++ti) {
    Eigen::VectorXd oracle = backward_euler_diag(ops, times[ti], steps);
    CHECK((d.rows.col(static_cast<int>(ti)) - oracle).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("more substeps close in on the true exponential") {
    double t = times[1];
    Eigen::VectorXd truth = expm_diag(ops, t);
    DescriptorMatrix one = hks_pade(ops, {t}, 1, 4, 13);
    DescriptorMatrix four = hks_pade(ops, {t}, 4, 4, 13);
    double err1 = (one.rows.col(0) - truth).norm();
    double err4 = (four.rows.col(0) - truth).norm();
    CHECK(err4 < err1);
  }

  CHECK_THROWS_AS(hks_pade(ops, times, 0, 2, 13), std::invalid_argument);
  CHECK_THROWS_AS(hks_pade(ops, times, 4, 0, 13), std::invalid_argument);
}

TEST_CASE("landmark proxy tracks the dense signature's spatial pattern") {
  Mesh m = make_two_lobed_blob(2);
  EdgeGraph g = build_edge_graph(m);
  DescriptorMatrix proxy = hks_mr_proxy(m, g, 24, 6);
  REQUIRE(proxy.num_channels() == 6);
  CHECK(proxy.rows.allFinite());
  CHECK(proxy.rows.minCoeff() > 0.0);

  // recover the proxy's own times from its channel names, then compare the
  // vertex pattern to the dense eigen signature at those same times
  std::vector<double> times;
  for (const auto& name : proxy.channel_names) times.push_back(std::stod(name.substr(1)));
  OperatorPair ops = assemble(m);
  EigenBasis basis = partial_eigs(ops, 60);
  DescriptorMatrix dense = hks(basis, times);
  double r = pearson(proxy.rows.col(0), dense.rows.col(0));
  CHECK(r > 0.4);

  SUBCASE("deterministic and clamped") {
    DescriptorMatrix again = hks_mr_proxy(m, g, 24, 6);
    CHECK((proxy.rows - again.rows).cwiseAbs().maxCoeff() == 0.0);
    Mesh tiny = make_icosphere(1);
    DescriptorMatrix clamped = hks_mr_proxy(tiny, build_edge_graph(tiny), 500, 4);
    CHECK(clamped.num_vertices() == tiny.num_vertices());
    CHECK_THROWS_AS(hks_mr_proxy(tiny, build_edge_graph(tiny), 3, 4),
                    std::invalid_argument);
  }
}
