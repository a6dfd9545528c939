#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "doctest.h"
#include "dgm/fixtures.hpp"
#include "dgm/operators.hpp"

using namespace dgm;

namespace {

// regular tetrahedron, outward-oriented, left at its natural scale
Mesh tetrahedron() {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  m.faces.resize(4, 3);
  m.faces << 0, 1, 2, 0, 2, 3, 0, 3, 1, 1, 3, 2;
  m.shape_id = "tetra";
  return m;
}

// unit square split along the 0-2 diagonal; both triangles are right isoceles
Mesh unit_square() {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 0, 2, 3;
  m.shape_id = "square";
  return m;
}

Eigen::MatrixXd dense_system(const OperatorPair& ops, double t) {
  Eigen::MatrixXd A = t * Eigen::MatrixXd(ops.L);
  A.diagonal() += ops.M;
  A.diagonal().array() += ops.epsilon;
  return A;
}

// dense generalized eigensolver via the symmetric whitening M^{-1/2} L M^{-1/2}
std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_eigs(const OperatorPair& ops) {
  Eigen::VectorXd inv_sqrt = ops.M.array().rsqrt();
  Eigen::MatrixXd B =
      inv_sqrt.asDiagonal() * Eigen::MatrixXd(ops.L) * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  return {es.eigenvalues(), inv_sqrt.asDiagonal() * es.eigenvectors()};
}

} // namespace

TEST_CASE("cotangent weights on the unit square match the hand computation") {
  OperatorPair ops = assemble(unit_square());
  Eigen::MatrixXd L(ops.L);

  // right angles face the diagonal, so its cotangent weight vanishes
  CHECK(std::abs(L(0, 2)) < 1e-12);
  // every boundary edge sees a single 45-degree opposite corner: -cot(45)/2
  for (auto [a, b] : {std::pair{0, 1}, {1, 2}, {2, 3}, {3, 0}})
    CHECK(L(a, b) == doctest::Approx(-0.5).epsilon(1e-12));
  for (int i = 0; i < 4; ++i) CHECK(L(i, i) == doctest::Approx(1.0).epsilon(1e-12));

  // lumped mass: one third of incident face area (faces are 1/2 each)
  CHECK(ops.M(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ops.M(1) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(ops.M(2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(ops.M(3) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(ops.M.sum() == doctest::Approx(total_surface_area(unit_square())).epsilon(1e-12));
}

TEST_CASE("stiffness annihilates constants and is positive semidefinite") {
  for (const Mesh& m : {make_icosphere(2), make_torus(14, 10), tetrahedron()}) {
    OperatorPair ops = assemble(m);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(ops.size());
    CHECK((ops.L * ones).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((Eigen::RowVectorXd::Ones(ops.size()) * ops.L).cwiseAbs().maxCoeff() < 1e-10);

    RngStream rng(7);
    for (int trial = 0; trial < 8; ++trial) {
      Eigen::VectorXd x(ops.size());
      for (int i = 0; i < x.size(); ++i) x(i) = rng.next_normal();
      CHECK(x.dot(ops.L * x) > -1e-10);
    }
    CHECK((ops.M.array() > 0.0).all());
  }
}

TEST_CASE("preprocessed meshes carry unit total mass") {
  CHECK(assemble(make_icosphere(3)).M.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(assemble(make_two_lobed_blob(2)).M.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("shifted solve matches a dense factorization on the tetrahedron") {
  OperatorPair ops = assemble(tetrahedron());
  RngStream rng(11);
  for (double t : {1e-3, 0.05, 1.0}) {
    Eigen::VectorXd b(ops.size());
    for (int i = 0; i < b.size(); ++i) b(i) = rng.next_normal();
    Eigen::VectorXd u = solve_shifted(ops, t, b);
    Eigen::VectorXd u_dense = dense_system(ops, t).ldlt().solve(b);
    CHECK((u - u_dense).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("solves conserve the regularized mass sum") {
  OperatorPair ops = assemble(make_icosphere(2));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(ops.size());
  b(0) = 1.0; // impulse
  for (double t : {0.01, 0.07, 0.15}) {
    Eigen::VectorXd u = solve_shifted(ops, t, b);
    double lhs = ops.M.dot(u) + ops.epsilon * u.sum();
    CHECK(lhs == doctest::Approx(b.sum()).epsilon(1e-9));
  }
}

TEST_CASE("a factored solver is reusable across right-hand sides") {
  OperatorPair ops = assemble(make_icosphere(1));
  ShiftedSolver solver(ops, 0.05);
  CHECK(solver.t() == 0.05);
  CHECK(solver.epsilon() == ops.epsilon);

  RngStream rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd b(ops.size());
    for (int i = 0; i < b.size(); ++i) b(i) = rng.next_normal();
    Eigen::VectorXd via_member = solver.solve(b);
    Eigen::VectorXd via_oneshot = solve_shifted(ops, 0.05, b);
    CHECK((via_member - via_oneshot).cwiseAbs().maxCoeff() < 1e-12);
    // const solve is stable call-to-call
    CHECK((solver.solve(b) - via_member).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("large diffusion times flatten the solution toward a constant") {
  // at t = 1e3 every non-constant mode is damped by ~1/(1 + t lambda) < 1e-4
  OperatorPair ops = assemble(make_icosphere(2));
  Eigen::VectorXd b = ops.M; // unit-integral source
  Eigen::VectorXd u = solve_shifted(ops, 1e3, b);
  double mean = u.mean();
  CHECK(mean > 0.0);
  CHECK((u.array() - mean).abs().maxCoeff() / mean < 1e-3);
}

TEST_CASE("assembly commutes with vertex relabeling") {
  Mesh m = make_icosphere(1);
  OperatorPair ops = assemble(m);
  RngStream rng(3);
  std::vector<int> perm = random_permutation(m.num_vertices(), rng);
  OperatorPair ops_p = assemble(permute_vertices(m, perm));

  Eigen::MatrixXd L(ops.L), Lp(ops_p.L);
  double max_err = 0.0;
  for (int i = 0; i < m.num_vertices(); ++i) {
    max_err = std::max(max_err, std::abs(ops_p.M(perm[i]) - ops.M(i)));
    for (int j = 0; j < m.num_vertices(); ++j)
      max_err = std::max(max_err, std::abs(Lp(perm[i], perm[j]) - L(i, j)));
  }
  CHECK(max_err < 1e-12);
}

TEST_CASE("partial eigenpairs agree with a dense generalized solve") {
  OperatorPair ops = assemble(make_icosphere(2));
  const int r = 10;
  EigenBasis basis = partial_eigs(ops, r);
  REQUIRE(basis.count() == r);
  REQUIRE(basis.phis.cols() == r);
  REQUIRE(basis.phis.rows() == ops.size());

  auto [ref_vals, ref_vecs] = dense_eigs(ops);
  for (int k = 0; k < r; ++k) {
    CHECK(std::abs(basis.lambdas(k) - ref_vals(k)) <
          1e-6 * std::max(1.0, std::abs(ref_vals(k))));
    if (k > 0) CHECK(basis.lambdas(k) >= basis.lambdas(k - 1) - 1e-12);
  }
  CHECK(basis.lambdas(0) <= 1e-6); // constant mode on a connected mesh

  // mass-orthonormality
  Eigen::MatrixXd gram =
      basis.phis.transpose() * ops.M.asDiagonal() * basis.phis;
  CHECK((gram - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff() < 1e-7);

  // eigen-residuals, scaled by the operator's own magnitude
  for (int k = 0; k < r; ++k) {
    Eigen::VectorXd lphi = ops.L * basis.phis.col(k);
    Eigen::VectorXd residual =
        lphi - basis.lambdas(k) * (ops.M.asDiagonal() * basis.phis.col(k));
    // absolute floor so the near-null constant mode (L phi ~ 0) is judged fairly
    CHECK(residual.norm() <= 1e-9 + 1e-7 * lphi.norm());
  }
}

TEST_CASE("solver rejects bad scales and degenerate inputs") {
  OperatorPair ops = assemble(tetrahedron());
  CHECK_THROWS_AS(ShiftedSolver(ops, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ShiftedSolver(ops, -0.1), std::invalid_argument);

  ShiftedSolver solver(ops, 0.05);
  CHECK(solver.solve(Eigen::VectorXd::Zero(4)).cwiseAbs().maxCoeff() == 0.0);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(4);
  bad(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solver.solve(bad), std::invalid_argument);
}

TEST_CASE("partial eigenpairs validate their arguments") {
  OperatorPair ops = assemble(tetrahedron());
  CHECK_THROWS_AS(partial_eigs(ops, 0), std::invalid_argument);
  CHECK(partial_eigs(ops, 4).count() == 4); // full spectrum of a 4-vertex mesh
  CHECK_THROWS_AS(partial_eigs(ops, 5), std::invalid_argument);
}
