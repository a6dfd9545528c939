#include "dgm/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/IterativeLinearSolvers>

namespace dgm {

namespace {

constexpr double kCotClamp = 1e6;

} // namespace

OperatorPair assemble(const Mesh& mesh) {
  const int n = mesh.num_vertices();
  OperatorPair ops;
  ops.M = Eigen::VectorXd::Zero(n);

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<size_t>(mesh.num_faces()) * 12);

  for (int f = 0; f < mesh.num_faces(); ++f) {
    int idx[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    Eigen::Vector3d p[3] = {mesh.vertices.row(idx[0]), mesh.vertices.row(idx[1]),
                            mesh.vertices.row(idx[2])};
    double area2 = (p[1] - p[0]).cross(p[2] - p[0]).norm();
    double third = area2 / 6.0; // (area / 3) with area = area2 / 2
    for (int j = 0; j < 3; ++j) ops.M[idx[j]] += third;

    // the corner at vertex j faces the edge (j+1, j+2)
    for (int j = 0; j < 3; ++j) {
      int u = idx[(j + 1) % 3], v = idx[(j + 2) % 3];
      Eigen::Vector3d e1 = p[(j + 1) % 3] - p[j];
      Eigen::Vector3d e2 = p[(j + 2) % 3] - p[j];
      double cot = e1.dot(e2) / e1.cross(e2).norm();
      if (!std::isfinite(cot))
        throw SolverError("non-finite cotangent in face " + std::to_string(f));
      cot = std::clamp(cot, -kCotClamp, kCotClamp);
      double w = 0.5 * cot;
      trips.emplace_back(u, v, -w);
      trips.emplace_back(v, u, -w);
      trips.emplace_back(u, u, w);
      trips.emplace_back(v, v, w);
    }
  }

  ops.L.resize(n, n);
  ops.L.setFromTriplets(trips.begin(), trips.end());
  ops.L.makeCompressed();
  return ops;
}

ShiftedSolver::ShiftedSolver(const OperatorPair& ops, double t, double epsilon)
    : t_(t), epsilon_(epsilon) {
  if (t <= 0.0) throw std::invalid_argument("diffusion scale must be positive");
  const int n = ops.size();
  Sparse shift(n, n);
  shift.setIdentity();
  Sparse mass(n, n);
  mass.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) mass.insert(i, i) = ops.M[i];
  A_ = mass + t * ops.L + epsilon * shift;
  A_.makeCompressed();

  ldlt_ = std::make_shared<Eigen::SimplicialLDLT<Sparse>>();
  ldlt_->compute(A_);
  direct_ok_ = ldlt_->info() == Eigen::Success;
}

Eigen::VectorXd ShiftedSolver::solve(const Eigen::VectorXd& b) const {
  if (!b.allFinite()) throw std::invalid_argument("right-hand side must be finite");
  const double bnorm = b.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  const double tol = 1e-10;

  Eigen::VectorXd x;
  if (direct_ok_) {
    x = ldlt_->solve(b);
    double rel = (b - A_ * x).norm() / bnorm;
    if (rel > 1e-12) { // one step of iterative refinement usually suffices
      x += ldlt_->solve(b - A_ * x);
      rel = (b - A_ * x).norm() / bnorm;
    }
    if (rel <= tol) return x;
  }

  Eigen::ConjugateGradient<Sparse, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(10 * static_cast<int>(b.size()));
  cg.compute(A_);
  Eigen::VectorXd x0 =
      (direct_ok_ && x.size() == b.size()) ? x : Eigen::VectorXd::Zero(b.size());
  x = cg.solveWithGuess(b, x0);
  double rel = (b - A_ * x).norm() / bnorm;
  if (rel > tol)
    throw SolverError("shifted solve failed to converge, relative residual " +
                      std::to_string(rel));
  return x;
}

Eigen::VectorXd solve_shifted(const OperatorPair& ops, double t, const Eigen::VectorXd& b) {
  return ShiftedSolver(ops, t).solve(b);
}

namespace {

EigenBasis dense_eigs(const OperatorPair& ops, int r) {
  const int n = ops.size();
  Eigen::VectorXd inv_sqrt_m = ops.M.array().sqrt().inverse();
  Eigen::MatrixXd B = Eigen::MatrixXd(ops.L);
  // symmetrized M^{-1/2} L M^{-1/2}; eigenvectors map back via M^{-1/2}
  B = inv_sqrt_m.asDiagonal() * B * inv_sqrt_m.asDiagonal();
  B = 0.5 * (B + B.transpose()); // scrub asymmetric rounding noise
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
  if (es.info() != Eigen::Success) throw SolverError("dense eigensolver failed");
  EigenBasis basis;
  basis.lambdas = es.eigenvalues().head(r).cwiseMax(0.0);
  basis.phis = inv_sqrt_m.asDiagonal() * es.eigenvectors().leftCols(r);
  (void)n;
  return basis;
}

// Shift-invert Lanczos in the M-inner product on C = (L - sigma M)^{-1} M,
// with full reorthogonalization. theta = 1/(lambda - sigma), so the largest
// Ritz values of C are the smallest generalized eigenvalues of (L, M).
EigenBasis lanczos_eigs(const OperatorPair& ops, int r) {
  const int n = ops.size();
  const double sigma = -1e-2 * (ops.L.diagonal().sum() / n);
  Sparse mass(n, n);
  mass.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) mass.insert(i, i) = ops.M[i];
  Sparse shifted = ops.L - sigma * mass;
  Eigen::SimplicialLDLT<Sparse> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw SolverError("shift-invert factorization failed");

  const int m = std::min(n, std::max(2 * r + 20, 40));
  Eigen::MatrixXd V(n, m);
  Eigen::VectorXd alpha(m), beta(m);
  alpha.setZero();
  beta.setZero();

  // deterministic start vector, not orthogonal to anything interesting
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) v[i] += 1e-3 * std::sin(1.0 + i);
  v /= std::sqrt(v.dot(ops.M.cwiseProduct(v)));
  V.col(0) = v;

  int built = m;
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd w = ldlt.solve(ops.M.cwiseProduct(V.col(j)));
    alpha[j] = w.dot(ops.M.cwiseProduct(V.col(j)));
    w -= alpha[j] * V.col(j);
    if (j > 0) w -= beta[j - 1] * V.col(j - 1);
    for (int pass = 0; pass < 2; ++pass) // full reorthogonalization, twice
      for (int i = 0; i <= j; ++i) w -= w.dot(ops.M.cwiseProduct(V.col(i))) * V.col(i);
    double norm = std::sqrt(w.dot(ops.M.cwiseProduct(w)));
    if (j + 1 < m) {
      if (norm < 1e-12) {
        built = j + 1; // invariant subspace found early
        break;
      }
      beta[j] = norm;
      V.col(j + 1) = w / norm;
    }
  }

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(built, built);
  for (int j = 0; j < built; ++j) {
    T(j, j) = alpha[j];
    if (j + 1 < built) T(j, j + 1) = T(j + 1, j) = beta[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) throw SolverError("Lanczos tridiagonal solve failed");
  if (built < r) throw SolverError("Lanczos breakdown before reaching requested count");

  // largest theta <-> smallest lambda; T's eigenvalues come back ascending
  EigenBasis basis;
  basis.lambdas.resize(r);
  basis.phis.resize(n, r);
  for (int i = 0; i < r; ++i) {
    int src = built - 1 - i;
    double theta = es.eigenvalues()[src];
    basis.lambdas[i] = std::max(0.0, sigma + 1.0 / theta);
    basis.phis.col(i) = V.leftCols(built) * es.eigenvectors().col(src);
    double norm = std::sqrt(basis.phis.col(i).dot(ops.M.cwiseProduct(basis.phis.col(i))));
    basis.phis.col(i) /= norm;
  }
  return basis;
}

} // namespace

EigenBasis partial_eigs(const OperatorPair& ops, int r) {
  if (r < 1 || r > ops.size())
    throw std::invalid_argument("eigenpair count must be in [1, n]");
  if (ops.size() <= 3000) return dense_eigs(ops, r);
  return lanczos_eigs(ops, r);
}

} // namespace dgm
