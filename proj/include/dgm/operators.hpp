#pragma once

#include <memory>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "dgm/mesh.hpp"

namespace dgm {

using Sparse = Eigen::SparseMatrix<double>;

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Cotangent stiffness L (positive semidefinite, L*1 = 0) plus the lumped
// vertex-mass diagonal M (one third of incident face areas; sums to the
// total surface area, i.e. 1 after preprocessing).
struct OperatorPair {
  Sparse L;
  Eigen::VectorXd M;
  double epsilon = 1e-8;

  int size() const { return static_cast<int>(M.size()); }
};

OperatorPair assemble(const Mesh& mesh);

// Smallest generalized eigenpairs of L phi = lambda M phi, mass-orthonormal
// (Phi^T M Phi = I), eigenvalues ascending with lambda_1 ~ 0 on connected
// meshes.
struct EigenBasis {
  Eigen::VectorXd lambdas;
  Eigen::MatrixXd phis;

  int count() const { return static_cast<int>(lambdas.size()); }
};

EigenBasis partial_eigs(const OperatorPair& ops, int r);

// Factors A = M + t L + eps I once; solve() is const and reusable across many
// right-hand sides (and safe to call concurrently). Falls back to
// Jacobi-preconditioned conjugate gradients if the direct factorization
// fails, and raises SolverError with the residual if neither converges.
class ShiftedSolver {
 public:
  ShiftedSolver(const OperatorPair& ops, double t, double epsilon);
  ShiftedSolver(const OperatorPair& ops, double t) : ShiftedSolver(ops, t, ops.epsilon) {}

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  double t() const { return t_; }
  double epsilon() const { return epsilon_; }

 private:
  Sparse A_;
  std::shared_ptr<Eigen::SimplicialLDLT<Sparse>> ldlt_;
  bool direct_ok_ = false;
  double t_ = 0.0;
  double epsilon_ = 0.0;
};

// One-shot convenience around ShiftedSolver.
Eigen::VectorXd solve_shifted(const OperatorPair& ops, double t, const Eigen::VectorXd& b);

} // namespace dgm
