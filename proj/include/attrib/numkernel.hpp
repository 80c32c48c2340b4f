#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

#include "attrib/rng.hpp"

namespace attrib {

/// Dense row-major matrix; rows index examples wherever one is involved.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
/// Column-major block of vectors (one right-hand side per column).
using VectorBlock = Eigen::MatrixXd;

/// rows x cols matrix with i.i.d. Normal(0, 1/cols) entries, filled row by row
/// from a copy of `rng`. Projecting with it preserves inner products in
/// expectation: E[<P^T u, P^T v>] = <u, v>.
Matrix gaussian_matrix(RngStream rng, std::size_t rows, std::size_t cols);

using LinearOperator = std::function<Vector(const Vector&)>;
using BlockOperator = std::function<VectorBlock(const VectorBlock&)>;

struct CgResult {
  Vector x;
  bool converged = false;
  int iterations = 0;
  /// ||(A + damping I) x - b|| / ||b|| from the CG recurrence.
  double relative_residual = 0.0;
};

/// Conjugate gradients on (A + damping I) x = b for a symmetric positive
/// semidefinite operator A. Stops when the residual drops below tol * ||b||
/// or after max_iter iterations (converged = false). Throws NumericalError
/// when an intermediate value turns non-finite or the curvature along a
/// search direction is not positive.
CgResult cg_solve(const LinearOperator& apply_a, const Vector& b, double damping, double tol,
                  int max_iter);

struct BlockCgResult {
  VectorBlock x;
  std::vector<bool> converged;
  std::vector<int> iterations;
  std::vector<double> relative_residual;

  bool all_converged() const;
};

/// Independent CG recurrences for every column of `b`, sharing one operator
/// application per iteration. Only still-active columns are passed to
/// `apply_a`, so the operator sees blocks of varying width.
BlockCgResult cg_solve_block(const BlockOperator& apply_a, const VectorBlock& b, double damping,
                             double tol, int max_iter);

inline constexpr std::size_t kDefaultGramCap = 4096;

/// (Phi^T Phi + damping I)^{-1} through a Cholesky factorization.
/// Throws SingularMatrixError if the factorization fails and
/// DimensionError if Phi has more than `cap` columns.
Matrix damped_gram_inverse(const Matrix& phi, double damping, std::size_t cap = kDefaultGramCap);

/// Dense reference solve of (A + damping I) x = b. Test oracle only.
Vector dense_damped_solve(const Matrix& a, const Vector& b, double damping);

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace attrib
