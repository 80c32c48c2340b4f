#include "attrib/numkernel.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "attrib/errors.hpp"

namespace attrib {

Matrix gaussian_matrix(RngStream rng, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("gaussian_matrix: rows and cols must be >= 1");
  }
  if (rows > static_cast<std::size_t>(std::numeric_limits<Eigen::Index>::max()) / cols) {
    throw DimensionError("gaussian_matrix: rows*cols overflows the index type");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* data = out.data();
  const std::size_t total = rows * cols;
  for (std::size_t i = 0; i < total; ++i) data[i] = scale * rng.normal();
  return out;
}


CgResult cg_solve(const LinearOperator& apply_a, const Vector& b, double damping, double tol,
                  int max_iter) {
  if (!(tol > 0.0)) throw Error("cg_solve: tol must be positive");
  if (!(damping >= 0.0)) throw Error("cg_solve: damping must be non-negative");
  if (!b.allFinite()) throw NumericalError("cg_solve: right-hand side is not finite");

  CgResult res;
  res.x = Vector::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    res.converged = true;
    return res;
  }

  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double stop = tol * b_norm;
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= stop) {
      res.converged = true;
      break;
    }
    Vector ap = apply_a(p);
    if (ap.size() != p.size()) throw DimensionError("cg_solve: operator changed vector length");
    ap += damping * p;
    const double curvature = p.dot(ap);
    if (!std::isfinite(curvature)) {
      throw NumericalError("cg_solve: non-finite curvature at iteration " + std::to_string(it));
    }
    if (curvature <= 0.0) {
      throw NumericalError("cg_solve: non-positive curvature " + std::to_string(curvature) +
                           " at iteration " + std::to_string(it) +
                           " (operator indefinite; raise damping)");
    }
    const double step = rr / curvature;
    res.x += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    if (!std::isfinite(rr_next)) {
      throw NumericalError("cg_solve: non-finite residual at iteration " + std::to_string(it));
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    res.iterations = it + 1;
  }
  if (!res.converged && std::sqrt(rr) <= stop) res.converged = true;
  res.relative_residual = std::sqrt(rr) / b_norm;
  return res;
}

bool BlockCgResult::all_converged() const {
  for (bool c : converged) {
    if (!c) return false;
  }
  return true;
}

BlockCgResult cg_solve_block(const BlockOperator& apply_a, const VectorBlock& b, double damping,
                             double tol, int max_iter) {
  if (!(tol > 0.0)) throw Error("cg_solve_block: tol must be positive");
  if (!(damping >= 0.0)) throw Error("cg_solve_block: damping must be non-negative");
  if (!b.allFinite()) throw NumericalError("cg_solve_block: right-hand side is not finite");

  const Eigen::Index dim = b.rows();
  const Eigen::Index cols = b.cols();
  BlockCgResult res;
  res.x = VectorBlock::Zero(dim, cols);
  res.converged.assign(static_cast<std::size_t>(cols), false);
  res.iterations.assign(static_cast<std::size_t>(cols), 0);
  res.relative_residual.assign(static_cast<std::size_t>(cols), 0.0);

  VectorBlock r = b;
  VectorBlock p = b;
  std::vector<double> rr(cols), stop(cols), b_norm(cols);
  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < cols; ++c) {
    b_norm[c] = b.col(c).norm();
    rr[c] = r.col(c).squaredNorm();
    stop[c] = tol * b_norm[c];
    if (b_norm[c] == 0.0) {
      res.converged[c] = true;
    } else {
      active.push_back(c);
    }
  }

  for (int it = 0; it < max_iter && !active.empty(); ++it) {
    std::vector<Eigen::Index> still_active;
    for (Eigen::Index c : active) {
      if (std::sqrt(rr[c]) <= stop[c]) {
        res.converged[c] = true;
      } else {
        still_active.push_back(c);
      }
    }
    active.swap(still_active);
    if (active.empty()) break;

    VectorBlock p_active(dim, static_cast<Eigen::Index>(active.size()));
    for (std::size_t j = 0; j < active.size(); ++j) p_active.col(j) = p.col(active[j]);
    VectorBlock ap = apply_a(p_active);
    if (ap.rows() != dim || ap.cols() != p_active.cols()) {
      throw DimensionError("cg_solve_block: operator changed block shape");
    }
    ap += damping * p_active;

    for (std::size_t j = 0; j < active.size(); ++j) {
      const Eigen::Index c = active[j];
      const double curvature = p_active.col(j).dot(ap.col(j));
      if (!std::isfinite(curvature) || curvature <= 0.0) {
        throw NumericalError("cg_solve_block: bad curvature " + std::to_string(curvature) +
                             " in column " + std::to_string(c) + " at iteration " +
                             std::to_string(it) + " (operator indefinite; raise damping)");
      }
      const double step = rr[c] / curvature;
      res.x.col(c) += step * p_active.col(j);
      r.col(c) -= step * ap.col(j);
      const double rr_next = r.col(c).squaredNorm();
      if (!std::isfinite(rr_next)) {
        throw NumericalError("cg_solve_block: non-finite residual in column " +
                             std::to_string(c));
      }
      p.col(c) = r.col(c) + (rr_next / rr[c]) * p.col(c);
      rr[c] = rr_next;
      res.iterations[c] = it + 1;
    }
  }
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (b_norm[c] == 0.0) continue;
    if (std::sqrt(rr[c]) <= stop[c]) res.converged[c] = true;
    res.relative_residual[c] = std::sqrt(rr[c]) / b_norm[c];
  }
  return res;
}

Matrix damped_gram_inverse(const Matrix& phi, double damping, std::size_t cap) {
  if (static_cast<std::size_t>(phi.cols()) > cap) {
    throw DimensionError("damped_gram_inverse: k=" + std::to_string(phi.cols()) +
                         " exceeds cap " + std::to_string(cap));
  }
  if (!(damping >= 0.0)) throw Error("damped_gram_inverse: damping must be non-negative");
  const Eigen::Index k = phi.cols();
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += damping;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("damped_gram_inverse: Gram matrix is not positive definite (damping=" +
                              std::to_string(damping) + "); raise the damping");
  }
  // A tiny pivot means the factorization succeeded on a numerically singular matrix.
  const Eigen::VectorXd diag = Eigen::MatrixXd(llt.matrixL()).diagonal();
  if (damping == 0.0 && diag.minCoeff() <= 1e-12 * diag.maxCoeff()) {
    throw SingularMatrixError("damped_gram_inverse: Gram matrix is numerically singular");
  }
  Matrix inv = llt.solve(Eigen::MatrixXd::Identity(k, k));
  if (!inv.allFinite()) throw NumericalError("damped_gram_inverse: non-finite inverse");
  return inv;
}

Vector dense_damped_solve(const Matrix& a, const Vector& b, double damping) {
  Eigen::MatrixXd m = a;
  m.diagonal().array() += damping;
  return m.ldlt().solve(b);
}

}  // namespace attrib
