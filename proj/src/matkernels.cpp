#include "matkernels.hpp"

#include <lapacke.h>

#include <cmath>

// Keep BLAS single threaded: reproducible reductions, and the harness
// already parallelizes across cells.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace dmtl {

namespace {

const bool blas_single_threaded = [] {
  if (openblas_set_num_threads) openblas_set_num_threads(1);
  return true;
}();

void check_finite(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw ConfigError("matrix has non-finite entries");
}

// Flips (u, v) together so the largest-magnitude entry of u is positive.
void fix_sign(Eigen::VectorXd& u, Eigen::VectorXd& v) {
  int idx = 0;
  u.cwiseAbs().maxCoeff(&idx);
  if (u(idx) < 0.0) {
    u = -u;
    v = -v;
  }
}

}  // namespace

ThinSvd thin_svd(const Eigen::MatrixXd& m) {
  check_finite(m);
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  const int k = std::min(rows, cols);
  if (k == 0) return ThinSvd{Eigen::MatrixXd(rows, 0), Eigen::VectorXd(0), Eigen::MatrixXd(cols, 0)};

  Eigen::MatrixXd a = m;  // dgesdd overwrites its input
  Eigen::MatrixXd u(rows, k), vt(k, cols);
  Eigen::VectorXd s(k);
  const int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', rows, cols, a.data(), rows,
                                  s.data(), u.data(), rows, vt.data(), k);
  if (info != 0) {
    // rare non-convergence: take the slower divide-and-conquer in Eigen
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return ThinSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  }
  return ThinSvd{std::move(u), std::move(s), vt.transpose()};
}

Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
  check_finite(m);
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  const int k = std::min(rows, cols);
  if (k == 0) return Eigen::VectorXd(0);

  Eigen::MatrixXd a = m;
  Eigen::VectorXd s(k);
  const int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', rows, cols, a.data(), rows,
                                  s.data(), nullptr, 1, nullptr, 1);
  if (info != 0) return Eigen::BDCSVD<Eigen::MatrixXd>(m).singularValues();
  return s;
}

Eigen::MatrixXd sv_shrink(const Eigen::MatrixXd& m, double tau) {
  check_finite(m);
  if (tau < 0.0) throw ConfigError("shrink threshold must be nonnegative");
  if (tau == 0.0) return m;
  ThinSvd svd = thin_svd(m);
  const Eigen::VectorXd shrunk = (svd.s.array() - tau).max(0.0);
  return svd.u * shrunk.asDiagonal() * svd.v.transpose();
}

double nuclear_norm(const Eigen::MatrixXd& m) { return singular_values(m).sum(); }

std::optional<SingularTriplet> leading_pair(const Eigen::MatrixXd& m,
                                            double tol, int max_iter) {
  check_finite(m);
  if (tol <= 0.0) throw ConfigError("leading_pair tolerance must be positive");
  if (m.lpNorm<Eigen::Infinity>() == 0.0) return std::nullopt;

  // Fixed seeded start; the first coordinate basis vector can be exactly
  // orthogonal to the leading subspace on structured inputs.
  std::mt19937_64 rng(0x5eedf00dULL);
  Eigen::VectorXd u = randn_vector(static_cast<int>(m.rows()), rng);
  u.normalize();

  Eigen::VectorXd v;
  double sigma = 0.0;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    v = m.transpose() * u;
    const double nv = v.norm();
    if (nv == 0.0) {
      // u landed in the left null space; restart from a reseeded vector.
      u = randn_vector(static_cast<int>(m.rows()), rng);
      u.normalize();
      continue;
    }
    v /= nv;
    Eigen::VectorXd w = m * v;
    sigma = w.norm();
    if (sigma == 0.0) return std::nullopt;
    u = w / sigma;
    const double residual = (m.transpose() * u - sigma * v).norm();
    if (residual <= tol * sigma) {
      converged = true;
      break;
    }
  }

  if (!converged) {
    ThinSvd svd = thin_svd(m);
    u = svd.u.col(0);
    v = svd.v.col(0);
    sigma = svd.s(0);
  }

  fix_sign(u, v);
  return SingularTriplet{u, v, sigma};
}

void ProjectionBasis::append_orthonormal(const Eigen::VectorXd& u, double tol) {
  if (count() > 0 && u.size() != dim())
    throw ConfigError("basis column dimension mismatch");
  if (std::abs(u.norm() - 1.0) > 1e-10)
    throw ConfigError("basis column is not unit norm");
  if (count() > 0) {
    const double overlap = (columns_.transpose() * u).cwiseAbs().maxCoeff();
    if (overlap > tol)
      throw ConfigError("new direction is not orthogonal to the basis");
  }
  columns_.conservativeResize(u.size(), count() + 1);
  columns_.col(count() - 1) = u;
}

bool ProjectionBasis::gram_schmidt_append(const Eigen::VectorXd& u, double reject_tol) {
  if (count() > 0 && u.size() != dim())
    throw ConfigError("basis column dimension mismatch");
  const double nu = u.norm();
  if (nu < reject_tol) return false;

  Eigen::VectorXd r = u / nu;
  // Two projection passes keep the basis orthonormal to working precision
  // even when u is far from orthogonal.
  for (int pass = 0; pass < 2; ++pass) {
    if (count() > 0) r -= columns_ * (columns_.transpose() * r);
  }
  const double nr = r.norm();
  if (nr < reject_tol) return false;
  r /= nr;

  columns_.conservativeResize(u.size(), count() + 1);
  columns_.col(count() - 1) = r;
  return true;
}

double ProjectionBasis::orthonormality_defect() const {
  if (count() == 0) return 0.0;
  Eigen::MatrixXd gram = columns_.transpose() * columns_;
  gram.diagonal().array() -= 1.0;
  return gram.cwiseAbs().maxCoeff();
}

}  // namespace dmtl
