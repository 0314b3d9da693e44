#pragma once

#include "common.hpp"

#include <optional>

namespace dmtl {

/// Thin SVD M = U diag(S) V^T with k = min(rows, cols) columns;
/// S is nonincreasing and nonnegative.
struct ThinSvd {
  Eigen::MatrixXd u;
  Eigen::VectorXd s;
  Eigen::MatrixXd v;
};

ThinSvd thin_svd(const Eigen::MatrixXd& m);

/// Singular values only (nonincreasing); cheaper than thin_svd.
Eigen::VectorXd singular_values(const Eigen::MatrixXd& m);

/// Proximal operator of tau * nuclear norm: soft-thresholds the spectrum,
/// keeping the singular subspaces. tau = 0 returns m unchanged.
Eigen::MatrixXd sv_shrink(const Eigen::MatrixXd& m, double tau);

double nuclear_norm(const Eigen::MatrixXd& m);

struct SingularTriplet {
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double sigma = 0.0;
};

/// Leading singular triplet via power iteration from a fixed seeded start,
/// falling back to the full SVD when the iteration does not settle within
/// max_iter. The sign is fixed so the largest-magnitude entry of u is
/// positive. Returns nullopt for the zero matrix (no direction).
std::optional<SingularTriplet> leading_pair(const Eigen::MatrixXd& m,
                                            double tol = 1e-10, int max_iter = 300);

/// Ordered orthonormal columns spanning a learned subspace.
class ProjectionBasis {
 public:
  ProjectionBasis() = default;
  explicit ProjectionBasis(int dim) : columns_(dim, 0) {}

  int dim() const { return static_cast<int>(columns_.rows()); }
  int count() const { return static_cast<int>(columns_.cols()); }
  const Eigen::MatrixXd& columns() const { return columns_; }

  /// Appends u verbatim after checking it is unit norm and orthogonal to
  /// the existing columns (tolerance on the inner products). Throws when
  /// the check fails; callers that cannot guarantee orthogonality should
  /// use gram_schmidt_append.
  void append_orthonormal(const Eigen::VectorXd& u, double tol = 1e-8);

  /// Orthogonalizes u against the basis (two projection passes) and
  /// appends the normalized residual. Returns false and leaves the basis
  /// unchanged when the residual norm falls below reject_tol, i.e. the
  /// direction is already spanned.
  bool gram_schmidt_append(const Eigen::VectorXd& u, double reject_tol = 1e-8);

  /// max |B^T B - I| entry; 0 for an empty basis.
  double orthonormality_defect() const;

 private:
  Eigen::MatrixXd columns_;  // dim x count
};

}  // namespace dmtl
