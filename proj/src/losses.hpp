#pragma once

#include "common.hpp"

#include <utility>

namespace dmtl {

enum class LossKind { kSquared, kLogistic };

/// Scalar loss l(a, y) in the prediction argument a, together with its
/// first two derivatives. smoothness() bounds l'' uniformly; for the
/// squared loss l(a,y) = (a-y)^2/2 it is 1, for the logistic loss
/// l(a,y) = ln(1 + exp(-y a)) with y in {-1,+1} it is 1/4.
class LossModel {
 public:
  static LossModel squared() { return LossModel(LossKind::kSquared, 1.0, 1.0); }
  static LossModel logistic() { return LossModel(LossKind::kLogistic, 0.25, 1.0); }

  LossKind kind() const { return kind_; }
  double smoothness() const { return smoothness_; }
  double lipschitz() const { return lipschitz_; }

  double value(double a, double y) const;
  /// (l'(a,y), l''(a,y)); the second component lies in [0, smoothness()].
  std::pair<double, double> grad2(double a, double y) const;

 private:
  LossModel(LossKind kind, double smoothness, double lipschitz)
      : kind_(kind), smoothness_(smoothness), lipschitz_(lipschitz) {}

  LossKind kind_;
  double smoothness_;
  double lipschitz_;
};

/// One task's samples, resident on a single worker. Rows of `features`
/// are the observations x_i^T; every row must have norm <= 1. `scale`
/// records the factor the raw rows were divided by to satisfy that.
struct TaskDataset {
  int index = 0;
  Eigen::MatrixXd features;   // n x p
  Eigen::VectorXd responses;  // n
  double scale = 1.0;

  int n() const { return static_cast<int>(features.rows()); }
  int p() const { return static_cast<int>(features.cols()); }
};

/// Throws ConfigError when the dataset violates the model's contract
/// (row norms above 1, non-finite entries, labels outside {-1,+1} for
/// logistic tasks).
void validate_task(const TaskDataset& task, const LossModel& model);

/// Mean per-sample loss (1/n) sum_i l(w^T x_i, y_i).
double task_loss(const LossModel& model, const TaskDataset& task,
                 const Eigen::VectorXd& w);

/// Gradient of task_loss: (1/n) sum_i l'(w^T x_i, y_i) x_i. The 1/m
/// task-average factor is applied once at aggregation, never here.
Eigen::VectorXd task_gradient(const LossModel& model, const TaskDataset& task,
                              const Eigen::VectorXd& w);

/// Hessian-vector product of task_loss at w.
Eigen::VectorXd task_hessian_vec(const LossModel& model, const TaskDataset& task,
                                 const Eigen::VectorXd& w, const Eigen::VectorXd& v);

/// Solves (H_j + ridge I) d = grad with H_j = (1/n) sum_i l'' x_i x_i^T,
/// as an SPD system. Throws ConfigError when the system cannot be
/// positive definite (ridge = 0 with rank-deficient data).
Eigen::VectorXd task_newton_direction(const LossModel& model, const TaskDataset& task,
                                      const Eigen::VectorXd& w, double ridge);

}  // namespace dmtl
