#include "losses.hpp"

#include <cmath>

namespace dmtl {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_label(const LossModel& model, double y) {
  if (model.kind() == LossKind::kLogistic && y != 1.0 && y != -1.0)
    throw ConfigError("logistic loss requires labels in {-1,+1}");
}

void check_dims(const TaskDataset& task, const Eigen::VectorXd& w) {
  if (w.size() != task.p()) throw ConfigError("predictor dimension does not match task features");
}

}  // namespace

double LossModel::value(double a, double y) const {
  check_label(*this, y);
  switch (kind_) {
    case LossKind::kSquared: {
      const double r = a - y;
      return 0.5 * r * r;
    }
    case LossKind::kLogistic: {
      // ln(1 + exp(-ya)) via log1p on the negative branch
      const double z = -y * a;
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
  }
  return 0.0;
}

std::pair<double, double> LossModel::grad2(double a, double y) const {
  check_label(*this, y);
  switch (kind_) {
    case LossKind::kSquared:
      return {a - y, 1.0};
    case LossKind::kLogistic: {
      const double s = sigmoid(-y * a);
      return {-y * s, s * (1.0 - s)};
    }
  }
  return {0.0, 0.0};
}

void validate_task(const TaskDataset& task, const LossModel& model) {
  if (task.n() == 0) throw ConfigError("empty task dataset");
  if (!task.features.allFinite() || !task.responses.allFinite())
    throw ConfigError("non-finite entries in task dataset");
  if (task.responses.size() != task.n())
    throw ConfigError("response length does not match feature rows");
  const double max_norm = task.features.rowwise().norm().maxCoeff();
  if (max_norm > 1.0 + 1e-9)
    throw ConfigError("feature rows must have norm <= 1; rescale at load");
  if (model.kind() == LossKind::kLogistic) {
    for (int i = 0; i < task.n(); ++i) check_label(model, task.responses(i));
  }
}

double task_loss(const LossModel& model, const TaskDataset& task,
                 const Eigen::VectorXd& w) {
  check_dims(task, w);
  const Eigen::VectorXd a = task.features * w;
  double sum = 0.0;
  for (int i = 0; i < task.n(); ++i) sum += model.value(a(i), task.responses(i));
  return sum / task.n();
}

Eigen::VectorXd task_gradient(const LossModel& model, const TaskDataset& task,
                              const Eigen::VectorXd& w) {
  check_dims(task, w);
  const Eigen::VectorXd a = task.features * w;
  Eigen::VectorXd g(task.n());
  for (int i = 0; i < task.n(); ++i) g(i) = model.grad2(a(i), task.responses(i)).first;
  return task.features.transpose() * g / task.n();
}

Eigen::VectorXd task_hessian_vec(const LossModel& model, const TaskDataset& task,
                                 const Eigen::VectorXd& w, const Eigen::VectorXd& v) {
  check_dims(task, w);
  check_dims(task, v);
  const Eigen::VectorXd a = task.features * w;
  Eigen::VectorXd xv = task.features * v;
  for (int i = 0; i < task.n(); ++i)
    xv(i) *= model.grad2(a(i), task.responses(i)).second;
  return task.features.transpose() * xv / task.n();
}

Eigen::VectorXd task_newton_direction(const LossModel& model, const TaskDataset& task,
                                      const Eigen::VectorXd& w, double ridge) {
  check_dims(task, w);
  if (ridge < 0.0) throw ConfigError("newton ridge must be nonnegative");
  if (ridge == 0.0 && task.n() < task.p())
    throw ConfigError("hessian is rank deficient (n < p); set ridge > 0");

  const Eigen::VectorXd a = task.features * w;
  Eigen::VectorXd curv(task.n());
  for (int i = 0; i < task.n(); ++i)
    curv(i) = model.grad2(a(i), task.responses(i)).second;

  Eigen::MatrixXd hess = task.features.transpose() * curv.asDiagonal() * task.features / task.n();
  hess.diagonal().array() += ridge;

  Eigen::LLT<Eigen::MatrixXd> llt(hess);
  if (llt.info() != Eigen::Success)
    throw ConfigError("newton system is not positive definite; increase ridge");
  return llt.solve(task_gradient(model, task, w));
}

}  // namespace dmtl
