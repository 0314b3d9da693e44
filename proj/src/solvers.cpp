#include "solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dmtl {

const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::kRunning: return "running";
    case RunStatus::kConverged: return "converged";
    case RunStatus::kMaxRounds: return "max_rounds";
    case RunStatus::kStopped: return "stopped";
    case RunStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

void SolverConfig::validate(int p, int m) const {
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  if (eta < 0.0) throw ConfigError("eta must be nonnegative");
  if (rho <= 0.0) throw ConfigError("rho must be positive");
  if (radius <= 0.0) throw ConfigError("R must be positive");
  if (ridge < 0.0) throw ConfigError("ridge must be nonnegative");
  if (newton_ridge < 0.0) throw ConfigError("newton_ridge must be nonnegative");
  if (norm_bound <= 0.0) throw ConfigError("A must be positive");
  if (rounds < 1) throw ConfigError("rounds must be positive");
  if (rank_budget < 1 || rank_budget > std::min(p, m))
    throw ConfigError("rank_budget must lie in [1, min(p, m)]");
  if (assumed_rank < 1 || assumed_rank > std::min(p, m))
    throw ConfigError("r must lie in [1, min(p, m)]");
  if (init != "auto" && init != "zero" && init != "local")
    throw ConfigError("init must be one of auto|zero|local");
}

namespace {

constexpr double kNewtonTol = 1e-8;
constexpr int kNewtonMaxIter = 1000;

const Eigen::MatrixXd& cached_xtx(const TaskDataset& task, ErmCache& cache) {
  if (!cache.xtx)
    cache.xtx = std::make_shared<Eigen::MatrixXd>(
        task.features.transpose() * task.features / task.n());
  return *cache.xtx;
}

const Eigen::VectorXd& cached_xty(const TaskDataset& task, ErmCache& cache) {
  if (!cache.xty)
    cache.xty = std::make_shared<Eigen::VectorXd>(
        task.features.transpose() * task.responses / task.n());
  return *cache.xty;
}

const Eigen::MatrixXd& cached_kernel(const TaskDataset& task, ErmCache& cache) {
  if (!cache.kernel)
    cache.kernel = std::make_shared<Eigen::MatrixXd>(
        task.features * task.features.transpose());
  return *cache.kernel;
}

double penalized_objective(const LossModel& model, const TaskDataset& task,
                           const Eigen::VectorXd& w, const Eigen::VectorXd& center,
                           double coef) {
  double f = task_loss(model, task, w);
  if (coef > 0.0) f += 0.5 * coef * (w - center).squaredNorm();
  return f;
}

// Newton on w directly; used when the penalty vanishes or p <= n.
Eigen::VectorXd primal_newton(const LossModel& model, const TaskDataset& task,
                              const Eigen::VectorXd& center, double coef,
                              const Eigen::VectorXd* warm) {
  const int n = task.n();
  Eigen::VectorXd w = (warm && warm->size() == task.p()) ? *warm : center;
  for (int it = 0; it < kNewtonMaxIter; ++it) {
    const Eigen::VectorXd a = task.features * w;
    Eigen::VectorXd lp(n), lpp(n);
    for (int i = 0; i < n; ++i) {
      auto [g, h] = model.grad2(a(i), task.responses(i));
      lp(i) = g;
      lpp(i) = h;
    }
    Eigen::VectorXd grad = task.features.transpose() * lp / n;
    if (coef > 0.0) grad += coef * (w - center);
    if (grad.norm() <= kNewtonTol) return w;

    Eigen::MatrixXd hess =
        task.features.transpose() * lpp.asDiagonal() * task.features / n;
    hess.diagonal().array() += coef;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success)
      throw ConfigError("newton system is singular; set ridge > 0");
    const Eigen::VectorXd dir = llt.solve(grad);

    // inside the quadratic basin the objective change is below rounding
    // noise: take the undamped step
    if (dir.norm() <= 1e-7 * (1.0 + w.norm())) {
      w -= dir;
      continue;
    }
    const double base = penalized_objective(model, task, w, center, coef);
    double step = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd cand = w - step * dir;
      if (penalized_objective(model, task, cand, center, coef) <= base) {
        w = std::move(cand);
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) throw ConfigError("newton line search stalled");
  }
  throw ConfigError("newton did not converge; add ridge");
}

// Newton in the n-dimensional dual parameterization w = center + X^T beta,
// valid whenever coef > 0; the step maps exactly to the primal Newton step
// but only needs n x n solves.
Eigen::VectorXd dual_newton(const LossModel& model, const TaskDataset& task,
                            const Eigen::VectorXd& center, double coef,
                            ErmCache& cache) {
  const int n = task.n();
  const Eigen::MatrixXd& kernel = cached_kernel(task, cache);
  const Eigen::VectorXd a0 = task.features * center;
  Eigen::VectorXd beta =
      (cache.beta.size() == n) ? cache.beta : Eigen::VectorXd::Zero(n);

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd a = a0 + kernel * b;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += model.value(a(i), task.responses(i));
    return s / n + 0.5 * coef * b.dot(kernel * b);
  };

  for (int it = 0; it < kNewtonMaxIter; ++it) {
    const Eigen::VectorXd a = a0 + kernel * beta;
    Eigen::VectorXd lp(n), lpp(n);
    for (int i = 0; i < n; ++i) {
      auto [g, h] = model.grad2(a(i), task.responses(i));
      lp(i) = g;
      lpp(i) = h;
    }
    const Eigen::VectorXd resid = lp / n + coef * beta;
    if ((task.features.transpose() * resid).norm() <= kNewtonTol) break;

    Eigen::MatrixXd jac = (lpp / n).asDiagonal() * kernel;
    jac.diagonal().array() += coef;
    const Eigen::VectorXd dir = jac.partialPivLu().solve(resid);

    if (dir.norm() <= 1e-7 * (1.0 + beta.norm())) {
      beta -= dir;  // quadratic basin: damping would only chase rounding noise
      continue;
    }
    const double base = objective(beta);
    double step = 1.0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd cand = beta - step * dir;
      if (objective(cand) <= base) {
        beta = std::move(cand);
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) throw ConfigError("newton line search stalled");
    if (it + 1 == kNewtonMaxIter)
      throw ConfigError("newton did not converge; add ridge");
  }
  cache.beta = beta;
  return center + task.features.transpose() * beta;
}

}  // namespace

Eigen::VectorXd solve_penalized_erm(const LossModel& model, const TaskDataset& task,
                                    const Eigen::VectorXd& center, double coef,
                                    ErmCache& cache) {
  if (coef < 0.0) throw ConfigError("penalty coefficient must be nonnegative");
  if (center.size() != task.p()) throw ConfigError("penalty center has wrong dimension");

  if (model.kind() == LossKind::kSquared) {
    if (coef == 0.0 && task.n() < task.p())
      throw ConfigError("singular normal equations; set ridge > 0");
    if (!cache.factor || cache.factor_coef != coef) {
      Eigen::MatrixXd a = cached_xtx(task, cache);
      a.diagonal().array() += coef;
      auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(a);
      if (llt->info() != Eigen::Success)
        throw ConfigError("singular normal equations; set ridge > 0");
      cache.factor = std::move(llt);
      cache.factor_coef = coef;
    }
    return cache.factor->solve(cached_xty(task, cache) + coef * center);
  }

  if (coef > 0.0 && task.n() < task.p())
    return dual_newton(model, task, center, coef, cache);
  const Eigen::VectorXd* warm = cache.primal.size() == task.p() ? &cache.primal : nullptr;
  cache.primal = primal_newton(model, task, center, coef, warm);
  return cache.primal;
}

Eigen::VectorXd refit_subspace(const LossModel& model, const TaskDataset& task,
                               const Eigen::MatrixXd& projected, double ridge,
                               const Eigen::VectorXd* warm) {
  const int t = static_cast<int>(projected.cols());
  const int n = task.n();
  if (t == 0) return Eigen::VectorXd();
  if (projected.rows() != n) throw ConfigError("projected features have wrong row count");

  if (model.kind() == LossKind::kSquared) {
    Eigen::MatrixXd a = projected.transpose() * projected / n;
    a.diagonal().array() += 2.0 * ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
      throw ConfigError("subspace refit failed; set ridge > 0 or lower the rank budget");
    return llt.solve(projected.transpose() * task.responses / n);
  }

  // The refit residual leaks into U^T(gradient matrix), so it is driven
  // close to machine precision; the new pursuit direction must stay
  // orthogonal to the basis within 1e-8.
  constexpr double kRefitTol = 1e-12;
  Eigen::VectorXd v = (warm && warm->size() == t) ? *warm : Eigen::VectorXd::Zero(t);
  auto objective = [&](const Eigen::VectorXd& vv) {
    const Eigen::VectorXd a = projected * vv;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += model.value(a(i), task.responses(i));
    return s / n + ridge * vv.squaredNorm();
  };
  double grad_norm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kNewtonMaxIter; ++it) {
    const Eigen::VectorXd a = projected * v;
    Eigen::VectorXd lp(n), lpp(n);
    for (int i = 0; i < n; ++i) {
      auto [g, h] = model.grad2(a(i), task.responses(i));
      lp(i) = g;
      lpp(i) = h;
    }
    Eigen::VectorXd grad = projected.transpose() * lp / n + 2.0 * ridge * v;
    grad_norm = grad.norm();
    if (grad_norm <= kRefitTol) return v;

    Eigen::MatrixXd hess = projected.transpose() * lpp.asDiagonal() * projected / n;
    hess.diagonal().array() += 2.0 * ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success)
      throw ConfigError("subspace refit failed; set ridge > 0 or lower the rank budget");
    const Eigen::VectorXd dir = llt.solve(grad);

    if (dir.norm() <= 1e-7 * (1.0 + v.norm())) {
      v -= dir;
      continue;
    }
    const double base = objective(v);
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      Eigen::VectorXd cand = v - step * dir;
      if (objective(cand) <= base) {
        moved = (cand - v).norm() > 1e-16 * (1.0 + v.norm());
        v = std::move(cand);
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;  // at numerical stationarity
  }
  if (grad_norm <= kNewtonTol) return v;
  throw ConfigError("subspace refit did not converge; set ridge > 0");
}

double mean_empirical_loss(const LossModel& model, const std::vector<TaskDataset>& tasks,
                           const Eigen::MatrixXd& w_cols) {
  if (w_cols.cols() != static_cast<Eigen::Index>(tasks.size()))
    throw ConfigError("predictor matrix has wrong column count");
  double sum = 0.0;
  for (std::size_t j = 0; j < tasks.size(); ++j)
    sum += task_loss(model, tasks[j], w_cols.col(j));
  return sum / tasks.size();
}

CentralFitResult nuclear_regularized_fit(const std::vector<TaskDataset>& tasks,
                                         const LossModel& model, double lambda,
                                         double eta, double frob_tol, int max_iters,
                                         const Eigen::MatrixXd* init) {
  if (tasks.empty()) throw ConfigError("no tasks");
  if (lambda < 0.0) throw ConfigError("invalid lambda");
  const int p = tasks.front().p();
  const int m = static_cast<int>(tasks.size());

  if (eta <= 0.0) {
    // 1 / smoothness of L_n: the block Hessians are bounded by
    // (H/m) * sigma_max(X_j^T X_j / n); a small margin absorbs the
    // power-iteration tolerance.
    double top = 0.0;
    for (const auto& t : tasks) {
      const auto lp = leading_pair(t.features, 1e-6, 200);
      if (lp) top = std::max(top, lp->sigma * lp->sigma / t.n());
    }
    if (top <= 0.0) top = 1.0;
    eta = m / (model.smoothness() * top * (1.0 + 1e-3));
  }
  const double scale = eta / m;

  Eigen::MatrixXd w =
      init ? Eigen::MatrixXd(*init) : Eigen::MatrixXd::Zero(p, m);
  Eigen::MatrixXd z = w;
  double a = 1.0;

  for (int it = 1; it <= max_iters; ++it) {
    Eigen::MatrixXd arg(p, m);
    for (int j = 0; j < m; ++j)
      arg.col(j) = z.col(j) - scale * task_gradient(model, tasks[j], z.col(j));

    Eigen::MatrixXd w_new;
    if (lambda == 0.0) {
      w_new = std::move(arg);
    } else {
      ThinSvd svd = thin_svd(arg);
      const Eigen::VectorXd s = (svd.s.array() - eta * lambda).max(0.0);
      w_new = svd.u * s.asDiagonal() * svd.v.transpose();
    }

    // gradient-test momentum restart; keeps the late iterations from
    // oscillating and lets the step-difference criterion fire early
    const bool restart = (z - w_new).cwiseProduct(w_new - w).sum() > 0.0;
    const double a_next = restart ? 1.0 : 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * a * a));
    const double gamma = restart ? 0.0 : (a - 1.0) / a_next;
    z = w_new + gamma * (w_new - w);
    const double dw = (w_new - w).norm();
    w = std::move(w_new);
    a = a_next;
    if (dw <= frob_tol) return {std::move(w), it, true};
  }
  return {std::move(w), max_iters, false};
}

// --- one-shot procedures ------------------------------------------------------

LocalSolver::LocalSolver(const SolverConfig& cfg, const LossModel&)
    : ridge_(cfg.ridge) {}

bool LocalSolver::round(Runtime& rt) {
  const LossModel& model = rt.model();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rt.dim());
  rt.local_phase([&](WorkerState& ws) {
    ws.w = solve_penalized_erm(model, ws.data, zero, 2.0 * ridge_, ws.erm);
  });
  status_ = RunStatus::kConverged;
  return false;
}

CentralizeSolver::CentralizeSolver(const SolverConfig& cfg, const LossModel&)
    : lambda_(cfg.lambda), eta_(cfg.eta) {}

bool CentralizeSolver::round(Runtime& rt) {
  const auto& tasks = rt.collect_all_data();
  CentralFitResult fit =
      nuclear_regularized_fit(tasks, rt.model(), lambda_, eta_, 1e-9, 100000);
  rt.master().W = fit.W;
  int j = 0;
  rt.local_phase([&](WorkerState& ws) { ws.w = fit.W.col(j++); });
  status_ = RunStatus::kConverged;
  return false;
}

SvdTruncateSolver::SvdTruncateSolver(const SolverConfig& cfg, const LossModel&,
                                     const InstanceInfo&)
    : ridge_(cfg.ridge), rank_(cfg.assumed_rank) {}

bool SvdTruncateSolver::round(Runtime& rt) {
  const LossModel& model = rt.model();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rt.dim());
  Eigen::MatrixXd w_local = rt.gather_columns([&](WorkerState& ws) {
    return solve_penalized_erm(model, ws.data, zero, 2.0 * ridge_, ws.erm);
  });
  ThinSvd svd = thin_svd(w_local);
  const int r = std::min<int>(rank_, static_cast<int>(svd.s.size()));
  const Eigen::MatrixXd w_r =
      svd.u.leftCols(r) * svd.s.head(r).asDiagonal() * svd.v.leftCols(r).transpose();
  rt.master().W = w_r;
  rt.broadcast_columns(w_r, [](WorkerState& ws, const Eigen::VectorXd& col) { ws.w = col; });
  status_ = RunStatus::kConverged;
  return false;
}

BestRepSolver::BestRepSolver(const SolverConfig& cfg, const LossModel&,
                             Eigen::MatrixXd true_basis)
    : ridge_(cfg.ridge), true_basis_(std::move(true_basis)) {
  if (true_basis_.cols() == 0) throw ConfigError("bestrep requires the true subspace");
  Eigen::MatrixXd gram = true_basis_.transpose() * true_basis_;
  gram.diagonal().array() -= 1.0;
  if (gram.cwiseAbs().maxCoeff() > 1e-8)
    throw ConfigError("bestrep basis is not orthonormal");
}

bool BestRepSolver::round(Runtime& rt) {
  const LossModel& model = rt.model();
  rt.broadcast_matrix(true_basis_, [&](WorkerState& ws, const Eigen::MatrixXd& basis) {
    const Eigen::MatrixXd projected = ws.data.features * basis;
    const Eigen::VectorXd v = refit_subspace(model, ws.data, projected, ridge_);
    ws.w = basis * v;
  });
  status_ = RunStatus::kConverged;
  return false;
}

// --- distributed proximal gradient -------------------------------------------

ProxGdSolver::ProxGdSolver(const SolverConfig& cfg, const LossModel& model, bool accelerated)
    : lambda_(cfg.lambda),
      eta_(cfg.eta),
      init_ridge_(std::max(cfg.ridge, 1e-6 * model.smoothness())),
      accelerated_(accelerated),
      init_zero_(cfg.init == "zero"),
      prev_objective_(std::numeric_limits<double>::infinity()) {}

void ProxGdSolver::init(Runtime& rt) {
  MasterState& ms = rt.master();
  ms.accel_a = 1.0;
  if (init_zero_) {
    rt.local_phase([&](WorkerState& ws) {
      ws.w = Eigen::VectorXd::Zero(rt.dim());
      ws.accel_point = ws.w;
    });
    ms.W = Eigen::MatrixXd::Zero(rt.dim(), rt.num_workers());
    have_master_w_ = true;
  } else {
    const LossModel& model = rt.model();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rt.dim());
    rt.local_phase([&](WorkerState& ws) {
      ws.w = solve_penalized_erm(model, ws.data, zero, 2.0 * init_ridge_, ws.erm);
      ws.accel_point = ws.w;
    });
    have_master_w_ = false;
  }
}

bool ProxGdSolver::round(Runtime& rt) {
  const int m = rt.num_workers();
  const double scale = eta_ / m;
  const LossModel& model = rt.model();

  Eigen::MatrixXd prox_arg = rt.gather_columns([&](WorkerState& ws) -> Eigen::VectorXd {
    const Eigen::VectorXd& point = accelerated_ ? ws.accel_point : ws.w;
    return point - scale * task_gradient(model, ws.data, point);
  });

  Eigen::MatrixXd w_new;
  double nuclear = 0.0;
  if (lambda_ == 0.0) {
    w_new = std::move(prox_arg);
  } else {
    ThinSvd svd = thin_svd(prox_arg);
    const Eigen::VectorXd s = (svd.s.array() - eta_ * lambda_).max(0.0);
    nuclear = s.sum();
    w_new = svd.u * s.asDiagonal() * svd.v.transpose();
  }

  MasterState& ms = rt.master();
  const bool fixed_point = have_master_w_ && (w_new - ms.W).norm() == 0.0;

  Eigen::MatrixXd z_new;
  if (accelerated_) {
    const double a_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * ms.accel_a * ms.accel_a));
    const double gamma = (ms.accel_a - 1.0) / a_next;
    z_new = have_master_w_ ? (w_new + gamma * (w_new - ms.W)).eval() : w_new;
    ms.accel_a = a_next;
  }

  ms.W = w_new;
  have_master_w_ = true;
  if (accelerated_) ms.Z = z_new;

  const Eigen::MatrixXd& down = accelerated_ ? z_new : w_new;
  rt.broadcast_columns(down, [&](WorkerState& ws, const Eigen::VectorXd& col) {
    ws.w = col;
    if (accelerated_) ws.accel_point = col;
  });

  const double objective = rt.mean_empirical_loss(ms.W) + lambda_ * nuclear;
  if (objective > prev_objective_) {
    if (++objective_increases_ >= 10)
      throw DivergenceError("objective increased for 10 consecutive rounds; lower eta");
  } else {
    objective_increases_ = 0;
  }
  prev_objective_ = objective;

  if (fixed_point) {
    status_ = RunStatus::kConverged;
    return false;
  }
  return true;
}

Eigen::MatrixXd ProxGdSolver::predictor(const Runtime& rt) const {
  const MasterState& ms = rt.master();
  return have_master_w_ ? ms.W : rt.predictor_snapshot();
}

// --- consensus ADMM -----------------------------------------------------------

AdmmSolver::AdmmSolver(const SolverConfig& cfg, const LossModel&)
    : lambda_(cfg.lambda), rho_(cfg.rho) {}

void AdmmSolver::init(Runtime& rt) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(rt.dim());
  rt.local_phase([&](WorkerState& ws) {
    ws.w = zero;
    ws.admm_z = zero;
    ws.admm_q = zero;
  });
  MasterState& ms = rt.master();
  ms.W = Eigen::MatrixXd::Zero(rt.dim(), rt.num_workers());
  ms.Z = ms.W;
  ms.Q = ms.W;
}

bool AdmmSolver::round(Runtime& rt) {
  const LossModel& model = rt.model();
  const double coef = rt.num_workers() * rho_;

  Eigen::MatrixXd w_up = rt.gather_columns([&](WorkerState& ws) {
    const Eigen::VectorXd center = ws.admm_z - ws.admm_q / rho_;
    ws.w = solve_penalized_erm(model, ws.data, center, coef, ws.erm);
    return ws.w;
  });

  MasterState& ms = rt.master();
  ms.W = std::move(w_up);
  ms.Z = sv_shrink(ms.W + ms.Q / rho_, lambda_ / rho_);
  ms.Q += rho_ * (ms.W - ms.Z);
  primal_residual_ = (ms.W - ms.Z).norm();

  rt.broadcast_columns(ms.Z, [](WorkerState& ws, const Eigen::VectorXd& col) { ws.admm_z = col; });
  rt.broadcast_columns(ms.Q, [](WorkerState& ws, const Eigen::VectorXd& col) { ws.admm_q = col; });
  return true;
}

// --- distributed Frank-Wolfe --------------------------------------------------

DfwSolver::DfwSolver(const SolverConfig& cfg, const LossModel&, const InstanceInfo&)
    : radius_(cfg.radius) {}

void DfwSolver::init(Runtime& rt) {
  rt.local_phase([&](WorkerState& ws) { ws.w = Eigen::VectorXd::Zero(rt.dim()); });
  rt.master().W = Eigen::MatrixXd::Zero(rt.dim(), rt.num_workers());
  t_ = 0;
}

bool DfwSolver::round(Runtime& rt) {
  const LossModel& model = rt.model();
  Eigen::MatrixXd grads = rt.gather_columns([&](WorkerState& ws) {
    return task_gradient(model, ws.data, ws.w);
  });

  const auto lp = leading_pair(grads);
  if (!lp) {
    status_ = RunStatus::kConverged;  // zero gradient: already optimal
    return false;
  }

  const double gamma = 2.0 / (t_ + 2.0);
  const Eigen::MatrixXd payload = lp->u * lp->v.transpose();
  rt.broadcast_columns(payload, [&](WorkerState& ws, const Eigen::VectorXd& col) {
    ws.w = (1.0 - gamma) * ws.w - gamma * radius_ * col;
  });
  MasterState& ms = rt.master();
  ms.W = (1.0 - gamma) * ms.W - (gamma * radius_) * payload;
  ++t_;
  return true;
}

// --- greedy subspace pursuit --------------------------------------------------

SubspacePursuitSolver::SubspacePursuitSolver(const SolverConfig& cfg, const LossModel&,
                                             const InstanceInfo&, bool newton)
    : ridge_(cfg.ridge),
      newton_ridge_(cfg.newton_ridge),
      rank_budget_(cfg.rank_budget),
      newton_(newton) {}

void SubspacePursuitSolver::init(Runtime& rt) {
  master_basis_ = ProjectionBasis(rt.dim());
  rt.local_phase([&](WorkerState& ws) {
    ws.w = Eigen::VectorXd::Zero(rt.dim());
    ws.basis = ProjectionBasis(rt.dim());
    ws.projected.resize(ws.data.n(), 0);
    ws.subspace_coef.resize(0);
  });
}

bool SubspacePursuitSolver::round(Runtime& rt) {
  if (master_basis_.count() >= rank_budget_) {
    status_ = RunStatus::kMaxRounds;
    return false;
  }
  const LossModel& model = rt.model();
  Eigen::MatrixXd dirs = rt.gather_columns([&](WorkerState& ws) {
    return newton_ ? task_newton_direction(model, ws.data, ws.w, newton_ridge_)
                   : task_gradient(model, ws.data, ws.w);
  });

  const auto lp = leading_pair(dirs);
  if (!lp) {
    status_ = RunStatus::kConverged;
    return false;
  }
  const Eigen::VectorXd& u = lp->u;

  // Exact refits make the new gradient direction orthogonal to the basis
  // by construction: verify, never re-orthogonalize. Ridge-regularized
  // refits void that guarantee, so those (and the Newton variant, whose
  // listing orthogonalizes explicitly) go through Gram-Schmidt.
  const bool orthogonalize = newton_ || ridge_ > 0.0;
  if (orthogonalize) {
    if (!master_basis_.gram_schmidt_append(u)) {
      status_ = RunStatus::kStopped;  // direction already spanned
      return false;
    }
  } else {
    if (master_basis_.count() > 0) {
      const Eigen::MatrixXd& b = master_basis_.columns();
      if ((u - b * (b.transpose() * u)).norm() < 1e-8) {
        status_ = RunStatus::kStopped;  // gradient lies in the current subspace
        return false;
      }
    }
    master_basis_.append_orthonormal(u);
  }

  rt.broadcast(u, [&](WorkerState& ws, const Eigen::VectorXd& uu) {
    if (orthogonalize) {
      if (!ws.basis.gram_schmidt_append(uu))
        throw std::logic_error("worker basis diverged from the master basis");
    } else {
      ws.basis.append_orthonormal(uu);
    }
    const int t = ws.basis.count();
    ws.projected.conservativeResize(ws.data.n(), t);
    ws.projected.col(t - 1) = ws.data.features * ws.basis.columns().col(t - 1);

    Eigen::VectorXd warm = Eigen::VectorXd::Zero(t);
    if (ws.subspace_coef.size() > 0) warm.head(ws.subspace_coef.size()) = ws.subspace_coef;
    ws.subspace_coef = refit_subspace(model, ws.data, ws.projected, ridge_, &warm);
    ws.w = ws.basis.columns() * ws.subspace_coef;
  });
  return true;
}

const ProjectionBasis* SubspacePursuitSolver::projection() const { return &master_basis_; }

// --- factory ------------------------------------------------------------------

int default_rounds(const std::string& name, const SolverConfig& cfg, const InstanceInfo& info) {
  if (name == "local" || name == "centralize" || name == "svd_truncate" || name == "bestrep")
    return 1;
  if (name == "dgsp" || name == "dnsp") {
    if (cfg.rank_budget > 0) return cfg.rank_budget;
    const int r = cfg.assumed_rank > 0 ? cfg.assumed_rank : info.rank;
    const int cap = std::min(info.p, info.m);
    return r > 0 ? std::min(cap, 2 * r) : cap;
  }
  return 500;
}

std::unique_ptr<Solver> make_solver(const std::string& name, SolverConfig& cfg,
                                    const LossModel& model, const InstanceInfo& info,
                                    const Eigen::MatrixXd* true_basis) {
  if (cfg.rounds <= 0) cfg.rounds = default_rounds(name, cfg, info);
  // centralize keeps eta = 0 ("from the data"); the distributed prox
  // solvers default to the conservative 1/H step
  if (cfg.eta <= 0.0) cfg.eta = (name == "centralize") ? 0.0 : 1.0 / model.smoothness();
  if (cfg.newton_ridge < 0.0) cfg.newton_ridge = 1e-6 * model.smoothness();
  if (cfg.norm_bound <= 0.0) cfg.norm_bound = info.norm_bound > 0.0 ? info.norm_bound : 1.0;
  if (cfg.assumed_rank <= 0)
    cfg.assumed_rank = info.rank > 0 ? info.rank : std::min(info.p, info.m);
  if (cfg.rank_budget <= 0) cfg.rank_budget = std::min({info.p, info.m, cfg.rounds});
  if (cfg.rho <= 0.0) cfg.rho = 1.0;
  if (cfg.radius <= 0.0)
    cfg.radius = std::sqrt(static_cast<double>(cfg.assumed_rank) * info.m) * cfg.norm_bound;
  cfg.validate(info.p, info.m);

  if (name == "local") return std::make_unique<LocalSolver>(cfg, model);
  if (name == "centralize") return std::make_unique<CentralizeSolver>(cfg, model);
  if (name == "svd_truncate") return std::make_unique<SvdTruncateSolver>(cfg, model, info);
  if (name == "bestrep") {
    if (!true_basis) throw ConfigError("bestrep requires the true subspace");
    return std::make_unique<BestRepSolver>(cfg, model, *true_basis);
  }
  if (name == "proxgd") return std::make_unique<ProxGdSolver>(cfg, model, false);
  if (name == "accproxgd") return std::make_unique<ProxGdSolver>(cfg, model, true);
  if (name == "admm") return std::make_unique<AdmmSolver>(cfg, model);
  if (name == "dfw") return std::make_unique<DfwSolver>(cfg, model, info);
  if (name == "dgsp") return std::make_unique<SubspacePursuitSolver>(cfg, model, info, false);
  if (name == "dnsp") return std::make_unique<SubspacePursuitSolver>(cfg, model, info, true);
  throw ConfigError("unknown solver: " + name);
}

}  // namespace dmtl
