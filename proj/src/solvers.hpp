#pragma once

#include "runtime.hpp"

#include <limits>
#include <memory>
#include <string>

namespace dmtl {

/// Hyperparameters shared by all solvers. A zero (or negative, where
/// noted) value means "resolve a sensible default from the instance".
struct SolverConfig {
  double lambda = 0.0;        // nuclear-norm weight
  double eta = 0.0;           // prox step; 0 = 1/H
  double rho = 0.0;           // consensus penalty; 0 = default anchor
  double radius = 0.0;        // R, nuclear-ball radius; 0 = sqrt(r m) A
  double ridge = 0.0;         // l2 weight on local fits / refits
  double newton_ridge = -1.0; // <0 = 1e-6 H
  double norm_bound = 0.0;    // A; 0 = from ground truth when known, else 1
  int rank_budget = 0;        // 0 = min(p, m, rounds)
  int rounds = 0;             // 0 = per-solver default
  int assumed_rank = 0;       // r; 0 = from ground truth when known
  std::string init = "auto";  // "auto" | "zero" | "local"

  void validate(int p, int m) const;
};

/// Instance-level quantities the defaults are resolved against.
struct InstanceInfo {
  int p = 0;
  int m = 0;
  double norm_bound = 1.0;  // A
  int rank = 0;             // r (0 when unknown)
};

// --- per-task subproblems - the worker-side computations --------------------

/// min_w L_nj(w) + (coef/2) ||w - center||^2. Closed form for the squared
/// loss; damped Newton (dual form when coef > 0) to gradient norm <= 1e-8
/// for the logistic loss. coef = 0 requires a well-posed task.
Eigen::VectorXd solve_penalized_erm(const LossModel& model, const TaskDataset& task,
                                    const Eigen::VectorXd& center, double coef,
                                    ErmCache& cache);

/// min_v L_nj over predictions projected^T-composed, plus ridge ||v||^2,
/// where projected = features * basis. warm (padded with zeros) seeds the
/// logistic Newton iteration.
Eigen::VectorXd refit_subspace(const LossModel& model, const TaskDataset& task,
                               const Eigen::MatrixXd& projected, double ridge,
                               const Eigen::VectorXd* warm = nullptr);

/// L_n(W) over an explicit task list.
double mean_empirical_loss(const LossModel& model, const std::vector<TaskDataset>& tasks,
                           const Eigen::MatrixXd& w_cols);

// --- centralized reference fit ----------------------------------------------

struct CentralFitResult {
  Eigen::MatrixXd W;
  int iterations = 0;
  bool converged = false;
};

/// Single-machine accelerated proximal fit of L_n(W) + lambda ||W||_*,
/// stopping on ||W_{t+1} - W_t||_F <= frob_tol. Starts from `init` when
/// given, else from zero. eta <= 0 selects the step from the measured
/// block smoothness of L_n (much larger than 1/H when m is large).
CentralFitResult nuclear_regularized_fit(const std::vector<TaskDataset>& tasks,
                                         const LossModel& model, double lambda,
                                         double eta, double frob_tol, int max_iters,
                                         const Eigen::MatrixXd* init = nullptr);

// --- solver implementations --------------------------------------------------

class LocalSolver : public Solver {
 public:
  LocalSolver(const SolverConfig& cfg, const LossModel& model);
  std::string_view name() const override { return "local"; }
  bool one_shot() const override { return true; }
  int vectors_per_round() const override { return 0; }
  void init(Runtime&) override {}
  bool round(Runtime& rt) override;

 private:
  double ridge_;
};

class CentralizeSolver : public Solver {
 public:
  CentralizeSolver(const SolverConfig& cfg, const LossModel& model);
  std::string_view name() const override { return "centralize"; }
  bool one_shot() const override { return true; }
  int vectors_per_round() const override { return 0; }  // metered as n_j uploads
  void init(Runtime&) override {}
  bool round(Runtime& rt) override;

 private:
  double lambda_, eta_;
};

/// One-shot rank-r truncation of the stacked per-task local fits. r must
/// be at least 1 (an empty truncation is rejected at config validation).
class SvdTruncateSolver : public Solver {
 public:
  SvdTruncateSolver(const SolverConfig& cfg, const LossModel& model, const InstanceInfo& info);
  std::string_view name() const override { return "svd_truncate"; }
  bool one_shot() const override { return true; }
  int vectors_per_round() const override { return 2; }
  void init(Runtime&) override {}
  bool round(Runtime& rt) override;

 private:
  double ridge_;
  int rank_;
};

class BestRepSolver : public Solver {
 public:
  BestRepSolver(const SolverConfig& cfg, const LossModel& model, Eigen::MatrixXd true_basis);
  std::string_view name() const override { return "bestrep"; }
  bool one_shot() const override { return true; }
  int vectors_per_round() const override { return static_cast<int>(true_basis_.cols()); }
  void init(Runtime&) override {}
  bool round(Runtime& rt) override;

 private:
  double ridge_;
  Eigen::MatrixXd true_basis_;
};

/// Shared skeleton of the two distributed proximal-gradient solvers:
/// workers upload prox-argument columns, the master shrinks the spectrum.
class ProxGdSolver : public Solver {
 public:
  ProxGdSolver(const SolverConfig& cfg, const LossModel& model, bool accelerated);
  std::string_view name() const override { return accelerated_ ? "accproxgd" : "proxgd"; }
  int vectors_per_round() const override { return 2; }
  void init(Runtime& rt) override;
  bool round(Runtime& rt) override;
  Eigen::MatrixXd predictor(const Runtime& rt) const override;

 private:
  double lambda_, eta_, init_ridge_;
  bool accelerated_;
  bool init_zero_;
  double prev_objective_ = 0.0;
  int objective_increases_ = 0;
  bool have_master_w_ = false;
};

class AdmmSolver : public Solver {
 public:
  AdmmSolver(const SolverConfig& cfg, const LossModel& model);
  std::string_view name() const override { return "admm"; }
  int vectors_per_round() const override { return 3; }
  void init(Runtime& rt) override;
  bool round(Runtime& rt) override;
  double primal_residual() const { return primal_residual_; }

 private:
  double lambda_, rho_;
  double primal_residual_ = std::numeric_limits<double>::infinity();
};

class DfwSolver : public Solver {
 public:
  DfwSolver(const SolverConfig& cfg, const LossModel& model, const InstanceInfo& info);
  std::string_view name() const override { return "dfw"; }
  int vectors_per_round() const override { return 2; }
  void init(Runtime& rt) override;
  bool round(Runtime& rt) override;

 private:
  double radius_;
  int t_ = 0;
};

/// Greedy subspace pursuit: per round the master extracts the top left
/// singular vector of the stacked worker directions (gradients, or Newton
/// directions for the Newton variant) and the workers refit inside the
/// grown subspace.
class SubspacePursuitSolver : public Solver {
 public:
  SubspacePursuitSolver(const SolverConfig& cfg, const LossModel& model,
                        const InstanceInfo& info, bool newton);
  std::string_view name() const override { return newton_ ? "dnsp" : "dgsp"; }
  int vectors_per_round() const override { return 2; }
  void init(Runtime& rt) override;
  bool round(Runtime& rt) override;
  const ProjectionBasis* projection() const override;

 private:
  double ridge_, newton_ridge_;
  int rank_budget_;
  bool newton_;
  ProjectionBasis master_basis_;
};

/// Resolves defaults against the instance (in place, so callers can read
/// the effective configuration back) and constructs the named solver.
/// Known names: local, centralize, svd_truncate, bestrep, proxgd,
/// accproxgd, admm, dfw, dgsp, dnsp.
std::unique_ptr<Solver> make_solver(const std::string& name, SolverConfig& cfg,
                                    const LossModel& model, const InstanceInfo& info,
                                    const Eigen::MatrixXd* true_basis = nullptr);

/// Per-solver default round budget: 1 for one-shot procedures, the rank
/// budget for pursuits, 500 for the first-order solvers.
int default_rounds(const std::string& name, const SolverConfig& cfg, const InstanceInfo& info);

}  // namespace dmtl
