#pragma once

#include "losses.hpp"
#include "matkernels.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

namespace dmtl {

/// Per-worker counts of p-dimensional vectors sent up (worker to master)
/// and down (master to worker), plus the round counter. Scalars are free.
class CommLedger {
 public:
  CommLedger() = default;
  explicit CommLedger(int num_workers)
      : up_(num_workers, 0), down_(num_workers, 0) {}

  void add_up(int worker, std::int64_t vectors = 1) { up_[worker] += vectors; }
  void add_down(int worker, std::int64_t vectors = 1) { down_[worker] += vectors; }
  void next_round() { ++rounds_; }

  int workers() const { return static_cast<int>(up_.size()); }
  std::int64_t rounds() const { return rounds_; }
  std::int64_t up(int worker) const { return up_[worker]; }
  std::int64_t down(int worker) const { return down_[worker]; }
  std::int64_t total(int worker) const { return up_[worker] + down_[worker]; }

  /// Common per-worker total; throws when workers disagree.
  std::int64_t uniform_total() const;
  /// Largest per-worker total (equals uniform_total for balanced runs).
  std::int64_t max_total() const;

 private:
  std::vector<std::int64_t> up_, down_;
  std::int64_t rounds_ = 0;
};

/// Cached per-task quantities for repeated penalized ERM solves.
struct ErmCache {
  std::shared_ptr<const Eigen::MatrixXd> xtx;     // p x p; squared-loss path
  std::shared_ptr<const Eigen::VectorXd> xty;
  std::shared_ptr<const Eigen::MatrixXd> kernel;  // n x n; logistic dual path
  std::shared_ptr<Eigen::LLT<Eigen::MatrixXd>> factor;
  double factor_coef = -1.0;
  Eigen::VectorXd beta;    // dual warm start
  Eigen::VectorXd primal;  // primal warm start
};

/// State resident on one simulated worker: its task, its predictor, and
/// solver-local extras (consensus vectors, the local basis copy, caches).
struct WorkerState {
  TaskDataset data;
  Eigen::VectorXd w;

  Eigen::VectorXd accel_point;      // gradient point of the accelerated solver
  Eigen::VectorXd admm_z, admm_q;
  ProjectionBasis basis;            // worker copy of the shared subspace
  Eigen::MatrixXd projected;        // data.features * basis (n x t)
  Eigen::VectorXd subspace_coef;    // v_j
  ErmCache erm;
};

/// Master-side buffers and solver-global extras.
struct MasterState {
  Eigen::MatrixXd W;       // master's view of the predictor matrix
  Eigen::MatrixXd Z, Q;    // consensus / momentum partners
  double accel_a = 1.0;
  ProjectionBasis basis;
};

class Runtime;

enum class RunStatus { kRunning, kConverged, kMaxRounds, kStopped, kDiverged };
const char* to_string(RunStatus s);

/// One estimation procedure expressed against the runtime: init, then
/// barrier-synchronized rounds until the budget runs out or the solver
/// reports it is done.
class Solver {
 public:
  virtual ~Solver() = default;
  virtual std::string_view name() const = 0;
  virtual bool one_shot() const { return false; }
  /// Declared per-worker vector traffic of one full round.
  virtual int vectors_per_round() const = 0;
  virtual void init(Runtime& rt) = 0;
  /// Returns false when the solver has stopped (converged, direction
  /// exhausted, or one-shot work complete).
  virtual bool round(Runtime& rt) = 0;
  /// The predictor matrix the procedure currently stands behind.
  virtual Eigen::MatrixXd predictor(const Runtime& rt) const;
  virtual const ProjectionBasis* projection() const { return nullptr; }
  RunStatus status() const { return status_; }

 protected:
  RunStatus status_ = RunStatus::kRunning;
};

/// Simulated synchronous master/worker fabric with one logical worker per
/// task. Workers exchange data exclusively through gather/broadcast calls,
/// which also meter the traffic; the reduction order is the ascending task
/// index, so runs are deterministic regardless of physical parallelism.
class Runtime {
 public:
  Runtime(std::vector<TaskDataset> tasks, LossModel model);

  int num_workers() const { return static_cast<int>(workers_.size()); }
  int dim() const { return p_; }
  const LossModel& model() const { return model_; }

  /// Worker-local computation phase (init, refits after a download,
  /// delivery of one-shot results). No communication, nothing metered.
  void local_phase(const std::function<void(WorkerState&)>& fn);

  /// Uploads one p-vector per worker; column j comes from worker j.
  /// Throws DivergenceError on a non-finite column.
  Eigen::MatrixXd gather_columns(const std::function<Eigen::VectorXd(WorkerState&)>& extract);

  /// Delivers the same payload to every worker; still costs one
  /// down-vector per worker.
  void broadcast(const Eigen::VectorXd& shared,
                 const std::function<void(WorkerState&, const Eigen::VectorXd&)>& apply);

  /// Delivers column j to worker j; one down-vector per worker.
  void broadcast_columns(const Eigen::MatrixXd& per_worker,
                         const std::function<void(WorkerState&, const Eigen::VectorXd&)>& apply);

  /// Delivers a shared k-column matrix to every worker at a cost of k
  /// down-vectors each.
  void broadcast_matrix(const Eigen::MatrixXd& shared,
                        const std::function<void(WorkerState&, const Eigen::MatrixXd&)>& apply);

  /// Master-side access to every task, metered as n_j up-vectors from
  /// worker j (the whole dataset crosses the wire).
  const std::vector<TaskDataset>& collect_all_data();

  /// Runs one barrier round. For completed rounds the per-worker ledger
  /// delta must equal the solver's declared cost.
  bool run_round(Solver& solver);

  MasterState& master() { return master_; }
  const MasterState& master() const { return master_; }
  CommLedger& ledger() { return ledger_; }
  const CommLedger& ledger() const { return ledger_; }

  // Evaluation-side instrumentation; not part of the communication model
  // and never metered.
  Eigen::MatrixXd predictor_snapshot() const;
  const WorkerState& worker(int j) const { return workers_[j]; }
  const TaskDataset& task_data(int j) const { return workers_[j].data; }
  /// L_n(W) = (1/m) sum_j task_loss(w_j) over the resident datasets.
  double mean_empirical_loss(const Eigen::MatrixXd& w_cols) const;

 private:
  std::vector<WorkerState> workers_;
  MasterState master_;
  CommLedger ledger_;
  LossModel model_;
  std::vector<TaskDataset> all_data_;
  int p_ = 0;
};

}  // namespace dmtl
