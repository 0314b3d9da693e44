#include "runtime.hpp"

#include <string>

namespace dmtl {

std::int64_t CommLedger::uniform_total() const {
  if (up_.empty()) return 0;
  const std::int64_t t0 = total(0);
  for (int j = 1; j < workers(); ++j)
    if (total(j) != t0) throw ConfigError("per-worker communication totals differ");
  return t0;
}

std::int64_t CommLedger::max_total() const {
  std::int64_t t = 0;
  for (int j = 0; j < workers(); ++j) t = std::max(t, total(j));
  return t;
}

Eigen::MatrixXd Solver::predictor(const Runtime& rt) const {
  return rt.predictor_snapshot();
}

Runtime::Runtime(std::vector<TaskDataset> tasks, LossModel model)
    : model_(model) {
  if (tasks.empty()) throw ConfigError("runtime needs at least one task");
  p_ = tasks.front().p();
  workers_.reserve(tasks.size());
  for (auto& t : tasks) {
    if (t.p() != p_) throw ConfigError("tasks disagree on the feature dimension");
    validate_task(t, model_);
    WorkerState ws;
    ws.data = std::move(t);
    ws.w = Eigen::VectorXd::Zero(p_);
    workers_.push_back(std::move(ws));
  }
  ledger_ = CommLedger(num_workers());
  master_.W.resize(0, 0);
}

void Runtime::local_phase(const std::function<void(WorkerState&)>& fn) {
  for (auto& ws : workers_) fn(ws);
}

Eigen::MatrixXd Runtime::gather_columns(
    const std::function<Eigen::VectorXd(WorkerState&)>& extract) {
  Eigen::MatrixXd out(p_, num_workers());
  for (int j = 0; j < num_workers(); ++j) {
    Eigen::VectorXd col = extract(workers_[j]);
    if (col.size() != p_) throw ConfigError("gathered column has wrong dimension");
    if (!col.allFinite())
      throw DivergenceError("worker " + std::to_string(j) + " uploaded a non-finite vector at round " +
                            std::to_string(ledger_.rounds() + 1));
    out.col(j) = col;
    ledger_.add_up(j);
  }
  return out;
}

void Runtime::broadcast(const Eigen::VectorXd& shared,
                        const std::function<void(WorkerState&, const Eigen::VectorXd&)>& apply) {
  if (!shared.allFinite()) throw DivergenceError("master broadcast a non-finite vector");
  for (int j = 0; j < num_workers(); ++j) {
    apply(workers_[j], shared);
    ledger_.add_down(j);
  }
}

void Runtime::broadcast_columns(
    const Eigen::MatrixXd& per_worker,
    const std::function<void(WorkerState&, const Eigen::VectorXd&)>& apply) {
  if (per_worker.cols() != num_workers())
    throw ConfigError("per-worker payload must have one column per worker");
  if (!per_worker.allFinite()) throw DivergenceError("master broadcast a non-finite payload");
  for (int j = 0; j < num_workers(); ++j) {
    apply(workers_[j], per_worker.col(j));
    ledger_.add_down(j);
  }
}

void Runtime::broadcast_matrix(
    const Eigen::MatrixXd& shared,
    const std::function<void(WorkerState&, const Eigen::MatrixXd&)>& apply) {
  if (!shared.allFinite()) throw DivergenceError("master broadcast a non-finite payload");
  for (int j = 0; j < num_workers(); ++j) {
    apply(workers_[j], shared);
    ledger_.add_down(j, shared.cols());
  }
}

const std::vector<TaskDataset>& Runtime::collect_all_data() {
  all_data_.clear();
  for (int j = 0; j < num_workers(); ++j) {
    all_data_.push_back(workers_[j].data);
    ledger_.add_up(j, workers_[j].data.n());
  }
  return all_data_;
}

bool Runtime::run_round(Solver& solver) {
  std::vector<std::int64_t> before(num_workers());
  for (int j = 0; j < num_workers(); ++j) before[j] = ledger_.total(j);

  const bool more = solver.round(*this);
  ledger_.next_round();

  if (more) {
    // A completed round must match the declared cost exactly; partial
    // final rounds (early stops) are exempt.
    for (int j = 0; j < num_workers(); ++j) {
      if (ledger_.total(j) - before[j] != solver.vectors_per_round())
        throw std::logic_error("solver round traffic does not match its declared cost");
    }
  }
  return more;
}

Eigen::MatrixXd Runtime::predictor_snapshot() const {
  Eigen::MatrixXd w(p_, num_workers());
  for (int j = 0; j < num_workers(); ++j) w.col(j) = workers_[j].w;
  return w;
}

double Runtime::mean_empirical_loss(const Eigen::MatrixXd& w_cols) const {
  if (w_cols.cols() != num_workers()) throw ConfigError("predictor matrix has wrong column count");
  double sum = 0.0;
  for (int j = 0; j < num_workers(); ++j)
    sum += task_loss(model_, workers_[j].data, w_cols.col(j));
  return sum / num_workers();
}

}  // namespace dmtl
