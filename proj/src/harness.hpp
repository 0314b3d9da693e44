#pragma once

#include "datagen.hpp"
#include "solvers.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dmtl {

/// One record per communication round of a solver run.
struct RoundTrace {
  int t = 0;
  std::int64_t vectors_per_worker = 0;  // cumulative
  double empirical_loss = 0.0;
  double excess_risk = std::numeric_limits<double>::quiet_NaN();
  int rank = 0;  // singular values of W above 1e-8
  double wall_ms = 0.0;
};

struct RunResult {
  std::string solver;
  Eigen::MatrixXd W;
  std::vector<RoundTrace> trace;  // empty for one-shot procedures
  RoundTrace summary;
  RunStatus status = RunStatus::kConverged;
  bool one_shot = false;
  double max_basis_defect = 0.0;  // pursuit solvers: max |U^T U - I| over rounds
};

struct RunOptions {
  bool record_trace = true;
  const RiskEvaluator* evaluator = nullptr;
  bool timings = false;
  /// Called after every completed round (pursuit diagnostics, residual
  /// tracking in tests).
  std::function<void(int t, const Solver&, const Runtime&)> on_round;
};

/// Builds a fresh runtime over the tasks, runs the named solver for its
/// round budget, and assembles the trace. Divergence is reported through
/// the status, not an exception. cfg is resolved in place.
RunResult run_solver(const std::string& name, SolverConfig& cfg,
                     const std::vector<TaskDataset>& tasks, const LossModel& model,
                     const InstanceInfo& info, const Eigen::MatrixXd* true_basis = nullptr,
                     const RunOptions& opts = {});

/// One axis of a hyperparameter grid search.
struct GridAxis {
  std::vector<double> values;
  bool prefer_larger = true;  // tie direction: toward more regularization
  std::function<void(SolverConfig&, double)> apply;
};

/// Picks the grid value minimizing the mean validation prediction loss of
/// a (budget-capped) training run; ties break toward prefer_larger values.
/// Order of `axis.values` does not matter.
SolverConfig tune(const std::string& name, const SolverConfig& base, const GridAxis& axis,
                  const std::vector<TaskDataset>& train, const std::vector<TaskDataset>& validation,
                  const LossModel& model, const InstanceInfo& info,
                  const Eigen::MatrixXd* true_basis = nullptr, int round_cap = 0);

struct SolverEntry {
  std::string name;
  std::string label;  // trace-file tag; defaults to name
  SolverConfig config;
  bool tune = true;
};

struct ExperimentSpec {
  std::optional<GenConfig> gen;
  std::string dataset_dir;
  std::vector<SolverEntry> solvers;
  std::vector<std::uint64_t> seeds;
  double validation_fraction = 0.2;
  int mc_samples = 500;
  bool emit_timings = false;
  bool auto_baselines = true;
  int jobs = 0;  // parallel cells; 0 = hardware default

  void validate() const;
};

GenConfig parse_gen_config(const std::string& json_text);
ExperimentSpec parse_experiment_spec(const std::string& json_text);
std::string spec_hash(const ExperimentSpec& spec);

struct ExperimentSummary {
  int cells = 0;
  int diverged = 0;
};

/// Runs every (solver, seed) cell: regenerate/load data, tune on the
/// validation split, run the full-budget solver, and write one trace CSV
/// per cell into out_dir. The Local/Centralize/BestRep baselines are
/// appended automatically unless disabled.
ExperimentSummary run_experiment(const ExperimentSpec& spec, const std::string& out_dir);

/// Aggregates the trace files in in_dir into one CSV: per (solver, round)
/// mean and standard deviation of the excess risk across seeds, plus
/// rounds-to-epsilon columns on the mean curve.
void summarize(const std::string& in_dir, const std::string& out_csv,
               const std::vector<double>& epsilons = {});

}  // namespace dmtl
