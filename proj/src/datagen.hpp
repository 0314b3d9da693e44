#pragma once

#include "losses.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dmtl {

/// Synthetic instance layout: m tasks of n samples in p dimensions, a
/// rank-r shared subspace, and features from N(0, Sigma) with
/// Sigma_ab = 2^(-corr_decay |a-b|).
struct GenConfig {
  int n = 0, p = 0, m = 0, r = 0;
  double corr_decay = 1.0;
  LossKind task_kind = LossKind::kSquared;
  std::uint64_t seed = 0;
  double noise_std = 1.0;  // test hook; the generative model uses 1

  void validate() const;
};

struct GroundTruth {
  Eigen::MatrixXd W_star;  // p x m, in the units of the rescaled features
  Eigen::MatrixXd U_true;  // p x r, orthonormal columns
  Eigen::VectorXd S_diag;  // generation-time spectrum [1, 1/1.5, 1/1.5^2, ...]
  Eigen::MatrixXd Sigma;   // raw feature covariance
  double feature_scale = 1.0;  // raw rows were divided by this
  double p_eff = 0.0;          // 1 / ||E[x x^T]||_2 of the rescaled features

  int p() const { return static_cast<int>(W_star.rows()); }
  int m() const { return static_cast<int>(W_star.cols()); }
  int r() const { return static_cast<int>(U_true.cols()); }
};

Eigen::MatrixXd toeplitz_covariance(int p, double corr_decay);

/// Draws A (p x r) and B (m x r) with standard normal entries, takes the
/// top-r singular vectors (U, V) of A B^T and sets W* = U diag(S) V^T with
/// S_k = 1.5^(-k). Deterministic in the seed.
GroundTruth gen_wstar(int p, int m, int r, std::uint64_t seed);

/// Samples the m task datasets, then rescales all rows by the global max
/// row norm (and W* inversely, leaving predictions unchanged). Fills in
/// feature_scale and p_eff on the truth. Classification responses are
/// Bernoulli draws mapped to {-1,+1}.
std::vector<TaskDataset> gen_tasks(const GenConfig& cfg, GroundTruth& truth);

/// Population risk above the reference predictor, L(W) - L(W*). Exact
/// quadratic form for regression; Monte Carlo over mc_samples fresh
/// feature draws per task (shared seed) for classification.
double excess_risk(const Eigen::MatrixXd& W, const GroundTruth& truth,
                   const LossModel& model, int mc_samples = 10000,
                   std::uint64_t eval_seed = 0);

/// Reusable excess-risk evaluator; caches the classification evaluation
/// draws so per-round traces are cheap.
class RiskEvaluator {
 public:
  RiskEvaluator(const GroundTruth& truth, const LossModel& model, int mc_samples,
                std::uint64_t eval_seed);
  double excess(const Eigen::MatrixXd& w) const;

 private:
  LossModel model_;
  Eigen::MatrixXd w_star_;
  Eigen::MatrixXd sigma_scaled_;               // regression path
  std::vector<Eigen::MatrixXd> eval_features_; // classification path, per task
  std::vector<Eigen::VectorXd> plus_prob_;     // P(y = +1 | x) under the truth
  double base_risk_ = 0.0;
};

struct Dataset {
  std::vector<TaskDataset> tasks;
  LossKind kind = LossKind::kSquared;
  std::optional<GroundTruth> truth;

  int p() const { return tasks.empty() ? 0 : tasks.front().p(); }
  int m() const { return static_cast<int>(tasks.size()); }
};

Dataset generate_dataset(const GenConfig& cfg);

/// Directory format: task_<j>.csv (header y,x1..xp), meta.json, optional
/// wstar.csv (p x m), utrue.csv (p x r) and sigma.csv (p x p).
void save_dataset(const Dataset& ds, const std::string& dir);

/// Loads a dataset directory. Rows are rescaled per task by the max row
/// norm when above 1 (the scale is recorded on the task); {0,1} labels of
/// classification tasks are remapped to {-1,+1} with a warning.
Dataset load_csv_tasks(const std::string& dir);

}  // namespace dmtl
