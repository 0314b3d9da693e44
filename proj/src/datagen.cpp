#include "datagen.hpp"

#include "matkernels.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dmtl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double parse_double(std::string_view s) {
  double out = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("malformed numeric field: '" + std::string(s) + "'");
  return out;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << fmt_double(m(i, j));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, int rows, int cols) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Eigen::MatrixXd m(rows, cols);
  std::string line;
  for (int i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw IoError("unexpected end of " + path.string());
    std::stringstream ss(line);
    std::string field;
    for (int j = 0; j < cols; ++j) {
      if (!std::getline(ss, field, ',')) throw IoError("short row in " + path.string());
      m(i, j) = parse_double(field);
    }
  }
  return m;
}

}  // namespace

void GenConfig::validate() const {
  if (n < 1 || p < 1 || m < 1 || r < 1) throw ConfigError("n, p, m, r must be positive");
  if (r > std::min(p, m)) throw ConfigError("r must not exceed min(p, m)");
  if (corr_decay <= 0.0) throw ConfigError("corr_decay must be positive");
  if (noise_std < 0.0) throw ConfigError("noise_std must be nonnegative");
}

Eigen::MatrixXd toeplitz_covariance(int p, double corr_decay) {
  Eigen::MatrixXd sigma(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      sigma(a, b) = std::exp2(-corr_decay * std::abs(a - b));
  return sigma;
}

GroundTruth gen_wstar(int p, int m, int r, std::uint64_t seed) {
  if (r < 1 || r > std::min(p, m)) throw ConfigError("r must lie in [1, min(p, m)]");
  std::mt19937_64 rng(mix_seed(seed, 0xA11CE));
  const Eigen::MatrixXd a = randn_matrix(p, r, rng);
  const Eigen::MatrixXd b = randn_matrix(m, r, rng);
  ThinSvd svd = thin_svd(a * b.transpose());

  GroundTruth truth;
  truth.U_true = svd.u.leftCols(r);
  truth.S_diag.resize(r);
  for (int k = 0; k < r; ++k) truth.S_diag(k) = std::pow(1.5, -k);
  truth.W_star =
      truth.U_true * truth.S_diag.asDiagonal() * svd.v.leftCols(r).transpose();
  return truth;
}

std::vector<TaskDataset> gen_tasks(const GenConfig& cfg, GroundTruth& truth) {
  cfg.validate();
  if (truth.p() != cfg.p || truth.m() != cfg.m)
    throw ConfigError("ground truth dimensions do not match the generation config");

  truth.Sigma = toeplitz_covariance(cfg.p, cfg.corr_decay);
  Eigen::LLT<Eigen::MatrixXd> chol(truth.Sigma);
  if (chol.info() != Eigen::Success) throw ConfigError("feature covariance is not positive definite");
  const Eigen::MatrixXd chol_l = chol.matrixL();

  std::mt19937_64 rng(mix_seed(cfg.seed, 0xDA7A));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<TaskDataset> tasks(cfg.m);
  double max_row_norm = 0.0;
  for (int j = 0; j < cfg.m; ++j) {
    TaskDataset& t = tasks[j];
    t.index = j + 1;
    t.features = randn_matrix(cfg.n, cfg.p, rng) * chol_l.transpose();
    max_row_norm = std::max(max_row_norm, t.features.rowwise().norm().maxCoeff());

    const Eigen::VectorXd margins = t.features * truth.W_star.col(j);
    t.responses.resize(cfg.n);
    if (cfg.task_kind == LossKind::kSquared) {
      for (int i = 0; i < cfg.n; ++i)
        t.responses(i) = margins(i) + cfg.noise_std * gauss(rng);
    } else {
      for (int i = 0; i < cfg.n; ++i)
        t.responses(i) = unif(rng) < sigmoid(margins(i)) ? 1.0 : -1.0;
    }
  }

  // Global rescale: rows down by s, W* up by s; predictions unchanged.
  const double s = max_row_norm;
  if (s > 0.0) {
    for (auto& t : tasks) {
      t.features /= s;
      t.scale = s;
    }
    truth.W_star *= s;
  }
  truth.feature_scale = s > 0.0 ? s : 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(truth.Sigma);
  truth.p_eff = truth.feature_scale * truth.feature_scale / eig.eigenvalues().maxCoeff();
  return tasks;
}

RiskEvaluator::RiskEvaluator(const GroundTruth& truth, const LossModel& model,
                             int mc_samples, std::uint64_t eval_seed)
    : model_(model), w_star_(truth.W_star) {
  const double s2 = truth.feature_scale * truth.feature_scale;
  if (model.kind() == LossKind::kSquared) {
    sigma_scaled_ = truth.Sigma / s2;
    return;
  }
  if (mc_samples < 1) throw ConfigError("mc_samples must be positive");

  Eigen::LLT<Eigen::MatrixXd> chol(truth.Sigma);
  if (chol.info() != Eigen::Success) throw ConfigError("feature covariance is not positive definite");
  const Eigen::MatrixXd chol_l = chol.matrixL();

  std::mt19937_64 rng(mix_seed(eval_seed, 0xE7A1));
  const int m = truth.m();
  eval_features_.reserve(m);
  plus_prob_.reserve(m);
  base_risk_ = 0.0;
  for (int j = 0; j < m; ++j) {
    Eigen::MatrixXd e =
        (randn_matrix(mc_samples, truth.p(), rng) * chol_l.transpose()) / truth.feature_scale;
    const Eigen::VectorXd margins = e * w_star_.col(j);
    Eigen::VectorXd q(mc_samples);
    double risk = 0.0;
    for (int i = 0; i < mc_samples; ++i) {
      q(i) = sigmoid(margins(i));
      risk += q(i) * model_.value(margins(i), 1.0) + (1.0 - q(i)) * model_.value(margins(i), -1.0);
    }
    base_risk_ += risk / mc_samples;
    eval_features_.push_back(std::move(e));
    plus_prob_.push_back(std::move(q));
  }
  base_risk_ /= m;
}

double RiskEvaluator::excess(const Eigen::MatrixXd& w) const {
  if (w.rows() != w_star_.rows() || w.cols() != w_star_.cols())
    throw ConfigError("predictor matrix dimensions do not match the ground truth");
  const int m = static_cast<int>(w.cols());

  if (model_.kind() == LossKind::kSquared) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      const Eigen::VectorXd d = w.col(j) - w_star_.col(j);
      sum += d.dot(sigma_scaled_ * d);
    }
    return sum / (2.0 * m);
  }

  double risk = 0.0;
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd margins = eval_features_[j] * w.col(j);
    const Eigen::VectorXd& q = plus_prob_[j];
    double task_risk = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i)
      task_risk += q(i) * model_.value(margins(i), 1.0) +
                   (1.0 - q(i)) * model_.value(margins(i), -1.0);
    risk += task_risk / margins.size();
  }
  return risk / m - base_risk_;
}

double excess_risk(const Eigen::MatrixXd& w, const GroundTruth& truth,
                   const LossModel& model, int mc_samples, std::uint64_t eval_seed) {
  return RiskEvaluator(truth, model, mc_samples, eval_seed).excess(w);
}

Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.kind = cfg.task_kind;
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  ds.tasks = gen_tasks(cfg, truth);
  ds.truth = std::move(truth);
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  if (ds.tasks.empty()) throw ConfigError("dataset has no tasks");
  fs::create_directories(dir);
  const fs::path root(dir);
  const int p = ds.p();

  json meta;
  meta["format"] = "dmtl-dataset";
  meta["version"] = 1;
  meta["p"] = p;
  meta["m"] = ds.m();
  meta["task_kind"] = ds.kind == LossKind::kSquared ? "regression" : "classification";
  std::vector<int> ns;
  for (const auto& t : ds.tasks) ns.push_back(t.n());
  meta["n"] = ns;

  for (int j = 0; j < ds.m(); ++j) {
    const TaskDataset& t = ds.tasks[j];
    if (t.p() != p) throw ConfigError("tasks disagree on the feature dimension");
    std::ofstream out(root / ("task_" + std::to_string(j + 1) + ".csv"));
    if (!out) throw IoError("cannot write task file in " + dir);
    out << 'y';
    for (int k = 1; k <= p; ++k) out << ",x" << k;
    out << '\n';
    for (int i = 0; i < t.n(); ++i) {
      out << fmt_double(t.responses(i));
      for (int k = 0; k < p; ++k) out << ',' << fmt_double(t.features(i, k));
      out << '\n';
    }
  }

  if (ds.truth) {
    const GroundTruth& truth = *ds.truth;
    write_matrix_csv(truth.W_star, root / "wstar.csv");
    write_matrix_csv(truth.U_true, root / "utrue.csv");
    write_matrix_csv(truth.Sigma, root / "sigma.csv");
    meta["wstar"] = "wstar.csv";
    meta["utrue"] = "utrue.csv";
    meta["sigma"] = "sigma.csv";
    meta["feature_scale"] = truth.feature_scale;
    meta["r"] = truth.r();
  }

  std::ofstream mout(root / "meta.json");
  if (!mout) throw IoError("cannot write meta.json in " + dir);
  mout << meta.dump(2) << '\n';
}

Dataset load_csv_tasks(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream min(root / "meta.json");
  if (!min) throw IoError("missing meta.json in " + dir);
  json meta;
  try {
    min >> meta;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed meta.json: ") + e.what());
  }

  Dataset ds;
  const int p = meta.at("p").get<int>();
  const int m = meta.at("m").get<int>();
  const std::string kind = meta.at("task_kind").get<std::string>();
  if (kind == "regression")
    ds.kind = LossKind::kSquared;
  else if (kind == "classification")
    ds.kind = LossKind::kLogistic;
  else
    throw IoError("unknown task_kind in meta.json: " + kind);
  if (p < 1 || m < 1) throw IoError("meta.json has invalid dimensions");

  for (int j = 1; j <= m; ++j) {
    const fs::path path = root / ("task_" + std::to_string(j) + ".csv");
    std::ifstream in(path);
    if (!in) throw IoError("missing task file " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IoError("empty task file " + path.string());
    std::vector<double> ys;
    std::vector<double> xs;
    int rows = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string field;
      int col = 0;
      while (std::getline(ss, field, ',')) {
        const double v = parse_double(field);
        if (col == 0)
          ys.push_back(v);
        else
          xs.push_back(v);
        ++col;
      }
      if (col != p + 1)
        throw IoError("row with " + std::to_string(col) + " fields (expected " +
                      std::to_string(p + 1) + ") in " + path.string());
      ++rows;
    }
    if (rows == 0) throw IoError("task file has no samples: " + path.string());

    TaskDataset t;
    t.index = j;
    t.responses = Eigen::Map<Eigen::VectorXd>(ys.data(), rows);
    t.features.resize(rows, p);
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < p; ++k) t.features(i, k) = xs[static_cast<std::size_t>(i) * p + k];

    const double max_norm = t.features.rowwise().norm().maxCoeff();
    if (max_norm > 1.0) {
      t.features /= max_norm;
      t.scale = max_norm;
    }

    if (ds.kind == LossKind::kLogistic) {
      bool zero_one = true, plus_minus = true;
      for (int i = 0; i < rows; ++i) {
        const double y = t.responses(i);
        zero_one &= (y == 0.0 || y == 1.0);
        plus_minus &= (y == -1.0 || y == 1.0);
      }
      if (plus_minus) {
        // already in the internal convention
      } else if (zero_one) {
        std::cerr << "dmtl: task " << j << ": remapping {0,1} labels to {-1,+1}\n";
        t.responses = (2.0 * t.responses.array() - 1.0).matrix();
      } else {
        throw IoError("classification labels must be {0,1} or {-1,+1} in " + path.string());
      }
    }
    ds.tasks.push_back(std::move(t));
  }

  if (meta.contains("wstar") && meta.contains("sigma")) {
    GroundTruth truth;
    truth.W_star = read_matrix_csv(root / meta["wstar"].get<std::string>(), p, m);
    truth.Sigma = read_matrix_csv(root / meta["sigma"].get<std::string>(), p, p);
    truth.feature_scale = meta.value("feature_scale", 1.0);
    if (meta.contains("utrue")) {
      const int r = meta.value("r", 0);
      if (r > 0) truth.U_true = read_matrix_csv(root / meta["utrue"].get<std::string>(), p, r);
    }
    ThinSvd svd = thin_svd(truth.W_star);
    truth.S_diag = svd.s;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(truth.Sigma);
    truth.p_eff =
        truth.feature_scale * truth.feature_scale / eig.eigenvalues().maxCoeff();
    ds.truth = std::move(truth);
  }
  return ds;
}

}  // namespace dmtl
