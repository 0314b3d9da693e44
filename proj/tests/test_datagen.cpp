#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "datagen.hpp"
#include "matkernels.hpp"

#include <filesystem>
#include <fstream>

using namespace dmtl;
namespace fs = std::filesystem;

namespace {

GenConfig base_config(int n, int p, int m, int r, std::uint64_t seed,
                      LossKind kind = LossKind::kSquared) {
  GenConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.m = m;
  cfg.r = r;
  cfg.seed = seed;
  cfg.task_kind = kind;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dmtl_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gen_wstar spectrum and subspace") {
  GroundTruth t1 = gen_wstar(8, 6, 1, 12);
  CHECK(singular_values(t1.W_star)(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(singular_values(t1.W_star).tail(5).maxCoeff() <= 1e-12);

  GroundTruth t3 = gen_wstar(10, 7, 3, 13);
  CHECK(t3.S_diag(0) == doctest::Approx(1.0));
  CHECK(t3.S_diag(1) == doctest::Approx(1.0 / 1.5).epsilon(1e-12));
  CHECK(t3.S_diag(2) == doctest::Approx(1.0 / 2.25).epsilon(1e-12));

  const Eigen::VectorXd s = thin_svd(t3.W_star).s;
  CHECK((s.head(3) - t3.S_diag).norm() <= 1e-10);
  CHECK((t3.U_true.transpose() * t3.U_true - Eigen::MatrixXd::Identity(3, 3)).norm() <=
        1e-10);

  CHECK_THROWS_AS(gen_wstar(4, 3, 5, 1), ConfigError);
}

TEST_CASE("generated tasks satisfy the data assumptions deterministically") {
  GenConfig cfg = base_config(25, 10, 6, 2, 99);
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  auto tasks = gen_tasks(cfg, truth);

  double max_norm = 0.0;
  for (const auto& t : tasks) {
    CHECK(t.n() == 25);
    CHECK(t.p() == 10);
    max_norm = std::max(max_norm, t.features.rowwise().norm().maxCoeff());
  }
  CHECK(max_norm == doctest::Approx(1.0).epsilon(1e-12));

  // rescaling preserved the rank and the subspace
  const Eigen::VectorXd s = thin_svd(truth.W_star).s;
  CHECK(static_cast<int>((s.array() > 1e-12 * s(0)).count()) == 2);

  GroundTruth truth2 = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  auto tasks2 = gen_tasks(cfg, truth2);
  for (int j = 0; j < cfg.m; ++j) {
    CHECK(tasks[j].features == tasks2[j].features);
    CHECK(tasks[j].responses == tasks2[j].responses);
  }
  CHECK(truth.W_star == truth2.W_star);
}

TEST_CASE("noiseless hook and classification labels") {
  GenConfig cfg = base_config(15, 6, 4, 2, 7);
  cfg.noise_std = 0.0;
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  auto tasks = gen_tasks(cfg, truth);
  for (int j = 0; j < cfg.m; ++j) {
    // roundoff from the inverse rescale of W* is the only discrepancy
    const Eigen::VectorXd fitted = tasks[j].features * truth.W_star.col(j);
    CHECK((fitted - tasks[j].responses).norm() <= 1e-12);
  }

  GenConfig cls = base_config(30, 6, 4, 2, 8, LossKind::kLogistic);
  GroundTruth truth_c = gen_wstar(cls.p, cls.m, cls.r, cls.seed);
  auto ctasks = gen_tasks(cls, truth_c);
  for (const auto& t : ctasks)
    for (int i = 0; i < t.n(); ++i)
      CHECK((t.responses(i) == 1.0 || t.responses(i) == -1.0));
}

TEST_CASE("infinite decay gives independent features") {
  CHECK(toeplitz_covariance(5, 1e6) == Eigen::MatrixXd::Identity(5, 5));
}

TEST_CASE("empirical feature covariance matches the model") {
  GenConfig cfg = base_config(100000, 6, 1, 1, 21);
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  auto tasks = gen_tasks(cfg, truth);
  const double s = truth.feature_scale;
  const Eigen::MatrixXd emp =
      (tasks[0].features.transpose() * tasks[0].features) * (s * s) / cfg.n;
  CHECK((emp - truth.Sigma).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("stronger correlation means a smaller effective dimension") {
  GenConfig hard = base_config(40, 30, 8, 2, 31);
  hard.corr_decay = 0.1;
  GenConfig easy = hard;
  easy.corr_decay = 1.0;

  GroundTruth th = gen_wstar(hard.p, hard.m, hard.r, hard.seed);
  gen_tasks(hard, th);
  GroundTruth te = gen_wstar(easy.p, easy.m, easy.r, easy.seed);
  gen_tasks(easy, te);

  CHECK(th.p_eff < te.p_eff);
  CHECK(th.p_eff >= 1.0);
  CHECK(te.p_eff <= easy.p);
}

TEST_CASE("excess risk") {
  // W = W* has no excess risk
  GenConfig cfg = base_config(20, 6, 4, 2, 41);
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  gen_tasks(cfg, truth);
  CHECK(excess_risk(truth.W_star, truth, LossModel::squared()) == 0.0);

  // isotropic quadratic form: a unit perturbation of one column costs 1/(2m)
  GroundTruth iso;
  iso.W_star = Eigen::MatrixXd::Zero(4, 3);
  iso.U_true = Eigen::MatrixXd::Identity(4, 2);
  iso.S_diag = Eigen::VectorXd::Ones(2);
  iso.Sigma = Eigen::MatrixXd::Identity(4, 4);
  iso.feature_scale = 1.0;
  Eigen::MatrixXd w = iso.W_star;
  w.col(1) += Eigen::Vector4d::UnitX();
  CHECK(excess_risk(w, iso, LossModel::squared()) == doctest::Approx(0.5 / 3.0));
}

TEST_CASE("analytic regression risk matches a monte-carlo oracle") {
  GenConfig cfg = base_config(20, 5, 3, 2, 43);
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  gen_tasks(cfg, truth);

  std::mt19937_64 rng(43);
  Eigen::MatrixXd w = truth.W_star;
  w += 0.3 * oracle::randn(5, 3, rng);
  const double analytic = excess_risk(w, truth, LossModel::squared());

  // oracle: fresh draws from the rescaled feature law
  const Eigen::MatrixXd chol =
      Eigen::LLT<Eigen::MatrixXd>(truth.Sigma).matrixL();
  const int samples = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int j = 0; j < 3; ++j) {
    Eigen::MatrixXd x =
        (oracle::randn(samples / 10, 5, rng) * chol.transpose()) / truth.feature_scale;
    const Eigen::VectorXd d = (x * (w.col(j) - truth.W_star.col(j))).array().square() * 0.5;
    sum += d.sum() / (samples / 10);
    sum2 += d.array().square().sum() / (samples / 10);
  }
  const double mc = sum / 3.0;
  const double se = std::sqrt(sum2 / 3.0) / std::sqrt(static_cast<double>(samples / 10));
  CHECK(std::abs(analytic - mc) <= 3.0 * se + 1e-9);
}

TEST_CASE("classification excess risk is zero at the truth and positive away") {
  GenConfig cfg = base_config(20, 5, 3, 2, 47, LossKind::kLogistic);
  GroundTruth truth = gen_wstar(cfg.p, cfg.m, cfg.r, cfg.seed);
  gen_tasks(cfg, truth);

  RiskEvaluator eval(truth, LossModel::logistic(), 4000, 1);
  CHECK(eval.excess(truth.W_star) == 0.0);
  std::mt19937_64 rng(48);
  Eigen::MatrixXd w = truth.W_star + 0.5 * oracle::randn(5, 3, rng);
  CHECK(eval.excess(w) > 0.0);
  CHECK(eval.excess(Eigen::MatrixXd::Zero(5, 3)) > 0.0);
}

TEST_CASE("dataset round trip is bit exact") {
  GenConfig cfg = base_config(12, 5, 3, 2, 51);
  Dataset ds = generate_dataset(cfg);
  const fs::path dir = fresh_dir("roundtrip");
  save_dataset(ds, dir.string());
  Dataset loaded = load_csv_tasks(dir.string());

  REQUIRE(loaded.tasks.size() == ds.tasks.size());
  for (std::size_t j = 0; j < ds.tasks.size(); ++j) {
    CHECK(loaded.tasks[j].features == ds.tasks[j].features);
    CHECK(loaded.tasks[j].responses == ds.tasks[j].responses);
  }
  REQUIRE(loaded.truth.has_value());
  CHECK(loaded.truth->W_star == ds.truth->W_star);
  CHECK(loaded.truth->U_true == ds.truth->U_true);
  CHECK(loaded.kind == LossKind::kSquared);
  fs::remove_all(dir);
}

TEST_CASE("loader errors") {
  const fs::path dir = fresh_dir("loader_errors");

  // no meta.json at all
  CHECK_THROWS_AS(load_csv_tasks(dir.string()), IoError);

  // inconsistent feature count
  {
    std::ofstream meta(dir / "meta.json");
    meta << R"({"format":"dmtl-dataset","version":1,"p":2,"m":1,"n":[2],"task_kind":"regression"})";
  }
  {
    std::ofstream t(dir / "task_1.csv");
    t << "y,x1,x2\n1.0,0.5\n";  // short row
  }
  CHECK_THROWS_AS(load_csv_tasks(dir.string()), IoError);

  // empty task
  {
    std::ofstream t(dir / "task_1.csv");
    t << "y,x1,x2\n";
  }
  CHECK_THROWS_AS(load_csv_tasks(dir.string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("hand-written toy directory loads and rescales") {
  const fs::path dir = fresh_dir("toy");
  {
    std::ofstream meta(dir / "meta.json");
    meta << R"({"format":"dmtl-dataset","version":1,"p":2,"m":3,"n":[2,2,2],"task_kind":"regression"})";
  }
  // task 1 rows have norm 2: the loader must divide by 2 and record it
  {
    std::ofstream t(dir / "task_1.csv");
    t << "y,x1,x2\n1.0,2.0,0.0\n0.0,0.0,2.0\n";
  }
  {
    std::ofstream t(dir / "task_2.csv");
    t << "y,x1,x2\n1.0,1.0,0.0\n-1.0,0.0,1.0\n";
  }
  {
    std::ofstream t(dir / "task_3.csv");
    t << "y,x1,x2\n0.5,0.5,0.0\n0.5,0.0,0.5\n";
  }
  Dataset ds = load_csv_tasks(dir.string());
  CHECK(ds.tasks[0].scale == doctest::Approx(2.0));
  CHECK(ds.tasks[1].scale == doctest::Approx(1.0));

  // hand computation: task 1 after rescale has rows (1,0), (0,1);
  // w = (1, 1): loss = mean of (1-1)^2/2 and (1-0)^2/2 = 0.25
  Eigen::Vector2d w(1.0, 1.0);
  CHECK(task_loss(LossModel::squared(), ds.tasks[0], w) == doctest::Approx(0.25));
  // task 2: residuals 0 and -2: loss = mean(0, 2) = 1
  CHECK(task_loss(LossModel::squared(), ds.tasks[1], w) == doctest::Approx(1.0));
  // task 3: margins 0.5, 0.5 -> residuals 0 and 0: loss = 0
  CHECK(task_loss(LossModel::squared(), ds.tasks[2], w) == doctest::Approx(0.0));
  fs::remove_all(dir);
}

TEST_CASE("zero-one labels are remapped for classification") {
  const fs::path dir = fresh_dir("remap");
  {
    std::ofstream meta(dir / "meta.json");
    meta << R"({"format":"dmtl-dataset","version":1,"p":1,"m":1,"n":[2],"task_kind":"classification"})";
  }
  {
    std::ofstream t(dir / "task_1.csv");
    t << "y,x1\n1,0.5\n0,-0.5\n";
  }
  Dataset ds = load_csv_tasks(dir.string());
  CHECK(ds.tasks[0].responses(0) == 1.0);
  CHECK(ds.tasks[0].responses(1) == -1.0);

  {
    std::ofstream t(dir / "task_1.csv");
    t << "y,x1\n2,0.5\n0,-0.5\n";  // neither convention
  }
  CHECK_THROWS_AS(load_csv_tasks(dir.string()), IoError);
  fs::remove_all(dir);
}
