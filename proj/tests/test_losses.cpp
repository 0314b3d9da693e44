#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"

#include "losses.hpp"

using namespace dmtl;

TEST_CASE("loss values") {
  const LossModel sq = LossModel::squared();
  const LossModel lo = LossModel::logistic();

  CHECK(sq.value(0.0, 0.0) == 0.0);
  CHECK(sq.value(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(lo.value(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(sq.smoothness() == 1.0);
  CHECK(lo.smoothness() == 0.25);

  CHECK_THROWS_AS(lo.value(0.0, 0.5), ConfigError);
  CHECK_THROWS_AS(lo.grad2(0.0, 2.0), ConfigError);
}

TEST_CASE("loss derivatives") {
  const LossModel sq = LossModel::squared();
  const LossModel lo = LossModel::logistic();

  CHECK(sq.grad2(2.0, 1.0).first == doctest::Approx(1.0));
  CHECK(sq.grad2(2.0, 1.0).second == doctest::Approx(1.0));
  CHECK(lo.grad2(0.0, 1.0).first == doctest::Approx(-0.5));
  CHECK(lo.grad2(0.0, 1.0).second == doctest::Approx(0.25));

  // sigma(3) and sigma(3)sigma(-3), confirmed by finite differences
  const auto [g, h] = lo.grad2(3.0, -1.0);
  CHECK(g == doctest::Approx(0.9525741268224334).epsilon(1e-12));
  CHECK(h == doctest::Approx(0.0451766597309121).epsilon(1e-10));
  CHECK(g == doctest::Approx(oracle::fd_first(lo, 3.0, -1.0)).epsilon(1e-6));
  CHECK(h == doctest::Approx(oracle::fd_second(lo, 3.0, -1.0)).epsilon(1e-5));
}

TEST_CASE("derivatives match finite differences everywhere sampled") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-4.0, 4.0);
  for (const LossModel& model : {LossModel::squared(), LossModel::logistic()}) {
    for (int it = 0; it < 10000; ++it) {
      const double a = unif(rng);
      double y;
      if (model.kind() == LossKind::kLogistic)
        y = it % 2 == 0 ? 1.0 : -1.0;
      else
        y = unif(rng);
      const auto [g, h] = model.grad2(a, y);
      CHECK(g == doctest::Approx(oracle::fd_first(model, a, y)).epsilon(1e-6));
      CHECK(h == doctest::Approx(oracle::fd_second(model, a, y)).epsilon(1e-5));
      CHECK(h >= 0.0);
      CHECK(h <= model.smoothness() + 1e-12);
    }
  }
}

TEST_CASE("task loss") {
  const LossModel sq = LossModel::squared();

  // exact interpolator
  TaskDataset t;
  t.features = Eigen::MatrixXd::Identity(3, 3) * 0.5;
  Eigen::VectorXd w(3);
  w << 1.0, -2.0, 0.5;
  t.responses = t.features * w;
  CHECK(task_loss(sq, t, w) == 0.0);
  CHECK(task_gradient(sq, t, w).norm() == doctest::Approx(0.0));

  // two samples (e1, 1), (e2, 0) at w = 0
  TaskDataset t2;
  t2.features = Eigen::MatrixXd::Identity(2, 2);
  t2.responses.resize(2);
  t2.responses << 1.0, 0.0;
  CHECK(task_loss(sq, t2, Eigen::VectorXd::Zero(2)) == doctest::Approx(0.25));

  // single sample at w = 0: gradient is -y x
  TaskDataset t3;
  t3.features.resize(1, 4);
  t3.features << 0.1, 0.2, -0.3, 0.4;
  t3.responses.resize(1);
  t3.responses << 2.0;
  const Eigen::VectorXd g = task_gradient(sq, t3, Eigen::VectorXd::Zero(4));
  CHECK((g + 2.0 * t3.features.row(0).transpose()).norm() == doctest::Approx(0.0));

  CHECK_THROWS_AS(task_loss(sq, t3, Eigen::VectorXd::Zero(3)), ConfigError);
}

TEST_CASE("task loss and gradient match brute-force oracles") {
  std::mt19937_64 rng(11);
  for (const LossModel& model : {LossModel::squared(), LossModel::logistic()}) {
    TaskDataset t = oracle::random_task(5, 3, model, rng);
    const Eigen::VectorXd w = oracle::randn(3, 1, rng);
    CHECK(task_loss(model, t, w) ==
          doctest::Approx(oracle::task_loss_loop(model, t, w)).epsilon(1e-12));

    TaskDataset t8 = oracle::random_task(8, 4, model, rng);
    const Eigen::VectorXd w4 = oracle::randn(4, 1, rng);
    const Eigen::VectorXd g = task_gradient(model, t8, w4);
    const Eigen::VectorXd g_fd = oracle::fd_task_gradient(model, t8, w4);
    CHECK((g - g_fd).norm() <= 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("gradient is linear in the dataset") {
  std::mt19937_64 rng(13);
  const LossModel sq = LossModel::squared();
  TaskDataset a = oracle::random_task(6, 4, sq, rng);
  TaskDataset b = oracle::random_task(10, 4, sq, rng);

  TaskDataset cat;
  cat.features.resize(16, 4);
  cat.features << a.features, b.features;
  cat.responses.resize(16);
  cat.responses << a.responses, b.responses;

  const Eigen::VectorXd w = oracle::randn(4, 1, rng);
  const Eigen::VectorXd expected =
      (6.0 * task_gradient(sq, a, w) + 10.0 * task_gradient(sq, b, w)) / 16.0;
  CHECK((task_gradient(sq, cat, w) - expected).norm() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("hessian spectral norm stays below the smoothness bound") {
  std::mt19937_64 rng(17);
  for (const LossModel& model : {LossModel::squared(), LossModel::logistic()}) {
    for (int it = 0; it < 20; ++it) {
      TaskDataset t = oracle::random_task(12, 5, model, rng);
      const Eigen::VectorXd w = oracle::randn(5, 1, rng);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
          oracle::dense_task_hessian(model, t, w));
      const double top = eig.eigenvalues().maxCoeff();
      const double row_bound =
          model.smoothness() * std::pow(t.features.rowwise().norm().maxCoeff(), 2);
      CHECK(top <= row_bound + 1e-12);
      CHECK(top <= model.smoothness() + 1e-12);
    }
  }
}

TEST_CASE("hessian-vector products match finite differences") {
  std::mt19937_64 rng(19);
  for (const LossModel& model : {LossModel::squared(), LossModel::logistic()}) {
    TaskDataset t = oracle::random_task(9, 4, model, rng);
    const Eigen::VectorXd w = oracle::randn(4, 1, rng);
    const Eigen::VectorXd v = oracle::randn(4, 1, rng);
    const Eigen::VectorXd hv = task_hessian_vec(model, t, w, v);
    const Eigen::VectorXd hv_fd = oracle::fd_hessian_vec(model, t, w, v);
    CHECK((hv - hv_fd).norm() <= 1e-5 * std::max(1.0, hv.norm()));
  }
}

TEST_CASE("newton direction") {
  std::mt19937_64 rng(23);
  const LossModel sq = LossModel::squared();

  // (1/n) X^T X = I: the direction is the gradient, i.e. w - w_ols
  const int n = 6, p = 4;
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(oracle::randn(n, p, rng))
                          .householderQ() *
                      Eigen::MatrixXd::Identity(n, p);
  TaskDataset t;
  t.features = std::sqrt(static_cast<double>(n)) * q;
  t.responses = oracle::randn(n, 1, rng);
  const Eigen::VectorXd w = oracle::randn(p, 1, rng);
  const Eigen::VectorXd dir = task_newton_direction(sq, t, w, 0.0);
  const Eigen::VectorXd w_ols = t.features.transpose() * t.responses / n;
  CHECK((dir - (w - w_ols)).norm() <= 1e-10);
  CHECK((dir - task_gradient(sq, t, w)).norm() <= 1e-12);

  // dense-factorization oracle
  for (const LossModel& model : {LossModel::squared(), LossModel::logistic()}) {
    TaskDataset t20 = oracle::random_task(20, 5, model, rng);
    const Eigen::VectorXd w5 = oracle::randn(5, 1, rng);
    const Eigen::VectorXd d = task_newton_direction(model, t20, w5, 1e-3);
    const Eigen::VectorXd d_oracle = oracle::dense_newton_direction(model, t20, w5, 1e-3);
    CHECK((d - d_oracle).norm() <= 1e-8 * std::max(1.0, d_oracle.norm()));
  }

  // rank-deficient with no ridge must fail loudly
  TaskDataset thin = oracle::random_task(3, 5, sq, rng);
  CHECK_THROWS_AS(task_newton_direction(sq, thin, Eigen::VectorXd::Zero(5), 0.0), ConfigError);
}

TEST_CASE("task validation") {
  const LossModel lo = LossModel::logistic();
  TaskDataset t;
  t.features.resize(1, 2);
  t.features << 3.0, 0.0;  // row norm above 1
  t.responses.resize(1);
  t.responses << 1.0;
  CHECK_THROWS_AS(validate_task(t, lo), ConfigError);
  t.features << 0.5, 0.0;
  t.responses << 0.0;  // invalid logistic label
  CHECK_THROWS_AS(validate_task(t, lo), ConfigError);
  t.responses << -1.0;
  CHECK_NOTHROW(validate_task(t, lo));
}
