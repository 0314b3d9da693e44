#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dmtl;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dmtl_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec tiny_spec(LossKind kind = LossKind::kSquared) {
  ExperimentSpec spec;
  GenConfig g;
  g.n = 24;
  g.p = 10;
  g.m = 6;
  g.r = 2;
  g.seed = 5;
  g.task_kind = kind;
  spec.gen = g;
  spec.seeds = {1, 2};
  spec.mc_samples = 200;
  spec.auto_baselines = false;
  spec.jobs = 1;
  return spec;
}

int count_data_rows(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int rows = 0;
  while (std::getline(ss, line))
    if (line.rfind("round,", 0) == 0 || line.rfind("summary,", 0) == 0) ++rows;
  return rows;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

}  // namespace

TEST_CASE("tune basics") {
  GenConfig g;
  g.n = 30;
  g.p = 8;
  g.m = 4;
  g.r = 2;
  g.seed = 3;
  g.noise_std = 0.0;  // noiseless: the oracle lambda is (near) zero
  GroundTruth truth = gen_wstar(g.p, g.m, g.r, g.seed);
  auto tasks = gen_tasks(g, truth);
  const LossModel model = LossModel::squared();
  InstanceInfo info{g.p, g.m, 1.0, g.r};

  std::vector<TaskDataset> train, val;
  for (const auto& t : tasks) {
    train.push_back({t.index, t.features.topRows(24), t.responses.head(24), t.scale});
    val.push_back({t.index, t.features.bottomRows(6), t.responses.tail(6), t.scale});
  }

  // single-point grid returns that point
  GridAxis one{{0.25}, true, [](SolverConfig& c, double v) { c.lambda = v; }};
  CHECK(tune("centralize", SolverConfig{}, one, train, val, model, info).lambda == 0.25);

  // a grid containing a tiny lambda finds (near) zero validation loss
  GridAxis grid{{1e-9, 1e-3, 1e-1, 1.0}, true,
                [](SolverConfig& c, double v) { c.lambda = v; }};
  SolverConfig picked = tune("centralize", SolverConfig{}, grid, train, val, model, info);
  CHECK(picked.lambda == 1e-9);
  const Eigen::MatrixXd w =
      nuclear_regularized_fit(train, model, picked.lambda, 1.0, 1e-9, 100000).W;
  CHECK(mean_empirical_loss(model, val, w) <= 1e-6);

  // order invariance
  GridAxis shuffled{{1.0, 1e-9, 1e-1, 1e-3}, true,
                    [](SolverConfig& c, double v) { c.lambda = v; }};
  CHECK(tune("centralize", SolverConfig{}, shuffled, train, val, model, info).lambda ==
        picked.lambda);

  CHECK_THROWS_AS(
      tune("centralize", SolverConfig{}, GridAxis{{}, true, grid.apply}, train, val,
           model, info),
      ConfigError);
}

TEST_CASE("ties break toward more regularization") {
  // constant-zero responses: every ridge gives the same zero solution
  std::vector<TaskDataset> train, val;
  TaskDataset t;
  t.index = 1;
  t.features = Eigen::MatrixXd::Identity(4, 4) * 0.5;
  t.responses = Eigen::VectorXd::Zero(4);
  train.push_back(t);
  val.push_back(t);

  GridAxis grid{{0.1, 10.0, 1.0}, true, [](SolverConfig& c, double v) { c.ridge = v; }};
  const LossModel model = LossModel::squared();
  InstanceInfo info{4, 1, 1.0, 1};
  CHECK(tune("local", SolverConfig{}, grid, train, val, model, info).ridge == 10.0);

  GridAxis smaller{{0.1, 10.0, 1.0}, false, [](SolverConfig& c, double v) { c.ridge = v; }};
  CHECK(tune("local", SolverConfig{}, smaller, train, val, model, info).ridge == 0.1);
}

TEST_CASE("a local-only experiment writes one data row with zero communication") {
  ExperimentSpec spec = tiny_spec();
  spec.solvers = {{"local", "", {}, true}};
  const fs::path out = fresh_dir("local_only");
  ExperimentSummary s = run_experiment(spec, out.string());
  CHECK(s.cells == 2);
  CHECK(s.diverged == 0);

  for (std::uint64_t seed : {1, 2}) {
    const std::string text =
        slurp(out / ("trace_local_seed" + std::to_string(seed) + ".csv"));
    CHECK(count_data_rows(text) == 1);
    std::stringstream ss(text);
    std::string line;
    std::getline(ss, line);  // comment
    std::getline(ss, line);  // header
    std::getline(ss, line);  // the single summary row
    const auto f = split_csv(line);
    CHECK(f[0] == "summary");
    CHECK(f[2] == "0");  // vectors per worker
    CHECK(f[7] == "converged");
  }
  fs::remove_all(out);
}

TEST_CASE("baselines are appended automatically") {
  ExperimentSpec spec = tiny_spec();
  spec.solvers = {{"dgsp", "", {}, true}};
  spec.seeds = {4};
  spec.auto_baselines = true;
  const fs::path out = fresh_dir("auto_baselines");
  run_experiment(spec, out.string());
  CHECK(fs::exists(out / "trace_dgsp_seed4.csv"));
  CHECK(fs::exists(out / "trace_local_seed4.csv"));
  CHECK(fs::exists(out / "trace_centralize_seed4.csv"));
  CHECK(fs::exists(out / "trace_bestrep_seed4.csv"));
  fs::remove_all(out);
}

TEST_CASE("identical specs produce byte-identical outputs") {
  ExperimentSpec spec = tiny_spec();
  SolverConfig pg;
  pg.rounds = 25;
  spec.solvers = {{"local", "", {}, true}, {"proxgd", "", pg, true}, {"dgsp", "", {}, true}};

  const fs::path out1 = fresh_dir("det1");
  const fs::path out2 = fresh_dir("det2");
  const fs::path out3 = fresh_dir("det3");
  run_experiment(spec, out1.string());
  run_experiment(spec, out2.string());
  spec.jobs = 2;  // schedule independence
  run_experiment(spec, out3.string());

  int compared = 0;
  for (const auto& e : fs::directory_iterator(out1)) {
    const std::string name = e.path().filename().string();
    CHECK(slurp(out1 / name) == slurp(out2 / name));
    CHECK(slurp(out1 / name) == slurp(out3 / name));
    ++compared;
  }
  CHECK(compared == 6);
  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("seeds vary the instance") {
  ExperimentSpec spec = tiny_spec();
  spec.solvers = {{"local", "", {}, true}};
  const fs::path out = fresh_dir("seed_variation");
  run_experiment(spec, out.string());
  CHECK(slurp(out / "trace_local_seed1.csv") != slurp(out / "trace_local_seed2.csv"));
  fs::remove_all(out);
}

TEST_CASE("divergent cells are recorded, not crashed") {
  ExperimentSpec spec = tiny_spec();
  SolverConfig bad;
  bad.eta = 1e7;
  bad.lambda = 1e-6;
  bad.rounds = 50;
  spec.solvers = {{"proxgd", "", bad, false}};
  spec.seeds = {1};
  const fs::path out = fresh_dir("diverged");
  ExperimentSummary s = run_experiment(spec, out.string());
  CHECK(s.diverged == 1);
  const std::string text = slurp(out / "trace_proxgd_seed1.csv");
  CHECK(text.find("diverged") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("spec parsing and validation") {
  CHECK_THROWS_AS(parse_experiment_spec("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"solvers":["local"]})"), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_spec(
          R"({"gen":{"n":4,"p":3,"m":2,"r":1,"task":"regression"},"solvers":[]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_spec(
          R"({"gen":{"n":4,"p":3,"m":2,"r":1,"task":"regression"},"solvers":["local"],"seeds":[1,1]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_spec(
          R"({"gen":{"n":4,"p":3,"m":2,"r":9,"task":"regression"},"solvers":["local"]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_spec(
          R"({"gen":{"n":4,"p":3,"m":2,"r":1,"task":"regression"},"solvers":[{"name":"dgsp","rounds":0}]})"),
      ConfigError);

  const ExperimentSpec ok = parse_experiment_spec(R"({
    "gen": {"n": 8, "p": 4, "m": 3, "r": 1, "task": "classification", "seed": 9},
    "solvers": ["local", {"name": "proxgd", "lambda": 0.5, "tune": false}],
    "seeds": [3, 4],
    "validation_fraction": 0.25
  })");
  CHECK(ok.gen->task_kind == LossKind::kLogistic);
  CHECK(ok.solvers[1].config.lambda == 0.5);
  CHECK_FALSE(ok.solvers[1].tune);
  CHECK(spec_hash(ok).size() == 16);
  CHECK(spec_hash(ok) == spec_hash(ok));
}

TEST_CASE("summarize aggregates across seeds") {
  const fs::path dir = fresh_dir("summarize");
  const char* header = "row,t,vectors_per_worker,empirical_loss,excess_risk,rank,wall_ms,status";
  {
    std::ofstream f(dir / "trace_toy_seed1.csv");
    f << "# dmtl-trace spec=abc solver=toy seed=1 kind=regression\n" << header << "\n";
    f << "round,1,2,0.5,0.2,1,,\nround,2,4,0.4,0.1,1,,\nsummary,2,4,0.4,0.1,1,,max_rounds\n";
  }
  {
    std::ofstream f(dir / "trace_toy_seed2.csv");
    f << "# dmtl-trace spec=abc solver=toy seed=2 kind=regression\n" << header << "\n";
    f << "round,1,2,0.5,0.3,1,,\nround,2,4,0.4,0.2,1,,\nsummary,2,4,0.4,0.2,1,,max_rounds\n";
  }
  const fs::path agg = dir / "aggregate.csv";
  summarize(dir.string(), agg.string(), {0.5, 0.16});

  const std::string text = slurp(agg);
  std::stringstream ss(text);
  std::string line;
  std::getline(ss, line);  // comment
  std::getline(ss, line);
  CHECK(line ==
        "solver,t,vectors_per_worker,mean_empirical_loss,mean_excess_risk,"
        "std_excess_risk,seeds,rounds_to_eps_0.5,rounds_to_eps_0.16");
  std::getline(ss, line);
  auto f1 = split_csv(line);
  CHECK(f1[0] == "toy");
  CHECK(f1[1] == "1");
  CHECK(std::stod(f1[4]) == doctest::Approx(0.25));
  CHECK(std::stod(f1[5]) == doctest::Approx(0.05));
  CHECK(f1[6] == "2");
  CHECK(f1[7] == "1");  // mean 0.25 <= 0.5 at t=1
  CHECK(f1[8] == "2");  // mean 0.15 <= 0.16 at t=2
  std::getline(ss, line);
  auto f2 = split_csv(line);
  CHECK(std::stod(f2[4]) == doctest::Approx(0.15));
  fs::remove_all(dir);
}

TEST_CASE("summarize flags schema drift and single-seed runs have zero deviation") {
  const fs::path dir = fresh_dir("summarize_edge");
  {
    std::ofstream f(dir / "trace_solo_seed1.csv");
    f << "# dmtl-trace spec=abc solver=solo seed=1 kind=regression\n"
      << "row,t,vectors_per_worker,empirical_loss,excess_risk,rank,wall_ms,status\n"
      << "round,1,2,0.5,0.25,1,,\nsummary,1,2,0.5,0.25,1,,converged\n";
  }
  const fs::path agg = dir / "aggregate.csv";
  summarize(dir.string(), agg.string());
  const std::string text = slurp(agg);
  CHECK(text.find("solo,1,2,") != std::string::npos);
  std::stringstream ss(text);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  std::getline(ss, line);
  auto f = split_csv(line);
  CHECK(std::stod(f[5]) == 0.0);  // std over one seed

  {
    std::ofstream f2(dir / "trace_bad_seed1.csv");
    f2 << "# dmtl-trace spec=abc solver=bad seed=1 kind=regression\n"
       << "row,t,vectors,loss\nround,1,2,0.5\n";
  }
  CHECK_THROWS_AS(summarize(dir.string(), agg.string()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("sharing the subspace beats single-task fits on a small sweep") {
  ExperimentSpec spec;
  GenConfig g;
  g.n = 20;
  g.p = 40;
  g.m = 30;
  g.r = 2;
  g.seed = 11;
  spec.gen = g;
  spec.seeds = {1, 2, 3, 4, 5, 6};
  spec.solvers = {{"local", "", {}, true}, {"centralize", "", {}, true}};
  spec.auto_baselines = false;
  const fs::path out = fresh_dir("ordering");
  run_experiment(spec, out.string());

  auto mean_excess = [&](const std::string& solver) {
    double sum = 0.0;
    for (std::uint64_t s : spec.seeds) {
      const std::string text =
          slurp(out / ("trace_" + solver + "_seed" + std::to_string(s) + ".csv"));
      std::stringstream ss(text);
      std::string line;
      double excess = -1.0;
      while (std::getline(ss, line))
        if (line.rfind("summary,", 0) == 0) excess = std::stod(split_csv(line)[4]);
      REQUIRE(excess >= 0.0);
      sum += excess;
    }
    return sum / spec.seeds.size();
  };

  CHECK(mean_excess("centralize") < mean_excess("local"));
  fs::remove_all(out);
}
