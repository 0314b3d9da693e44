#include "harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace dmtl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kTraceHeader =
    "row,t,vectors_per_worker,empirical_loss,excess_risk,rank,wall_ms,status";

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double parse_double_field(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double out = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec != std::errc()) throw IoError("malformed trace field: '" + s + "'");
  return out;
}

int count_rank(const Eigen::MatrixXd& w) {
  if (!w.allFinite() || w.size() == 0) return 0;
  const Eigen::VectorXd s = singular_values(w);
  return static_cast<int>((s.array() > 1e-8).count());
}

}  // namespace

// --- single-solver driver -----------------------------------------------------

RunResult run_solver(const std::string& name, SolverConfig& cfg,
                     const std::vector<TaskDataset>& tasks, const LossModel& model,
                     const InstanceInfo& info, const Eigen::MatrixXd* true_basis,
                     const RunOptions& opts) {
  Runtime rt(tasks, model);
  std::unique_ptr<Solver> solver = make_solver(name, cfg, model, info, true_basis);
  solver->init(rt);

  RunResult res;
  res.solver = name;
  res.one_shot = solver->one_shot();

  bool diverged = false;
  for (int t = 1; t <= cfg.rounds; ++t) {
    const std::int64_t before = rt.ledger().total(0);
    const auto tic = std::chrono::steady_clock::now();
    bool more = false;
    try {
      more = rt.run_round(*solver);
    } catch (const DivergenceError&) {
      diverged = true;
    }
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tic).count();

    const bool full_round =
        !diverged &&
        (res.one_shot || rt.ledger().total(0) - before == solver->vectors_per_round());
    if (full_round) {
      if (opts.record_trace) {
        const Eigen::MatrixXd w = solver->predictor(rt);
        RoundTrace row;
        row.t = t;
        row.vectors_per_worker = rt.ledger().max_total();
        const bool finite = w.allFinite();
        row.empirical_loss =
            finite ? rt.mean_empirical_loss(w) : std::numeric_limits<double>::quiet_NaN();
        row.excess_risk = (opts.evaluator && finite)
                              ? opts.evaluator->excess(w)
                              : std::numeric_limits<double>::quiet_NaN();
        row.rank = count_rank(w);
        row.wall_ms = wall_ms;
        res.trace.push_back(row);
        if (const ProjectionBasis* basis = solver->projection())
          res.max_basis_defect =
              std::max(res.max_basis_defect, basis->orthonormality_defect());
      }
      if (opts.on_round) opts.on_round(t, *solver, rt);
    }
    if (diverged || !more) break;
  }

  if (diverged)
    res.status = RunStatus::kDiverged;
  else if (solver->status() == RunStatus::kRunning)
    res.status = RunStatus::kMaxRounds;
  else
    res.status = solver->status();

  res.W = solver->predictor(rt);
  if (!res.trace.empty()) {
    res.summary = res.trace.back();
  } else {
    res.summary.t = 0;
    res.summary.vectors_per_worker = rt.ledger().max_total();
    const bool finite = res.W.allFinite();
    res.summary.empirical_loss =
        finite ? rt.mean_empirical_loss(res.W) : std::numeric_limits<double>::quiet_NaN();
    res.summary.excess_risk = (opts.evaluator && finite)
                                  ? opts.evaluator->excess(res.W)
                                  : std::numeric_limits<double>::quiet_NaN();
    res.summary.rank = count_rank(res.W);
  }
  // one-shot procedures report a single data row
  if (res.one_shot) res.trace.clear();
  return res;
}

// --- grid tuning ---------------------------------------------------------------

SolverConfig tune(const std::string& name, const SolverConfig& base, const GridAxis& axis,
                  const std::vector<TaskDataset>& train,
                  const std::vector<TaskDataset>& validation, const LossModel& model,
                  const InstanceInfo& info, const Eigen::MatrixXd* true_basis,
                  int round_cap) {
  if (axis.values.empty()) throw ConfigError("tuning grid must be nonempty");
  if (!axis.apply) throw ConfigError("tuning axis has no parameter binding");
  if (validation.empty() || axis.values.size() == 1) {
    SolverConfig out = base;
    axis.apply(out, axis.values.front());
    return out;
  }

  std::vector<double> values = axis.values;
  std::sort(values.begin(), values.end());

  std::vector<double> losses(values.size(), std::numeric_limits<double>::infinity());
  if (name == "centralize") {
    // warm-started path from the most to the least regularized fit
    Eigen::MatrixXd warm;
    for (int i = static_cast<int>(values.size()) - 1; i >= 0; --i) {
      SolverConfig cfg = base;
      axis.apply(cfg, values[i]);
      const Eigen::MatrixXd w =
          nuclear_regularized_fit(train, model, cfg.lambda, cfg.eta, 1e-5, 800,
                                  warm.size() ? &warm : nullptr)
              .W;
      losses[i] = mean_empirical_loss(model, validation, w);
      warm = w;
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      SolverConfig cfg = base;
      axis.apply(cfg, values[i]);
      if (round_cap > 0)
        cfg.rounds = cfg.rounds > 0 ? std::min(cfg.rounds, round_cap) : round_cap;
      RunOptions quick;
      quick.record_trace = false;
      try {
        RunResult r = run_solver(name, cfg, train, model, info, true_basis, quick);
        if (r.status != RunStatus::kDiverged && r.W.allFinite())
          losses[i] = mean_empirical_loss(model, validation, r.W);
      } catch (const ConfigError&) {
        // infeasible grid point (e.g. a near-zero ridge on separable
        // logistic data); leave it unusable
      }
    }
  }

  double best_loss = std::numeric_limits<double>::infinity();
  double best_value = values.front();
  bool have = false;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const bool better = !have || losses[i] < best_loss ||
                        (losses[i] == best_loss && axis.prefer_larger);
    if (better) {
      best_loss = losses[i];
      best_value = values[i];
      have = true;
    }
  }

  SolverConfig out = base;
  axis.apply(out, best_value);
  return out;
}

// --- experiment spec -----------------------------------------------------------

void ExperimentSpec::validate() const {
  if (gen.has_value() == !dataset_dir.empty())
    throw ConfigError("spec needs exactly one of 'gen' or 'dataset'");
  if (gen) gen->validate();
  if (solvers.empty()) throw ConfigError("spec has no solvers");
  if (seeds.empty()) throw ConfigError("spec has no seeds");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t k = i + 1; k < seeds.size(); ++k)
      if (seeds[i] == seeds[k]) throw ConfigError("seeds must be distinct");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw ConfigError("validation_fraction must lie in [0, 1)");
  if (mc_samples < 1) throw ConfigError("mc_samples must be positive");
  std::vector<std::string> labels;
  for (const auto& e : solvers) {
    const std::string& label = e.label.empty() ? e.name : e.label;
    if (std::find(labels.begin(), labels.end(), label) != labels.end())
      throw ConfigError("duplicate solver label: " + label + " (set 'label' to disambiguate)");
    labels.push_back(label);
  }
}

namespace {

GenConfig gen_from_json(const json& j) {
  GenConfig g;
  g.n = j.at("n").get<int>();
  g.p = j.at("p").get<int>();
  g.m = j.at("m").get<int>();
  g.r = j.at("r").get<int>();
  g.corr_decay = j.value("corr_decay", 1.0);
  g.seed = j.value("seed", std::uint64_t{0});
  g.noise_std = j.value("noise_std", 1.0);
  const std::string task = j.at("task").get<std::string>();
  if (task == "regression")
    g.task_kind = LossKind::kSquared;
  else if (task == "classification")
    g.task_kind = LossKind::kLogistic;
  else
    throw ConfigError("task must be regression or classification");
  g.validate();
  return g;
}

json gen_to_json(const GenConfig& g) {
  json j;
  j["n"] = g.n;
  j["p"] = g.p;
  j["m"] = g.m;
  j["r"] = g.r;
  j["corr_decay"] = g.corr_decay;
  j["seed"] = g.seed;
  j["noise_std"] = g.noise_std;
  j["task"] = g.task_kind == LossKind::kSquared ? "regression" : "classification";
  return j;
}

SolverEntry solver_from_json(const json& j) {
  SolverEntry e;
  if (j.is_string()) {
    e.name = j.get<std::string>();
    return e;
  }
  if (!j.is_object()) throw ConfigError("solver entries must be names or objects");
  e.name = j.at("name").get<std::string>();
  e.label = j.value("label", std::string());
  e.tune = j.value("tune", true);
  SolverConfig& c = e.config;
  c.lambda = j.value("lambda", 0.0);
  c.eta = j.value("eta", 0.0);
  c.rho = j.value("rho", 0.0);
  c.radius = j.value("R", 0.0);
  c.ridge = j.value("ridge", 0.0);
  c.newton_ridge = j.value("newton_ridge", -1.0);
  c.norm_bound = j.value("A", 0.0);
  c.assumed_rank = j.value("r", 0);
  c.rank_budget = j.value("rank_budget", 0);
  c.rounds = j.value("rounds", 0);
  c.init = j.value("init", std::string("auto"));
  if (j.contains("r") && c.assumed_rank < 1) throw ConfigError("solver r must be positive");
  if (j.contains("rank_budget") && c.rank_budget < 1)
    throw ConfigError("solver rank_budget must be positive");
  if (j.contains("rounds") && c.rounds < 1) throw ConfigError("solver rounds must be positive");
  return e;
}

json solver_to_json(const SolverEntry& e) {
  json j;
  j["name"] = e.name;
  if (!e.label.empty()) j["label"] = e.label;
  j["tune"] = e.tune;
  const SolverConfig& c = e.config;
  if (c.lambda != 0.0) j["lambda"] = c.lambda;
  if (c.eta != 0.0) j["eta"] = c.eta;
  if (c.rho != 0.0) j["rho"] = c.rho;
  if (c.radius != 0.0) j["R"] = c.radius;
  if (c.ridge != 0.0) j["ridge"] = c.ridge;
  if (c.newton_ridge >= 0.0) j["newton_ridge"] = c.newton_ridge;
  if (c.norm_bound != 0.0) j["A"] = c.norm_bound;
  if (c.assumed_rank != 0) j["r"] = c.assumed_rank;
  if (c.rank_budget != 0) j["rank_budget"] = c.rank_budget;
  if (c.rounds != 0) j["rounds"] = c.rounds;
  if (c.init != "auto") j["init"] = c.init;
  return j;
}

json spec_to_json(const ExperimentSpec& s) {
  json j;
  if (s.gen) j["gen"] = gen_to_json(*s.gen);
  if (!s.dataset_dir.empty()) j["dataset"] = s.dataset_dir;
  j["solvers"] = json::array();
  for (const auto& e : s.solvers) j["solvers"].push_back(solver_to_json(e));
  j["seeds"] = s.seeds;
  j["validation_fraction"] = s.validation_fraction;
  j["mc_samples"] = s.mc_samples;
  j["emit_timings"] = s.emit_timings;
  j["auto_baselines"] = s.auto_baselines;
  return j;
}

}  // namespace

GenConfig parse_gen_config(const std::string& json_text) {
  try {
    return gen_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid generation config: ") + e.what());
  }
}

ExperimentSpec parse_experiment_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid spec JSON: ") + e.what());
  }
  try {
    ExperimentSpec s;
    if (j.contains("gen")) s.gen = gen_from_json(j["gen"]);
    s.dataset_dir = j.value("dataset", std::string());
    if (!j.contains("solvers")) throw ConfigError("spec has no solvers");
    for (const auto& e : j["solvers"]) s.solvers.push_back(solver_from_json(e));
    s.seeds = j.value("seeds", std::vector<std::uint64_t>{0});
    s.validation_fraction = j.value("validation_fraction", 0.2);
    s.mc_samples = j.value("mc_samples", 500);
    s.emit_timings = j.value("emit_timings", false);
    s.auto_baselines = j.value("auto_baselines", true);
    s.jobs = j.value("jobs", 0);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid spec JSON: ") + e.what());
  }
}

std::string spec_hash(const ExperimentSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(spec_to_json(spec).dump())));
  return buf;
}

// --- experiment execution -------------------------------------------------------

namespace {

struct SplitTasks {
  std::vector<TaskDataset> train, validation;
};

SplitTasks split_tasks(const std::vector<TaskDataset>& tasks, double fraction) {
  SplitTasks out;
  for (const auto& t : tasks) {
    const int n_val = static_cast<int>(std::floor(fraction * t.n()));
    const int n_train = t.n() - n_val;
    if (n_train < 1) throw ConfigError("validation fraction leaves no training rows");
    TaskDataset tr{t.index, t.features.topRows(n_train), t.responses.head(n_train), t.scale};
    out.train.push_back(std::move(tr));
    if (n_val > 0) {
      TaskDataset va{t.index, t.features.bottomRows(n_val), t.responses.tail(n_val), t.scale};
      out.validation.push_back(std::move(va));
    }
  }
  if (!out.validation.empty() && out.validation.size() != tasks.size())
    throw ConfigError("validation split must cover every task");
  return out;
}

std::vector<double> log2_grid(double anchor, int lo, int hi) {
  std::vector<double> g;
  for (int k = lo; k <= hi; ++k) g.push_back(std::ldexp(anchor, k));
  return g;
}

double gradient_scale_at_zero(const LossModel& model, const std::vector<TaskDataset>& tasks) {
  const int m = static_cast<int>(tasks.size());
  Eigen::MatrixXd g(tasks.front().p(), m);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(tasks.front().p());
  for (int j = 0; j < m; ++j) g.col(j) = task_gradient(model, tasks[j], zero) / m;
  const double s = singular_values(g)(0);
  return s > 0.0 ? s : 1.0;
}

double second_moment_scale(const std::vector<TaskDataset>& tasks) {
  double sum = 0.0;
  for (const auto& t : tasks) sum += t.features.squaredNorm() / (t.n() * t.p());
  const double s = sum / tasks.size();
  return s > 0.0 ? s : 1.0;
}

std::string status_field(RunStatus s) { return to_string(s); }

void write_trace_csv(const fs::path& path, const std::string& hash,
                     const std::string& label, std::uint64_t seed, LossKind kind,
                     const RunResult& res, bool timings) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace file " + path.string());
  out << "# dmtl-trace spec=" << hash << " solver=" << label << " seed=" << seed
      << " kind=" << (kind == LossKind::kSquared ? "regression" : "classification") << '\n';
  out << kTraceHeader << '\n';

  auto emit = [&](const char* tag, const RoundTrace& row, const std::string& status) {
    out << tag << ',' << row.t << ',' << row.vectors_per_worker << ','
        << fmt_double(row.empirical_loss) << ',';
    if (!std::isnan(row.excess_risk)) out << fmt_double(row.excess_risk);
    out << ',' << row.rank << ',';
    if (timings) out << fmt_short(row.wall_ms);
    out << ',' << status << '\n';
  };

  for (const RoundTrace& row : res.trace) emit("round", row, "");
  emit("summary", res.summary, status_field(res.status));
}

struct CellPlan {
  const ExperimentSpec* spec;
  const Dataset* shared;
  std::string hash;
  std::string out_dir;
};

int run_cell(const CellPlan& plan, std::uint64_t seed) {
  const ExperimentSpec& spec = *plan.spec;

  Dataset generated;
  const Dataset* ds = plan.shared;
  if (spec.gen) {
    GenConfig g = *spec.gen;
    g.seed = mix_seed(spec.gen->seed, seed);
    generated = generate_dataset(g);
    ds = &generated;
  }
  const LossModel model =
      ds->kind == LossKind::kSquared ? LossModel::squared() : LossModel::logistic();

  InstanceInfo info;
  info.p = ds->p();
  info.m = ds->m();
  if (ds->truth) {
    info.norm_bound = ds->truth->W_star.colwise().norm().maxCoeff();
    info.rank = ds->truth->r();
  }
  const Eigen::MatrixXd* true_basis =
      (ds->truth && ds->truth->U_true.size() > 0) ? &ds->truth->U_true : nullptr;

  std::optional<RiskEvaluator> evaluator;
  if (ds->truth) evaluator.emplace(*ds->truth, model, spec.mc_samples, mix_seed(seed, 0xEA7));

  const SplitTasks split = split_tasks(ds->tasks, spec.validation_fraction);
  const bool can_tune = !split.validation.empty();
  const double lambda0 = gradient_scale_at_zero(model, split.train);
  const double ridge0 = second_moment_scale(split.train);
  const double rho0 = lambda0;
  constexpr int kTuneRounds = 30;

  // Local's selected ridge is shared with the SVD-truncation baseline: the
  // truncation acts on the Local estimator as fitted.
  std::optional<double> local_ridge;
  auto tuned_local_ridge = [&]() {
    if (!local_ridge) {
      GridAxis axis{log2_grid(ridge0, -10, 2), true,
                    [](SolverConfig& c, double v) { c.ridge = v; }};
      local_ridge = tune("local", SolverConfig{}, axis, split.train, split.validation,
                         model, info, nullptr)
                        .ridge;
    }
    return *local_ridge;
  };

  int diverged = 0;
  for (const SolverEntry& entry : spec.solvers) {
    SolverConfig cfg = entry.config;
    const bool tuning = entry.tune && can_tune;

    if (tuning) {
      if ((entry.name == "local" || entry.name == "svd_truncate") && cfg.ridge == 0.0) {
        cfg.ridge = tuned_local_ridge();
      } else if ((entry.name == "bestrep" || entry.name == "dgsp" || entry.name == "dnsp") &&
                 cfg.ridge == 0.0) {
        // refit regularization, tuned like every other parameter; the
        // unpenalized refit stays on the grid
        std::vector<double> grid = log2_grid(ridge0, -10, 2);
        grid.push_back(0.0);
        GridAxis axis{grid, true, [](SolverConfig& c, double v) { c.ridge = v; }};
        cfg = tune(entry.name, cfg, axis, split.train, split.validation, model, info,
                   true_basis, kTuneRounds);
      } else if ((entry.name == "centralize" || entry.name == "proxgd" ||
                  entry.name == "accproxgd") &&
                 cfg.lambda == 0.0) {
        if (entry.name != "centralize" && cfg.ridge == 0.0)
          cfg.ridge = tuned_local_ridge();  // the prox solvers start from Local
        GridAxis axis{log2_grid(lambda0, -10, 2), true,
                      [](SolverConfig& c, double v) { c.lambda = v; }};
        cfg = tune(entry.name, cfg, axis, split.train, split.validation, model, info,
                   true_basis, kTuneRounds);
      } else if (entry.name == "admm") {
        if (cfg.lambda == 0.0) {
          SolverConfig base = cfg;
          if (base.rho <= 0.0) base.rho = rho0;
          GridAxis axis{log2_grid(lambda0, -10, 2), true,
                        [](SolverConfig& c, double v) { c.lambda = v; }};
          cfg.lambda = tune(entry.name, base, axis, split.train, split.validation, model,
                            info, true_basis, kTuneRounds)
                           .lambda;
        }
        if (cfg.rho == 0.0) {
          GridAxis axis{log2_grid(rho0, -3, 3), true,
                        [](SolverConfig& c, double v) { c.rho = v; }};
          cfg.rho = tune(entry.name, cfg, axis, split.train, split.validation, model,
                         info, true_basis, kTuneRounds)
                        .rho;
        }
      } else if (entry.name == "dfw" && cfg.radius == 0.0) {
        const int r = cfg.assumed_rank > 0 ? cfg.assumed_rank
                                           : (info.rank > 0 ? info.rank : std::min(info.p, info.m));
        const double a = cfg.norm_bound > 0.0 ? cfg.norm_bound : info.norm_bound;
        const double radius0 = std::sqrt(static_cast<double>(r) * info.m) * a;
        GridAxis axis{log2_grid(radius0, -2, 2), false,
                      [](SolverConfig& c, double v) { c.radius = v; }};
        cfg = tune(entry.name, cfg, axis, split.train, split.validation, model, info,
                   true_basis, kTuneRounds);
      }
    }

    RunOptions opts;
    opts.evaluator = evaluator ? &*evaluator : nullptr;
    opts.timings = spec.emit_timings;
    RunResult res = run_solver(entry.name, cfg, ds->tasks, model, info, true_basis, opts);
    if (res.status == RunStatus::kDiverged) ++diverged;

    const std::string label = entry.label.empty() ? entry.name : entry.label;
    const fs::path path =
        fs::path(plan.out_dir) / ("trace_" + label + "_seed" + std::to_string(seed) + ".csv");
    write_trace_csv(path, plan.hash, label, seed, ds->kind, res, spec.emit_timings);
  }
  return diverged;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentSpec& spec_in, const std::string& out_dir) {
  ExperimentSpec spec = spec_in;
  spec.validate();

  std::optional<Dataset> shared;
  if (!spec.dataset_dir.empty()) shared = load_csv_tasks(spec.dataset_dir);
  const bool have_truth = spec.gen.has_value() || (shared && shared->truth.has_value());
  const bool have_basis =
      spec.gen.has_value() ||
      (shared && shared->truth && shared->truth->U_true.size() > 0);

  if (spec.auto_baselines) {
    auto missing = [&](const std::string& name) {
      return std::none_of(spec.solvers.begin(), spec.solvers.end(),
                          [&](const SolverEntry& e) { return e.name == name; });
    };
    if (missing("local")) spec.solvers.push_back({"local", "", {}, true});
    if (missing("centralize")) spec.solvers.push_back({"centralize", "", {}, true});
    if (have_truth && have_basis && missing("bestrep"))
      spec.solvers.push_back({"bestrep", "", {}, true});
    spec.validate();
  }

  fs::create_directories(out_dir);
  const std::string hash = spec_hash(spec);
  CellPlan plan{&spec, shared ? &*shared : nullptr, hash, out_dir};

  const int cells = static_cast<int>(spec.seeds.size());
  int jobs = spec.jobs > 0 ? spec.jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::clamp(jobs, 1, std::max(1, cells));

  std::atomic<int> next{0};
  std::atomic<int> diverged{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;

  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= cells) return;
      try {
        diverged += run_cell(plan, spec.seeds[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  return ExperimentSummary{cells, diverged.load()};
}

// --- aggregation ----------------------------------------------------------------

namespace {

struct TracePoint {
  int t = 0;
  std::int64_t vectors = 0;
  double loss = 0.0;
  double excess = std::numeric_limits<double>::quiet_NaN();
};

struct TraceSeries {
  std::uint64_t seed = 0;
  std::vector<TracePoint> points;  // round rows, or the summary row alone
};

std::map<std::string, std::vector<TraceSeries>> read_traces(const std::string& in_dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    const std::string fname = e.path().filename().string();
    if (fname.rfind("trace_", 0) == 0 && e.path().extension() == ".csv")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no trace files in " + in_dir);

  std::map<std::string, std::vector<TraceSeries>> by_solver;
  for (const fs::path& path : files) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string comment, header;
    if (!std::getline(in, comment) || !std::getline(in, header))
      throw IoError("truncated trace file " + path.string());
    if (header != kTraceHeader) throw ConfigError("mismatched trace schemas in " + in_dir);

    std::string solver = "?";
    std::uint64_t seed = 0;
    {
      std::stringstream ss(comment);
      std::string tok;
      while (ss >> tok) {
        if (tok.rfind("solver=", 0) == 0) solver = tok.substr(7);
        if (tok.rfind("seed=", 0) == 0) seed = std::stoull(tok.substr(5));
      }
    }

    TraceSeries series;
    series.seed = seed;
    TracePoint summary;
    bool have_summary = false;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, ',')) f.push_back(field);
      while (f.size() < 8) f.push_back("");
      TracePoint pt;
      pt.t = static_cast<int>(parse_double_field(f[1]));
      pt.vectors = static_cast<std::int64_t>(parse_double_field(f[2]));
      pt.loss = parse_double_field(f[3]);
      pt.excess = parse_double_field(f[4]);
      if (f[0] == "round") {
        series.points.push_back(pt);
      } else if (f[0] == "summary") {
        summary = pt;
        have_summary = true;
      }
    }
    if (series.points.empty() && have_summary) series.points.push_back(summary);
    if (series.points.empty()) throw IoError("trace file has no data rows: " + path.string());
    by_solver[solver].push_back(std::move(series));
  }
  return by_solver;
}

}  // namespace

void summarize(const std::string& in_dir, const std::string& out_csv,
               const std::vector<double>& epsilons) {
  const auto by_solver = read_traces(in_dir);

  std::ofstream out(out_csv);
  if (!out) throw IoError("cannot write " + out_csv);
  out << "# dmtl-aggregate source=" << in_dir << '\n';
  out << "solver,t,vectors_per_worker,mean_empirical_loss,mean_excess_risk,std_excess_risk,seeds";
  for (double e : epsilons) out << ",rounds_to_eps_" << fmt_short(e);
  out << '\n';

  for (const auto& [solver, series_list] : by_solver) {
    int t_min = std::numeric_limits<int>::max();
    int t_max = 0;
    for (const auto& s : series_list) {
      t_min = std::min(t_min, s.points.front().t);
      t_max = std::max(t_max, s.points.back().t);
    }

    // carry-forward alignment: a stopped solver keeps its final iterate
    const int n_seeds = static_cast<int>(series_list.size());
    struct Agg {
      double vectors = 0.0, loss = 0.0, excess_mean = 0.0, excess_std = 0.0;
      bool excess_ok = true;
    };
    std::vector<Agg> rows;
    std::vector<std::size_t> cursor(n_seeds, 0);
    for (int t = t_min; t <= t_max; ++t) {
      Agg a;
      double sum = 0.0, sum2 = 0.0;
      for (int k = 0; k < n_seeds; ++k) {
        const auto& pts = series_list[k].points;
        while (cursor[k] + 1 < pts.size() && pts[cursor[k] + 1].t <= t) ++cursor[k];
        const TracePoint& pt = pts[cursor[k]];
        a.vectors += static_cast<double>(pt.vectors);
        a.loss += pt.loss;
        if (std::isnan(pt.excess))
          a.excess_ok = false;
        else {
          sum += pt.excess;
          sum2 += pt.excess * pt.excess;
        }
      }
      a.vectors /= n_seeds;
      a.loss /= n_seeds;
      if (a.excess_ok) {
        a.excess_mean = sum / n_seeds;
        const double var = std::max(0.0, sum2 / n_seeds - a.excess_mean * a.excess_mean);
        a.excess_std = std::sqrt(var);
      }
      rows.push_back(a);
    }

    std::vector<std::string> rounds_to_eps;
    for (double e : epsilons) {
      std::string cell;
      for (int t = t_min; t <= t_max; ++t) {
        const Agg& a = rows[t - t_min];
        if (a.excess_ok && a.excess_mean <= e) {
          cell = std::to_string(t);
          break;
        }
      }
      rounds_to_eps.push_back(cell);
    }

    for (int t = t_min; t <= t_max; ++t) {
      const Agg& a = rows[t - t_min];
      out << solver << ',' << t << ',' << fmt_short(a.vectors) << ','
          << fmt_double(a.loss) << ',';
      if (a.excess_ok) out << fmt_double(a.excess_mean);
      out << ',';
      if (a.excess_ok) out << fmt_double(a.excess_std);
      out << ',' << n_seeds;
      for (const auto& cell : rounds_to_eps) out << ',' << cell;
      out << '\n';
    }
  }
}

}  // namespace dmtl
