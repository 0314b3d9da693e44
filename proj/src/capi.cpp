#include "dmtl/dmtl.h"

#include "harness.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

using nlohmann::json;

struct dmtl_dataset {
  dmtl::Dataset data;
};

struct dmtl_solution {
  dmtl::RunResult result;
  dmtl::LossKind kind = dmtl::LossKind::kSquared;
};

namespace {

thread_local std::string g_last_error;

dmtl_status fail(dmtl_status code, const std::string& what) {
  g_last_error = what;
  return code;
}

template <typename Fn>
dmtl_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const dmtl::ConfigError& e) {
    return fail(DMTL_ERR_CONFIG, e.what());
  } catch (const dmtl::IoError& e) {
    return fail(DMTL_ERR_IO, e.what());
  } catch (const dmtl::DivergenceError& e) {
    return fail(DMTL_ERR_DIVERGED, e.what());
  } catch (const std::exception& e) {
    return fail(DMTL_ERR_INTERNAL, e.what());
  }
}

dmtl_status require(bool cond, const char* what) {
  return cond ? DMTL_OK : fail(DMTL_ERR_CONFIG, what);
}

}  // namespace

extern "C" {

const char* dmtl_status_name(dmtl_status status) {
  switch (status) {
    case DMTL_OK: return "ok";
    case DMTL_ERR_INTERNAL: return "internal_error";
    case DMTL_ERR_CONFIG: return "config_error";
    case DMTL_ERR_DIVERGED: return "diverged";
    case DMTL_ERR_IO: return "io_error";
  }
  return "unknown";
}

const char* dmtl_last_error(void) { return g_last_error.c_str(); }

dmtl_status dmtl_generate(const char* config_json, dmtl_dataset** out) {
  if (dmtl_status s = require(config_json && out, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    dmtl::GenConfig cfg = dmtl::parse_gen_config(config_json);
    auto* handle = new dmtl_dataset{dmtl::generate_dataset(cfg)};
    *out = handle;
    return DMTL_OK;
  });
}

dmtl_status dmtl_dataset_load(const char* dir, dmtl_dataset** out) {
  if (dmtl_status s = require(dir && out, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    auto* handle = new dmtl_dataset{dmtl::load_csv_tasks(dir)};
    *out = handle;
    return DMTL_OK;
  });
}

dmtl_status dmtl_dataset_save(const dmtl_dataset* ds, const char* dir) {
  if (dmtl_status s = require(ds && dir, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    dmtl::save_dataset(ds->data, dir);
    return DMTL_OK;
  });
}

void dmtl_dataset_free(dmtl_dataset* ds) { delete ds; }

dmtl_status dmtl_dataset_dims(const dmtl_dataset* ds, int32_t* p, int32_t* m) {
  if (dmtl_status s = require(ds && p && m, "null argument"); s != DMTL_OK) return s;
  *p = ds->data.p();
  *m = ds->data.m();
  return DMTL_OK;
}

dmtl_status dmtl_dataset_task_rows(const dmtl_dataset* ds, int32_t j, int32_t* n) {
  if (dmtl_status s = require(ds && n, "null argument"); s != DMTL_OK) return s;
  if (j < 0 || j >= ds->data.m()) return fail(DMTL_ERR_CONFIG, "task index out of range");
  *n = ds->data.tasks[j].n();
  return DMTL_OK;
}

dmtl_status dmtl_solve(const dmtl_dataset* ds, const char* solver_json,
                       dmtl_solution** out) {
  if (dmtl_status s = require(ds && solver_json && out, "null argument"); s != DMTL_OK)
    return s;
  return guarded([&] {
    json j;
    try {
      j = json::parse(solver_json);
    } catch (const json::exception& e) {
      throw dmtl::ConfigError(std::string("invalid solver JSON: ") + e.what());
    }
    const dmtl::Dataset& data = ds->data;
    const dmtl::LossModel model = data.kind == dmtl::LossKind::kSquared
                                      ? dmtl::LossModel::squared()
                                      : dmtl::LossModel::logistic();
    dmtl::InstanceInfo info;
    info.p = data.p();
    info.m = data.m();
    if (data.truth) {
      info.norm_bound = data.truth->W_star.colwise().norm().maxCoeff();
      info.rank = data.truth->r();
    }
    const Eigen::MatrixXd* basis =
        (data.truth && data.truth->U_true.size() > 0) ? &data.truth->U_true : nullptr;

    if (!j.is_object() || !j.contains("name"))
      throw dmtl::ConfigError("solver JSON must be an object with a 'name'");
    const std::string name = j["name"].get<std::string>();
    dmtl::SolverConfig cfg;
    cfg.lambda = j.value("lambda", 0.0);
    cfg.eta = j.value("eta", 0.0);
    cfg.rho = j.value("rho", 0.0);
    cfg.radius = j.value("R", 0.0);
    cfg.ridge = j.value("ridge", 0.0);
    cfg.newton_ridge = j.value("newton_ridge", -1.0);
    cfg.norm_bound = j.value("A", 0.0);
    cfg.assumed_rank = j.value("r", 0);
    cfg.rank_budget = j.value("rank_budget", 0);
    cfg.rounds = j.value("rounds", 0);
    cfg.init = j.value("init", std::string("auto"));

    std::optional<dmtl::RiskEvaluator> evaluator;
    dmtl::RunOptions opts;
    if (data.truth) {
      evaluator.emplace(*data.truth, model, j.value("mc_samples", 500),
                        j.value("eval_seed", std::uint64_t{0}));
      opts.evaluator = &*evaluator;
    }
    auto* handle = new dmtl_solution;
    handle->kind = data.kind;
    handle->result = dmtl::run_solver(name, cfg, data.tasks, model, info, basis, opts);
    *out = handle;
    return handle->result.status == dmtl::RunStatus::kDiverged
               ? fail(DMTL_ERR_DIVERGED, "solver diverged; trace truncated")
               : DMTL_OK;
  });
}

dmtl_status dmtl_solution_dims(const dmtl_solution* sol, int32_t* p, int32_t* m) {
  if (dmtl_status s = require(sol && p && m, "null argument"); s != DMTL_OK) return s;
  *p = static_cast<int32_t>(sol->result.W.rows());
  *m = static_cast<int32_t>(sol->result.W.cols());
  return DMTL_OK;
}

dmtl_status dmtl_solution_predictor(const dmtl_solution* sol, double* buffer) {
  if (dmtl_status s = require(sol && buffer, "null argument"); s != DMTL_OK) return s;
  const Eigen::MatrixXd& w = sol->result.W;
  std::memcpy(buffer, w.data(), sizeof(double) * w.size());
  return DMTL_OK;
}

dmtl_status dmtl_solution_rounds(const dmtl_solution* sol, int64_t* rounds) {
  if (dmtl_status s = require(sol && rounds, "null argument"); s != DMTL_OK) return s;
  *rounds = sol->result.one_shot ? 1 : static_cast<int64_t>(sol->result.trace.size());
  return DMTL_OK;
}

dmtl_status dmtl_solution_vectors_per_worker(const dmtl_solution* sol, int64_t* vectors) {
  if (dmtl_status s = require(sol && vectors, "null argument"); s != DMTL_OK) return s;
  *vectors = sol->result.summary.vectors_per_worker;
  return DMTL_OK;
}

const char* dmtl_solution_status(const dmtl_solution* sol) {
  return sol ? dmtl::to_string(sol->result.status) : "null";
}

dmtl_status dmtl_solution_write_trace(const dmtl_solution* sol, const char* csv_path) {
  if (dmtl_status s = require(sol && csv_path, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    std::ofstream out(csv_path);
    if (!out) throw dmtl::IoError(std::string("cannot write ") + csv_path);
    out << "row,t,vectors_per_worker,empirical_loss,excess_risk,rank,wall_ms,status\n";
    auto emit = [&](const char* tag, const dmtl::RoundTrace& row, const char* status) {
      char loss[32];
      std::snprintf(loss, sizeof(loss), "%.17g", row.empirical_loss);
      out << tag << ',' << row.t << ',' << row.vectors_per_worker << ',' << loss << ',';
      if (!std::isnan(row.excess_risk)) {
        char ex[32];
        std::snprintf(ex, sizeof(ex), "%.17g", row.excess_risk);
        out << ex;
      }
      out << ',' << row.rank << ",," << status << '\n';
    };
    for (const auto& row : sol->result.trace) emit("round", row, "");
    emit("summary", sol->result.summary, dmtl::to_string(sol->result.status));
    return DMTL_OK;
  });
}

void dmtl_solution_free(dmtl_solution* sol) { delete sol; }

dmtl_status dmtl_run(const char* spec_json, const char* out_dir) {
  if (dmtl_status s = require(spec_json && out_dir, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    dmtl::ExperimentSpec spec = dmtl::parse_experiment_spec(spec_json);
    dmtl::ExperimentSummary summary = dmtl::run_experiment(spec, out_dir);
    if (summary.diverged > 0)
      return fail(DMTL_ERR_DIVERGED,
                  std::to_string(summary.diverged) + " cell(s) diverged; traces truncated");
    return DMTL_OK;
  });
}

dmtl_status dmtl_run_file(const char* spec_path, const char* out_dir) {
  if (dmtl_status s = require(spec_path && out_dir, "null argument"); s != DMTL_OK) return s;
  return guarded([&] {
    std::ifstream in(spec_path);
    if (!in) throw dmtl::IoError(std::string("cannot read spec file ") + spec_path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    return dmtl_run(text.c_str(), out_dir);
  });
}

dmtl_status dmtl_summarize(const char* in_dir, const char* out_csv,
                           const double* epsilons, int32_t n_epsilons) {
  if (dmtl_status s = require(in_dir && out_csv, "null argument"); s != DMTL_OK) return s;
  if (n_epsilons > 0 && !epsilons) return fail(DMTL_ERR_CONFIG, "null epsilon array");
  return guarded([&] {
    std::vector<double> eps(epsilons, epsilons + std::max<int32_t>(0, n_epsilons));
    dmtl::summarize(in_dir, out_csv, eps);
    return DMTL_OK;
  });
}

}  // extern "C"
