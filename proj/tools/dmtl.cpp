// Command line front end; talks to the core exclusively through the
// shared library's C interface.

#include <dmtl/dmtl.h>

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

int exit_code(dmtl_status status) {
  switch (status) {
    case DMTL_OK: return 0;
    case DMTL_ERR_CONFIG: return 2;
    case DMTL_ERR_IO: return 2;
    case DMTL_ERR_DIVERGED: return 3;
    default: return 1;
  }
}

int report(dmtl_status status) {
  if (status != DMTL_OK)
    std::fprintf(stderr, "dmtl: %s: %s\n", dmtl_status_name(status), dmtl_last_error());
  return exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed multi-task learning solver suite"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset directory");
  int p = 0, m = 0, n = 0, r = 0;
  double corr_decay = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;
  std::string task = "regression";
  std::string gen_out;
  gen->add_option("--p", p, "feature dimension")->required();
  gen->add_option("--m", m, "number of tasks")->required();
  gen->add_option("--n", n, "samples per task")->required();
  gen->add_option("--r", r, "rank of the shared subspace")->required();
  gen->add_option("--corr-decay", corr_decay, "covariance decay exponent c in 2^(-c|a-b|)");
  gen->add_option("--noise-std", noise_std, "regression noise standard deviation");
  gen->add_option("--task", task, "regression|classification")
      ->check(CLI::IsMember({"regression", "classification"}));
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory")->required();

  // run
  auto* run = app.add_subcommand("run", "run an experiment spec");
  std::string spec_path, run_out;
  run->add_option("--spec", spec_path, "experiment spec JSON file")->required();
  run->add_option("--out", run_out, "output directory for trace files")->required();

  // summarize
  auto* summ = app.add_subcommand("summarize", "aggregate trace files");
  std::string in_dir, out_csv, eps_list;
  summ->add_option("--in", in_dir, "directory with trace files")->required();
  summ->add_option("--out", out_csv, "aggregate CSV path")->required();
  summ->add_option("--eps", eps_list, "comma-separated excess-risk levels for rounds-to-eps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    char config[512];
    std::snprintf(config, sizeof(config),
                  "{\"n\":%d,\"p\":%d,\"m\":%d,\"r\":%d,\"corr_decay\":%.17g,"
                  "\"noise_std\":%.17g,\"task\":\"%s\",\"seed\":%llu}",
                  n, p, m, r, corr_decay, noise_std, task.c_str(),
                  static_cast<unsigned long long>(seed));
    dmtl_dataset* ds = nullptr;
    dmtl_status status = dmtl_generate(config, &ds);
    if (status == DMTL_OK) status = dmtl_dataset_save(ds, gen_out.c_str());
    dmtl_dataset_free(ds);
    return report(status);
  }

  if (run->parsed()) {
    return report(dmtl_run_file(spec_path.c_str(), run_out.c_str()));
  }

  if (summ->parsed()) {
    std::vector<double> eps;
    std::size_t pos = 0;
    while (pos < eps_list.size()) {
      std::size_t next = eps_list.find(',', pos);
      if (next == std::string::npos) next = eps_list.size();
      try {
        eps.push_back(std::stod(eps_list.substr(pos, next - pos)));
      } catch (...) {
        std::fprintf(stderr, "dmtl: bad --eps value\n");
        return 2;
      }
      pos = next + 1;
    }
    return report(dmtl_summarize(in_dir.c_str(), out_csv.c_str(),
                                 eps.empty() ? nullptr : eps.data(),
                                 static_cast<int32_t>(eps.size())));
  }
  return 2;
}
