// Command-line front end: `run` executes a configured scenario, `metrics`
// recomputes reports from an event log, `ota-check` compares causal policies
// against the full-information optimum on tiny instances, and
// `make-dataset` writes a synthetic surrogate CSV.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mcsim/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"budgeted crowdsensing market simulator with federated PPO units"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir, policy, dataset_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int count = 500;

  auto* run = app.add_subcommand("run", "train/evaluate a scenario and emit result files");
  run->add_option("--config", config_path, "flat key=value config file")->required();
  run->add_option("--seed", seed, "override the config's seed list with one seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--policy", policy, "restrict to one policy (fdrl_ppo|ippo|motp|rtps)");
  run->add_option("--out", out_dir, "output directory");

  auto* metrics = app.add_subcommand("metrics", "recompute metric reports from run.jsonl");
  metrics->add_option("--in", in_dir, "directory containing run.jsonl")->required();

  auto* ota = app.add_subcommand("ota-check", "solver vs causal policies on tiny instances");
  ota->add_option("--config", config_path, "tiny-scenario config file")->required();

  auto* mkds = app.add_subcommand("make-dataset", "write a synthetic surrogate dataset CSV");
  mkds->add_option("--out", dataset_path, "CSV path")->required();
  mkds->add_option("--tasks", count, "number of tasks");
  mkds->add_option("--seed", seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      mcsim::ExperimentConfig cfg = mcsim::parse_config_file(config_path);
      if (seed_set) cfg.seeds = {seed};
      if (!policy.empty()) cfg.policies = {mcsim::policy_from_name(policy)};
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const auto result = mcsim::run_scenario(cfg);
      for (const auto& [sweep, pol, report] : result.reports)
        std::printf("%-10s %-9s weighted_completed=%.3f collision_ratio=%.3f energy/task=%.3f\n",
                    sweep.c_str(), mcsim::policy_name(pol), report.weighted_completed.mean,
                    report.collision_ratio.mean, report.energy_per_completed.mean);
      std::printf("results written to %s\n", cfg.out_dir.c_str());
    } else if (metrics->parsed()) {
      const auto report = mcsim::metrics_from_jsonl(in_dir + "/run.jsonl");
      std::cout << report.dump(2) << "\n";
    } else if (ota->parsed()) {
      mcsim::ExperimentConfig cfg = mcsim::parse_config_file(config_path);
      if (cfg.params.num_mus > 3 || cfg.params.tasks_per_step > 3 || cfg.params.horizon_steps > 4)
        throw std::invalid_argument("ota-check: needs a tiny scenario (K<=3, N<=3, T<=4)");
      cfg.snap_resources_to_grid = true;
      int instances = 0;
      for (std::uint64_t s : cfg.seeds) {
        mcsim::OtaInstance inst = mcsim::sample_ota_instance(cfg.params, s);
        inst.grid_f = cfg.grid_f;
        inst.grid_p = cfg.grid_p;
        const mcsim::OtaPlan plan = mcsim::ota_solve(inst);
        std::printf("instance seed=%llu optimum=%.4f", static_cast<unsigned long long>(s),
                    plan.objective);
        for (mcsim::PolicyKind pol :
             {mcsim::PolicyKind::FdrlPpo, mcsim::PolicyKind::Ippo, mcsim::PolicyKind::Motp,
              mcsim::PolicyKind::Rtps}) {
          const double score = mcsim::replay_on_instance(inst, pol, s, cfg.agent);
          std::printf(" %s=%.4f%s", mcsim::policy_name(pol), score,
                      score <= plan.objective + 1e-9 ? "" : " !BOUND");
        }
        std::printf("\n");
        ++instances;
      }
      std::printf("%d instances checked\n", instances);
    } else if (mkds->parsed()) {
      mcsim::ScenarioParams params;
      mcsim::write_surrogate_dataset(dataset_path, count, seed, params);
      std::printf("wrote %d tasks to %s\n", count, dataset_path.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
