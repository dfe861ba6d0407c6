#pragma once
// Scenario sweeps and result files. A scenario run produces one JSON-lines
// event log plus per-metric CSVs that any plotting tool can consume.
// Identical config and seed give byte-identical files.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcsim/experiment.hpp"

namespace mcsim {

struct SweepPoint {
  std::string label;
  ExperimentConfig cfg;
};

// Expands a scenario id into its sweep axis.
inline std::vector<SweepPoint> scenario_sweep(const ExperimentConfig& base) {
  std::vector<SweepPoint> points;
  auto with = [&](const std::string& label, auto mutate) {
    ExperimentConfig cfg = base;
    mutate(cfg);
    points.push_back(SweepPoint{label, cfg});
  };
  if (base.scenario == "baseline") {
    with("base", [](ExperimentConfig&) {});
  } else if (base.scenario == "mu_scaling") {
    for (int k = 10; k <= 50; k += 10)
      with("K" + std::to_string(k), [k](ExperimentConfig& c) {
        c.params.num_mus = k;
        c.params.tasks_per_step = 15;
      });
  } else if (base.scenario == "task_load") {
    for (int n = 10; n <= 50; n += 10)
      with("N" + std::to_string(n), [n](ExperimentConfig& c) {
        c.params.tasks_per_step = n;
        c.params.num_mus = 15;
      });
  } else if (base.scenario == "budget_sweep") {
    for (int eta = 10; eta <= 50; eta += 10)
      with("eta" + std::to_string(eta), [eta](ExperimentConfig& c) {
        c.params.budget_coeff = eta;
        c.params.num_mus = 10;
        c.params.tasks_per_step = 10;
      });
  } else if (base.scenario == "churn") {
    with("churn", [](ExperimentConfig& c) {
      if (c.churn.empty())
        c.churn = {ChurnEvent{100, true, {}, 5}, ChurnEvent{200, false, {}, 5}};
    });
  } else {
    throw std::invalid_argument("unknown scenario: " + base.scenario);
  }
  return points;
}

struct SeedOutcome {
  std::vector<MetricsSample> samples;                 // one per validation realization
  std::vector<std::vector<StepRecord>> run_records;   // parallel to samples
  std::vector<double> training_curve;
  std::vector<RoundLedger> rounds;
};

// Trains (for the learning policies) and validates one (sweep point, policy,
// seed) cell.
inline SeedOutcome run_cell(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome out;
  const bool rl = cfg.policy == PolicyKind::FdrlPpo || cfg.policy == PolicyKind::Ippo;
  AgentPool pool;
  if (rl) {
    TrainResult tr = train_agents(cfg, seed);
    pool = std::move(tr.pool);
    out.training_curve = std::move(tr.episode_rewards);
    out.rounds = std::move(tr.rounds);
  } else {
    pool = AgentPool::make(cfg, seed);
  }
  const int churn_horizon = cfg.churn.empty() ? -1 : cfg.params.horizon_steps;
  for (int r = 0; r < cfg.realizations; ++r) {
    const std::uint64_t ws = derive_seed(seed, "validate", static_cast<std::uint64_t>(r));
    EpisodeResult er = run_episode(cfg, ws, rl ? &pool : nullptr, /*training=*/false,
                                   churn_horizon, cfg.churn.empty() ? nullptr : &cfg.churn);
    out.samples.push_back(metrics_from_records(er.records, cfg.params.num_types));
    out.run_records.push_back(std::move(er.records));
  }
  return out;
}

struct ScenarioResult {
  // (sweep label, policy) -> report
  std::vector<std::tuple<std::string, PolicyKind, MetricsReport>> reports;
};

inline std::vector<PolicyKind> effective_policies(const ExperimentConfig& cfg) {
  if (!cfg.policies.empty()) return cfg.policies;
  return {PolicyKind::FdrlPpo, PolicyKind::Ippo, PolicyKind::Motp, PolicyKind::Rtps};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Runs the configured scenario across its sweep, the policy set and all
// seeds, then writes run.jsonl, metrics.json and the four metric CSVs.
inline ScenarioResult run_scenario(const ExperimentConfig& base) {
  namespace fs = std::filesystem;
  const auto points = scenario_sweep(base);
  const auto policies = effective_policies(base);
  fs::create_directories(base.out_dir);

  struct Cell {
    std::string sweep;
    PolicyKind policy;
    std::uint64_t seed = 0;
    ExperimentConfig cfg;
    SeedOutcome outcome;
  };
  std::vector<Cell> cells;
  for (const auto& pt : points)
    for (PolicyKind pol : policies)
      for (std::uint64_t seed : base.seeds) {
        Cell c;
        c.sweep = pt.label;
        c.policy = pol;
        c.seed = seed;
        c.cfg = pt.cfg;
        c.cfg.policy = pol;
        cells.push_back(std::move(c));
      }

  parallel_for(static_cast<int>(cells.size()),
               [&](int i) { cells[i].outcome = run_cell(cells[i].cfg, cells[i].seed); });

  // event log
  std::ostringstream jsonl;
  {
    nlohmann::json meta;
    meta["type"] = "meta";
    meta["scenario"] = base.scenario;
    meta["policies"] = nlohmann::json::array();
    for (PolicyKind p : policies) meta["policies"].push_back(policy_name(p));
    meta["seeds"] = base.seeds;
    meta["num_types"] = base.params.num_types;
    jsonl << meta.dump() << "\n";
  }
  for (const auto& cell : cells) {
    for (std::size_t r = 0; r < cell.outcome.run_records.size(); ++r) {
      for (const auto& rec : cell.outcome.run_records[r]) {
        nlohmann::json line = to_json(rec);
        line["sweep"] = cell.sweep;
        line["policy"] = policy_name(cell.policy);
        line["seed"] = cell.seed;
        line["realization"] = r;
        jsonl << line.dump() << "\n";
      }
    }
    for (const auto& round : cell.outcome.rounds) {
      nlohmann::json line = to_json(round);
      line["sweep"] = cell.sweep;
      line["policy"] = policy_name(cell.policy);
      line["seed"] = cell.seed;
      jsonl << line.dump() << "\n";
    }
    if (!cell.outcome.training_curve.empty()) {
      nlohmann::json line;
      line["type"] = "training_curve";
      line["sweep"] = cell.sweep;
      line["policy"] = policy_name(cell.policy);
      line["seed"] = cell.seed;
      line["episode_rewards"] = cell.outcome.training_curve;
      jsonl << line.dump() << "\n";
    }
  }
  write_text_file(fs::path(base.out_dir) / "run.jsonl", jsonl.str());

  // aggregate per (sweep, policy)
  ScenarioResult result;
  nlohmann::json metrics_json;
  metrics_json["scenario"] = base.scenario;
  auto& blocks = metrics_json["results"] = nlohmann::json::array();
  std::ostringstream csv_wc, csv_cr, csv_en, csv_pt, csv_rs;
  csv_wc << "scenario,sweep,policy,seed,realization,value\n";
  csv_cr << "scenario,sweep,policy,seed,realization,value\n";
  csv_en << "scenario,sweep,policy,seed,realization,value\n";
  csv_pt << "scenario,sweep,policy,type,mean_count\n";
  csv_rs << "scenario,sweep,policy,step,mean_reward\n";

  for (const auto& pt : points) {
    for (PolicyKind pol : policies) {
      std::vector<MetricsSample> samples;
      for (const auto& cell : cells) {
        if (cell.sweep != pt.label || cell.policy != pol) continue;
        for (std::size_t r = 0; r < cell.outcome.samples.size(); ++r) {
          const auto& s = cell.outcome.samples[r];
          samples.push_back(s);
          csv_wc << base.scenario << ',' << pt.label << ',' << policy_name(pol) << ',' << cell.seed
                 << ',' << r << ',' << csv_number(s.weighted_completed) << "\n";
          csv_cr << base.scenario << ',' << pt.label << ',' << policy_name(pol) << ',' << cell.seed
                 << ',' << r << ',' << csv_number(s.collision_ratio) << "\n";
          csv_en << base.scenario << ',' << pt.label << ',' << policy_name(pol) << ',' << cell.seed
                 << ',' << r << ',' << csv_number(s.energy_per_completed) << "\n";
        }
      }
      if (samples.empty()) continue;
      MetricsReport report = compute_metrics(samples, base.params.num_types);
      for (int c = 0; c < base.params.num_types; ++c)
        csv_pt << base.scenario << ',' << pt.label << ',' << policy_name(pol) << ',' << c << ','
               << csv_number(report.per_type_mean[c]) << "\n";
      for (std::size_t t = 0; t < report.mean_reward_per_step.size(); ++t)
        csv_rs << base.scenario << ',' << pt.label << ',' << policy_name(pol) << ',' << t << ','
               << csv_number(report.mean_reward_per_step[t]) << "\n";
      nlohmann::json block;
      block["sweep"] = pt.label;
      block["policy"] = policy_name(pol);
      block["report"] = to_json(report);
      blocks.push_back(block);
      result.reports.emplace_back(pt.label, pol, std::move(report));
    }
  }

  write_text_file(fs::path(base.out_dir) / "metrics.json", metrics_json.dump(2) + "\n");
  write_text_file(fs::path(base.out_dir) / "weighted_completed.csv", csv_wc.str());
  write_text_file(fs::path(base.out_dir) / "collision_ratio.csv", csv_cr.str());
  write_text_file(fs::path(base.out_dir) / "energy_per_completed.csv", csv_en.str());
  write_text_file(fs::path(base.out_dir) / "per_type_completions.csv", csv_pt.str());
  write_text_file(fs::path(base.out_dir) / "reward_series.csv", csv_rs.str());
  return result;
}

// Offline metric recomputation from an event log (the `metrics` subcommand).
inline nlohmann::json metrics_from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics: cannot open " + path);
  std::string line;
  int num_types = 10;
  std::string scenario = "?";
  std::map<std::string, std::map<std::string, std::vector<StepRecord>>> grouped;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "meta") {
      num_types = j.value("num_types", 10);
      scenario = j.value("scenario", "?");
    } else if (type == "step") {
      const std::string key =
          j.value("sweep", "base") + "/" + j.value("policy", "?");
      const std::string run = std::to_string(j.value("seed", 0)) + "/" +
                              std::to_string(j.value("realization", 0));
      grouped[key][run].push_back(step_record_from_json(j));
    }
  }
  nlohmann::json out;
  out["scenario"] = scenario;
  auto& results = out["results"] = nlohmann::json::array();
  for (auto& [key, runs] : grouped) {
    std::vector<MetricsSample> samples;
    for (auto& [run, records] : runs)
      samples.push_back(metrics_from_records(records, num_types));
    nlohmann::json block;
    block["cell"] = key;
    block["report"] = to_json(compute_metrics(samples, num_types));
    results.push_back(block);
  }
  return out;
}

}  // namespace mcsim
