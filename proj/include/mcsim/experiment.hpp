#pragma once
// Scenario runner: wires the world, the platform, the agents and the
// federation rounds into episodes; computes the evaluation metrics; handles
// join-in/drop-out schedules; reads flat key=value configs and emits
// JSON-lines run logs plus per-metric CSVs.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mcsim/baselines.hpp"
#include "mcsim/core.hpp"
#include "mcsim/environment.hpp"
#include "mcsim/federation.hpp"
#include "mcsim/mcsp.hpp"
#include "mcsim/nn.hpp"
#include "mcsim/rl.hpp"
#include "mcsim/rng.hpp"

namespace mcsim {

struct SimulationInvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

enum class PolicyKind { FdrlPpo, Ippo, Motp, Rtps, Ota };

inline const char* policy_name(PolicyKind p) {
  switch (p) {
    case PolicyKind::FdrlPpo: return "fdrl_ppo";
    case PolicyKind::Ippo: return "ippo";
    case PolicyKind::Motp: return "motp";
    case PolicyKind::Rtps: return "rtps";
    case PolicyKind::Ota: return "ota";
  }
  return "?";
}

inline PolicyKind policy_from_name(const std::string& s) {
  if (s == "fdrl_ppo") return PolicyKind::FdrlPpo;
  if (s == "ippo") return PolicyKind::Ippo;
  if (s == "motp") return PolicyKind::Motp;
  if (s == "rtps") return PolicyKind::Rtps;
  if (s == "ota") return PolicyKind::Ota;
  throw std::invalid_argument("unknown policy: " + s);
}

struct ChurnEvent {
  int step = 0;
  bool join = true;
  std::vector<int> ids;  // explicit ids; empty means `count` random picks
  int count = 0;
};

struct ExperimentConfig {
  std::string scenario = "baseline";
  ScenarioParams params;
  AgentHyperparams agent;
  FederationConfig fed;
  PolicyKind policy = PolicyKind::FdrlPpo;
  std::vector<PolicyKind> policies;  // scenario sweeps; empty = the four causal policies
  std::vector<std::uint64_t> seeds = {1};
  int episodes = 60;      // training episodes
  int realizations = 1;   // validation episodes per seed
  std::vector<ChurnEvent> churn;
  std::string dataset_path;
  bool snap_resources_to_grid = false;  // restricts actions to the solver's grid
  int grid_f = 4;
  int grid_p = 4;
  std::string out_dir = "out";
};

// ---------------------------------------------------------------------------
// Agents for one seed. With federation on, every unit starts from the same
// published global model; otherwise each unit initializes independently.

struct AgentPool {
  PolicyKind kind = PolicyKind::Rtps;
  bool federated = false;
  std::uint64_t master_seed = 0;
  int task_slots = 0;
  AgentHyperparams hp;
  FederationConfig fed_cfg;
  std::vector<std::unique_ptr<PpoAgent>> agents;  // index = unit id
  FederationDriver driver;

  bool is_rl() const { return kind == PolicyKind::FdrlPpo || kind == PolicyKind::Ippo; }

  static AgentPool make(const ExperimentConfig& cfg, std::uint64_t seed) {
    AgentPool pool;
    pool.kind = cfg.policy;
    pool.master_seed = seed;
    pool.task_slots = cfg.params.tasks_per_step;
    pool.hp = cfg.agent;
    pool.fed_cfg = cfg.fed;
    pool.federated = cfg.policy == PolicyKind::FdrlPpo && cfg.fed.enabled;
    if (!pool.is_rl()) return pool;
    if (pool.federated) {
      RngStream ginit(seed, "global-init");
      ModelParams global;
      const int obs = observation_size(pool.task_slots);
      global.actor = Mlp::he_init({obs, cfg.agent.hidden, cfg.agent.hidden,
                                   actor_output_size(pool.task_slots)}, ginit);
      global.critic = Mlp::he_init({obs, cfg.agent.hidden, cfg.agent.hidden, 1}, ginit);
      pool.driver.initialize(global);
    }
    for (int k = 0; k < cfg.params.num_mus; ++k) pool.ensure_agent(k);
    return pool;
  }

  void ensure_agent(int k) {
    if (!is_rl()) return;
    if (k < static_cast<int>(agents.size()) && agents[k]) return;
    if (k >= static_cast<int>(agents.size())) agents.resize(k + 1);
    agents[k] = std::make_unique<PpoAgent>(k, task_slots, hp, master_seed);
    if (federated) agents[k]->set_model(driver.current_global());
  }

  void set_episode(int e) {
    for (auto& a : agents)
      if (a) a->set_episode(e);
  }
};

// ---------------------------------------------------------------------------

struct EpisodeResult {
  std::vector<StepRecord> records;
  std::vector<RoundLedger> rounds;
  std::vector<std::vector<std::pair<int, double>>> payments_by_step;  // (mu, payment) of present units
  double total_reward = 0;
  // conservation ledger
  std::map<int, double> harvested_sum, spent_sum, overflow_sum, initial_battery, final_battery;
};

namespace detail {

inline double snap_fraction(double fraction, int levels) {
  const int idx = std::clamp(static_cast<int>(std::lround(fraction * levels)), 1, levels);
  return static_cast<double>(idx) / levels;
}

inline void check_step_invariants(const StepRecord& rec, const std::vector<TaskSpec>& tasks,
                                  const ScenarioParams& params) {
  std::set<int> accepted_mus;
  std::map<int, double> committed;
  std::map<int, const Proposal*> by_mu;
  for (const auto& p : rec.proposals) by_mu[p.mu] = &p;
  for (const auto& [k, n] : rec.decision.accepted) {
    if (!accepted_mus.insert(k).second)
      throw SimulationInvariantError("unit accepted for two tasks in one step");
    committed[n] += by_mu.at(k)->requested_payment;
  }
  for (const auto& [n, sum] : committed) {
    const double budget = tasks[n].budget;
    if (sum > budget * (1.0 + 1e-9))
      throw SimulationInvariantError("per-task budget exceeded");
  }
  for (const auto& [k, b] : rec.battery_after) {
    if (b < 0 || b > params.battery_capacity_j * (1.0 + 1e-9))
      throw SimulationInvariantError("battery outside [0, capacity]");
  }
}

}  // namespace detail

// Runs one episode. `training` turns on exploration, transition collection,
// PPO updates and federation rounds; validation runs the greedy frozen
// policy. `horizon_override`/`churn` support the join-in/drop-out study.
inline EpisodeResult run_episode(const ExperimentConfig& cfg, std::uint64_t world_seed,
                                 AgentPool* pool, bool training, int horizon_override = -1,
                                 const std::vector<ChurnEvent>* churn_schedule = nullptr,
                                 bool keep_records = true) {
  const ScenarioParams& params = cfg.params;
  WorldState world = make_world(world_seed, params, params.num_mus);
  const PolicyKind kind = pool ? pool->kind : cfg.policy;
  const bool rl = kind == PolicyKind::FdrlPpo || kind == PolicyKind::Ippo;
  const bool fed_active = training && pool && pool->federated;

  std::vector<TaskSpec> dataset_stream;
  int horizon = horizon_override > 0 ? horizon_override : params.horizon_steps;
  if (!cfg.dataset_path.empty()) {
    RngStream dataset_rng(world_seed, "dataset");
    dataset_stream = load_dataset_tasks(cfg.dataset_path, params.num_types, params, dataset_rng);
    horizon = std::min<int>(horizon, static_cast<int>(dataset_stream.size()) / params.tasks_per_step);
  }

  RngStream rtps_rng(world_seed, "rtps");

  auto tasks_for = [&](int t) {
    std::vector<TaskSpec> ts;
    if (!dataset_stream.empty()) {
      for (int n = 0; n < params.tasks_per_step; ++n) {
        TaskSpec task = dataset_stream[static_cast<std::size_t>(t) * params.tasks_per_step + n];
        task.task_index = n;
        task.step = t;
        ts.push_back(task);
      }
    } else {
      ts = generate_tasks(t, params, world.task_stream);
    }
    return ts;
  };

  EpisodeResult result;
  for (std::size_t k = 0; k < world.mus.size(); ++k)
    result.initial_battery[static_cast<int>(k)] = world.mus[k].battery_j;

  std::map<int, double> round_rewards;
  std::vector<double> round_chis;
  int steps_in_round = 0;
  auto present_agents = [&]() {
    std::vector<PpoAgent*> out;
    for (std::size_t k = 0; k < world.mus.size(); ++k)
      if (world.present[k] && pool && k < pool->agents.size() && pool->agents[k])
        out.push_back(pool->agents[k].get());
    return out;
  };
  if (fed_active) {
    auto agents = present_agents();
    round_chis = pool->driver.begin_round(agents);
  }

  std::vector<TaskSpec> tasks = tasks_for(0);
  // per-unit scratch, grown on joins
  auto grow = [](auto& v, std::size_t n) { if (v.size() < n) v.resize(n); };

  for (int t = 0; t < horizon; ++t) {
    if (churn_schedule) {
      for (const auto& ev : *churn_schedule) {
        if (ev.step != t) continue;
        if (ev.join) {
          int to_add = ev.ids.empty() ? ev.count : static_cast<int>(ev.ids.size());
          for (int a = 0; a < to_add; ++a) {
            add_mu(world);
            const int id = static_cast<int>(world.mus.size()) - 1;
            result.initial_battery[id] = world.mus[id].battery_j;
            if (pool) pool->ensure_agent(id);
          }
        } else {
          std::vector<int> victims = ev.ids;
          if (victims.empty()) {
            std::vector<int> candidates;
            for (std::size_t k = 0; k < world.mus.size(); ++k)
              if (world.present[k]) candidates.push_back(static_cast<int>(k));
            for (int a = 0; a < ev.count && !candidates.empty(); ++a) {
              const int pick = world.churn_stream.uniform_int(static_cast<int>(candidates.size()));
              victims.push_back(candidates[pick]);
              candidates.erase(candidates.begin() + pick);
            }
          }
          for (int id : victims)
            if (id >= 0 && id < static_cast<int>(world.present.size())) world.present[id] = false;
        }
      }
    }

    world.step = t;
    world.active_tasks = tasks;
    const std::size_t K = world.mus.size();

    std::vector<std::vector<double>> obs(K);
    std::vector<double> planning_gain(K, 0.0), realized_gain(K, 0.0), harvest(K, 0.0);
    std::vector<SensingDraw> sensing(K);
    std::vector<double> battery_start(K, 0.0);

    // observations use only past channel information
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k]) continue;
      battery_start[k] = world.mus[k].battery_j;
      planning_gain[k] = world.mus[k].avg_channel_gain;
      if (rl)
        obs[k] = encode_state(world.profiles[k], world.mus[k], tasks,
                              pool ? pool->task_slots : params.tasks_per_step, params);
    }
    // step draws, one of each per present unit
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k]) continue;
      harvest[k] = harvest_energy(params, world.harvest_streams[k]);
      sensing[k] = sample_sensing(world.profiles[k], params, world.sensing_streams[k]);
      realized_gain[k] = sample_channel(world.mus[k],
                                        mcsp_distance_m(world.mus[k].x_m, world.mus[k].y_m, params),
                                        params, world.channel_streams[k]);
    }

    // decisions
    std::vector<PolicyDecision> decisions(K);
    std::vector<ActionSample> samples(K);
    std::vector<double> values(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k]) continue;
      switch (kind) {
        case PolicyKind::FdrlPpo:
        case PolicyKind::Ippo: {
          PpoAgent* agent = pool->agents[k].get();
          samples[k] = agent->act(obs[k], training);
          values[k] = training ? agent->value(obs[k]) : 0.0;
          PolicyDecision d;
          if (samples[k].task_choice < static_cast<int>(tasks.size()) &&
              samples[k].task_choice < pool->task_slots) {
            d.abstain = false;
            d.task = samples[k].task_choice;
            d.choice = ResourceChoice::checked(
                samples[k].compute_fraction * world.profiles[k].max_compute_rate_hz,
                samples[k].power_fraction * world.profiles[k].max_transmit_power_w,
                world.profiles[k]);
          }
          decisions[k] = d;
          break;
        }
        case PolicyKind::Motp:
          decisions[k] = motp_policy(tasks, world.mus[k], world.profiles[k], realized_gain[k], params);
          break;
        case PolicyKind::Rtps:
          decisions[k] = rtps_policy(tasks, world.mus[k], world.profiles[k], rtps_rng);
          break;
        case PolicyKind::Ota:
          throw std::invalid_argument("run_episode: the full-information solver is not a step policy");
      }
      if (!decisions[k].abstain && cfg.snap_resources_to_grid) {
        const auto& prof = world.profiles[k];
        decisions[k].choice = ResourceChoice::checked(
            detail::snap_fraction(decisions[k].choice.compute_rate_hz / prof.max_compute_rate_hz,
                                  cfg.grid_f) *
                prof.max_compute_rate_hz,
            detail::snap_fraction(decisions[k].choice.transmit_power_w / prof.max_transmit_power_w,
                                  cfg.grid_p) *
                prof.max_transmit_power_w,
            prof);
      }
    }

    // proposals: planned effort priced on the running channel average
    StepRecord rec;
    rec.step = t;
    std::vector<double> proposal_energy(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k] || decisions[k].abstain) continue;
      const TaskSpec& task = tasks[decisions[k].task];
      if (!is_eligible(world.mus[k].cell, task.roi))
        throw SimulationInvariantError("proposal from ineligible unit");
      const double p = decisions[k].choice.transmit_power_w;
      const double e_p_realized =
          p > 0 ? transmission_time(params.proposal_size_bits, p, realized_gain[k],
                                    params.bandwidth_hz, params.noise_power_w) *
                      p
                : 0.0;
      if (e_p_realized > battery_start[k]) continue;  // cannot even send the proposal
      EffortBreakdown planned = total_effort(
          task, world.profiles[k], decisions[k].choice, planning_gain[k],
          SensingDraw{world.profiles[k].mean_sensing_time_s, world.profiles[k].mean_sensing_power_w},
          params);
      Proposal prop;
      prop.mu = static_cast<int>(k);
      prop.task = decisions[k].task;
      prop.requested_payment = payment_request(planned, params.payment_coeff);
      prop.choice = decisions[k].choice;
      rec.proposals.push_back(prop);
      proposal_energy[k] = e_p_realized;
    }

    rec.decision = select_mus(rec.proposals, tasks);

    // execution: proposal uplink costs everyone who proposed; accepted units
    // then run their attempt against realized conditions
    std::vector<double> spent(K, 0.0);
    for (const auto& prop : rec.proposals) {
      spent[prop.mu] += proposal_energy[prop.mu];
      EffortBreakdown e;
      e.e_proposal_j = proposal_energy[prop.mu];
      rec.energies[prop.mu] = e;
    }
    for (const auto& [k, n] : rec.decision.rejected) rec.outcomes[{k, n}] = Outcome::NotAssigned;
    for (const auto& [k, n] : rec.decision.accepted) {
      const Proposal* prop = nullptr;
      for (const auto& p : rec.proposals)
        if (p.mu == k) prop = &p;
      AttemptResult ar =
          adjudicate_attempt(tasks[n], world.profiles[k], prop->choice, realized_gain[k], sensing[k],
                             battery_start[k] - spent[k], params);
      rec.outcomes[{k, n}] = ar.outcome;
      spent[k] += ar.consumed.total_energy_j();
      EffortBreakdown& e = rec.energies[k];
      e.e_sense_j = ar.consumed.e_sense_j;
      e.e_compute_j = ar.consumed.e_compute_j;
      e.e_transmit_j = ar.consumed.e_transmit_j;
      e.t_sense_s = ar.consumed.t_sense_s;
      e.t_compute_s = ar.consumed.t_compute_s;
      e.t_transmit_s = ar.consumed.t_transmit_s;
    }
    rec.payments = settle(rec.outcomes, rec.proposals);

    // per-task ledger
    for (const auto& task : tasks) {
      TaskLedgerEntry entry;
      entry.task = task.task_index;
      entry.type = task.type;
      entry.difficulty = task.difficulty;
      entry.budget = task.budget;
      for (const auto& [pair, outcome] : rec.outcomes)
        if (pair.second == task.task_index && outcome == Outcome::Success) entry.completed = true;
      rec.tasks.push_back(entry);
    }

    // batteries: harvest lands after spending and is capped at capacity
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k]) continue;
      const double before = battery_start[k];
      const double after = battery_update(before, spent[k], harvest[k], params.battery_capacity_j);
      world.mus[k].battery_j = after;
      rec.harvested[static_cast<int>(k)] = harvest[k];
      rec.battery_after[static_cast<int>(k)] = after;
      const double uncapped = std::max(0.0, before - spent[k]) + harvest[k];
      rec.overflow[static_cast<int>(k)] = std::max(0.0, uncapped - params.battery_capacity_j);
      result.harvested_sum[static_cast<int>(k)] += harvest[k];
      result.spent_sum[static_cast<int>(k)] += spent[k];
      result.overflow_sum[static_cast<int>(k)] += rec.overflow[static_cast<int>(k)];
    }

    detail::check_step_invariants(rec, tasks, params);

    // mobility, then the next step's tasks, so bootstrap observations exist
    for (std::size_t k = 0; k < K; ++k)
      if (world.present[k]) step_mobility(world.mus[k], world.mobility[k], params, world.mobility_streams[k]);
    if (t + 1 < horizon) tasks = tasks_for(t + 1);

    // rewards and learning
    std::vector<std::pair<int, double>> step_payments;
    for (std::size_t k = 0; k < K; ++k) {
      if (!world.present[k]) continue;
      double payment = 0;
      if (auto it = rec.payments.find(static_cast<int>(k)); it != rec.payments.end())
        payment = it->second;
      step_payments.emplace_back(static_cast<int>(k), payment);
      result.total_reward += payment;
      if (fed_active) round_rewards[static_cast<int>(k)] += payment;
      if (rl && training) {
        PpoAgent* agent = pool->agents[k].get();
        const bool done = t + 1 == horizon;
        Transition tr;
        tr.obs = std::move(obs[k]);
        tr.action = samples[k];
        tr.reward = payment;
        tr.value = values[k];
        tr.done = done;
        agent->store(std::move(tr));
        if (agent->buffer_full() || done) {
          double bootstrap = 0;
          if (!done) {
            const auto next_obs =
                encode_state(world.profiles[k], world.mus[k], tasks, pool->task_slots, params);
            bootstrap = agent->value(next_obs);
          }
          agent->update(bootstrap);
        }
      }
    }
    result.payments_by_step.push_back(std::move(step_payments));
    if (keep_records) result.records.push_back(std::move(rec));

    if (fed_active) {
      ++steps_in_round;
      const bool boundary = steps_in_round >= pool->fed_cfg.steps_per_round || t + 1 == horizon;
      if (boundary) {
        auto agents = present_agents();
        result.rounds.push_back(pool->driver.end_round(agents, round_rewards, round_chis));
        round_rewards.clear();
        steps_in_round = 0;
        if (t + 1 < horizon) round_chis = pool->driver.begin_round(agents);
      }
    }
  }

  for (std::size_t k = 0; k < world.mus.size(); ++k)
    result.final_battery[static_cast<int>(k)] = world.mus[k].battery_j;

  // the ledger must close exactly: harvested - spent = delta battery + overflow
  for (const auto& [k, harvested] : result.harvested_sum) {
    const double lhs = harvested - result.spent_sum[k];
    const double rhs = result.final_battery[k] - result.initial_battery[k] + result.overflow_sum[k];
    if (std::abs(lhs - rhs) > 1e-9)
      throw SimulationInvariantError("energy ledger does not close");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training driver: episodes of T steps, learning rate decayed per episode.

struct TrainResult {
  AgentPool pool;
  std::vector<double> episode_rewards;
  std::vector<RoundLedger> rounds;
};

inline TrainResult train_agents(const ExperimentConfig& cfg, std::uint64_t seed) {
  TrainResult tr;
  tr.pool = AgentPool::make(cfg, seed);
  if (!tr.pool.is_rl()) return tr;
  for (int e = 0; e < cfg.episodes; ++e) {
    tr.pool.set_episode(e);
    const std::uint64_t ws = derive_seed(seed, "train-episode", static_cast<std::uint64_t>(e));
    EpisodeResult er = run_episode(cfg, ws, &tr.pool, /*training=*/true, -1, nullptr,
                                   /*keep_records=*/false);
    tr.episode_rewards.push_back(er.total_reward);
    for (auto& r : er.rounds) tr.rounds.push_back(std::move(r));
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Metrics.

struct MetricsSample {
  double weighted_completed = 0;
  double collision_ratio = 0;
  double energy_per_completed = 0;
  int completed_count = 0;
  int proposal_count = 0;
  int collision_count = 0;
  double total_energy = 0;
  std::vector<double> per_type;             // completed counts per type
  std::vector<double> mean_reward_per_step; // averaged over present units
};

inline MetricsSample metrics_from_records(const std::vector<StepRecord>& records, int num_types) {
  if (records.empty()) throw std::invalid_argument("metrics: no records");
  MetricsSample m;
  m.per_type.assign(num_types, 0.0);
  for (const auto& rec : records) {
    for (const auto& task : rec.tasks) {
      if (task.completed) {
        m.weighted_completed += task.difficulty;
        m.completed_count += 1;
        if (task.type >= 0 && task.type < num_types) m.per_type[task.type] += 1;
      }
    }
    m.proposal_count += static_cast<int>(rec.proposals.size());
    for (const auto& [n, c] : rec.decision.collisions_per_task) m.collision_count += c;
    for (const auto& [k, e] : rec.energies) m.total_energy += e.total_energy_j();
    double paid = 0;
    int present = static_cast<int>(rec.battery_after.size());
    for (const auto& [k, v] : rec.payments) paid += v;
    m.mean_reward_per_step.push_back(present > 0 ? paid / present : 0.0);
  }
  m.collision_ratio = m.proposal_count > 0
                          ? static_cast<double>(m.collision_count) / m.proposal_count
                          : 0.0;
  m.energy_per_completed = m.completed_count > 0 ? m.total_energy / m.completed_count : 0.0;
  return m;
}

struct SummaryStat {
  double mean = 0;
  double ci5 = 0;
  double ci95 = 0;
  std::vector<double> samples;
};

inline SummaryStat summarize(std::vector<double> samples, std::uint64_t ci_seed = 7) {
  SummaryStat s;
  s.samples = samples;
  if (samples.empty()) return s;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
  if (samples.size() == 1) {
    s.ci5 = s.ci95 = samples[0];
    return s;
  }
  // bootstrap percentile interval
  RngStream rng(ci_seed, "bootstrap");
  const int B = 2000;
  std::vector<double> means(B);
  for (int b = 0; b < B; ++b) {
    double acc = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
      acc += samples[rng.uniform_int(static_cast<int>(samples.size()))];
    means[b] = acc / samples.size();
  }
  std::sort(means.begin(), means.end());
  s.ci5 = means[static_cast<std::size_t>(0.05 * (B - 1))];
  s.ci95 = means[static_cast<std::size_t>(0.95 * (B - 1))];
  return s;
}

struct MetricsReport {
  SummaryStat weighted_completed;
  SummaryStat collision_ratio;
  SummaryStat energy_per_completed;
  std::vector<double> per_type_mean;
  double per_type_cv = 0;  // coefficient of variation across types
  std::vector<double> mean_reward_per_step;  // averaged across realizations
  int realizations = 0;
};

inline MetricsReport compute_metrics(const std::vector<MetricsSample>& samples, int num_types) {
  if (samples.empty()) throw std::invalid_argument("compute_metrics: no realizations");
  MetricsReport r;
  r.realizations = static_cast<int>(samples.size());
  auto collect = [&](auto get) {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(get(s));
    return v;
  };
  r.weighted_completed = summarize(collect([](const MetricsSample& s) { return s.weighted_completed; }));
  r.collision_ratio = summarize(collect([](const MetricsSample& s) { return s.collision_ratio; }));
  r.energy_per_completed =
      summarize(collect([](const MetricsSample& s) { return s.energy_per_completed; }));
  r.per_type_mean.assign(num_types, 0.0);
  for (const auto& s : samples)
    for (int c = 0; c < num_types; ++c) r.per_type_mean[c] += s.per_type[c];
  for (double& v : r.per_type_mean) v /= samples.size();
  const double tmean =
      std::accumulate(r.per_type_mean.begin(), r.per_type_mean.end(), 0.0) / num_types;
  double tvar = 0;
  for (double v : r.per_type_mean) tvar += (v - tmean) * (v - tmean);
  tvar /= num_types;
  r.per_type_cv = tmean > 0 ? std::sqrt(tvar) / tmean : 0.0;
  std::size_t longest = 0;
  for (const auto& s : samples) longest = std::max(longest, s.mean_reward_per_step.size());
  r.mean_reward_per_step.assign(longest, 0.0);
  std::vector<int> counts(longest, 0);
  for (const auto& s : samples)
    for (std::size_t t = 0; t < s.mean_reward_per_step.size(); ++t) {
      r.mean_reward_per_step[t] += s.mean_reward_per_step[t];
      counts[t]++;
    }
  for (std::size_t t = 0; t < longest; ++t)
    if (counts[t] > 0) r.mean_reward_per_step[t] /= counts[t];
  return r;
}

inline nlohmann::json to_json(const SummaryStat& s) {
  return {{"mean", s.mean}, {"ci5", s.ci5}, {"ci95", s.ci95}, {"samples", s.samples}};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  return {{"weighted_completed", to_json(r.weighted_completed)},
          {"collision_ratio", to_json(r.collision_ratio)},
          {"energy_per_completed", to_json(r.energy_per_completed)},
          {"per_type_mean", r.per_type_mean},
          {"per_type_cv", r.per_type_cv},
          {"mean_reward_per_step", r.mean_reward_per_step},
          {"realizations", r.realizations}};
}

// ---------------------------------------------------------------------------
// Replay of causal policies on a frozen instance, restricted to the solver's
// resource grid so the full-information objective is an upper bound by
// construction.

inline double replay_on_instance(const OtaInstance& inst, PolicyKind kind, std::uint64_t seed,
                                 const AgentHyperparams& hp) {
  const ScenarioParams& params = inst.params;
  const int K = inst.num_mus();
  const int T = inst.horizon();
  std::vector<double> battery = inst.initial_battery;
  std::vector<std::vector<double>> gain_window(K);
  std::vector<std::unique_ptr<PpoAgent>> agents;
  if (kind == PolicyKind::FdrlPpo || kind == PolicyKind::Ippo) {
    for (int k = 0; k < K; ++k)
      agents.push_back(std::make_unique<PpoAgent>(k, params.tasks_per_step, hp, seed));
  }
  RngStream rtps_rng(seed, "replay-rtps");
  double objective = 0;

  for (int t = 0; t < T; ++t) {
    const std::vector<TaskSpec>& tasks = inst.tasks[t];
    std::vector<Proposal> proposals;
    std::vector<double> proposal_energy(K, 0.0);
    for (int k = 0; k < K; ++k) {
      MuState mu;
      mu.battery_j = battery[k];
      mu.cell = inst.location[k][t];
      mu.channel_history = gain_window[k];
      mu.avg_channel_gain =
          gain_window[k].empty()
              ? inst.channel_gain[k][t]  // first contact: no past yet
              : std::accumulate(gain_window[k].begin(), gain_window[k].end(), 0.0) /
                    gain_window[k].size();

      PolicyDecision d;
      switch (kind) {
        case PolicyKind::FdrlPpo:
        case PolicyKind::Ippo: {
          auto obs = encode_state(inst.profiles[k], mu, tasks, params.tasks_per_step, params);
          const ActionSample a = agents[k]->act(obs, false);
          if (a.task_choice < static_cast<int>(tasks.size())) {
            d.abstain = false;
            d.task = a.task_choice;
            d.choice = ResourceChoice{a.compute_fraction * inst.profiles[k].max_compute_rate_hz,
                                      a.power_fraction * inst.profiles[k].max_transmit_power_w};
          }
          break;
        }
        case PolicyKind::Motp:
          d = motp_policy(tasks, mu, inst.profiles[k], inst.channel_gain[k][t], params);
          break;
        case PolicyKind::Rtps:
          d = rtps_policy(tasks, mu, inst.profiles[k], rtps_rng);
          break;
        case PolicyKind::Ota:
          throw std::invalid_argument("replay: not a causal policy");
      }
      if (d.abstain) continue;
      const auto& prof = inst.profiles[k];
      const ResourceChoice snapped{
          detail::snap_fraction(d.choice.compute_rate_hz / prof.max_compute_rate_hz, inst.grid_f) *
              prof.max_compute_rate_hz,
          detail::snap_fraction(d.choice.transmit_power_w / prof.max_transmit_power_w, inst.grid_p) *
              prof.max_transmit_power_w};
      const double p = snapped.transmit_power_w;
      const double e_p = p > 0 ? transmission_time(params.proposal_size_bits, p,
                                                   inst.channel_gain[k][t], params.bandwidth_hz,
                                                   params.noise_power_w) *
                                     p
                               : 0.0;
      if (e_p > battery[k]) continue;
      EffortBreakdown planned = total_effort(
          tasks[d.task], prof, snapped, mu.avg_channel_gain,
          SensingDraw{prof.mean_sensing_time_s, prof.mean_sensing_power_w}, params);
      Proposal prop;
      prop.mu = k;
      prop.task = d.task;
      prop.requested_payment = payment_request(planned, params.payment_coeff);
      prop.choice = snapped;
      proposals.push_back(prop);
      proposal_energy[k] = e_p;
    }

    AssignmentDecision decision = select_mus(proposals, tasks);
    std::vector<double> spent(K, 0.0);
    for (const auto& prop : proposals) spent[prop.mu] += proposal_energy[prop.mu];
    std::vector<bool> completed(tasks.size(), false);
    for (const auto& [k, n] : decision.accepted) {
      const Proposal* prop = nullptr;
      for (const auto& p : proposals)
        if (p.mu == k) prop = &p;
      AttemptResult ar = adjudicate_attempt(tasks[n], inst.profiles[k], prop->choice,
                                            inst.channel_gain[k][t], inst.sensing[k][t],
                                            battery[k] - spent[k], params);
      spent[k] += ar.consumed.total_energy_j();
      if (ar.outcome == Outcome::Success) completed[n] = true;
    }
    for (std::size_t n = 0; n < tasks.size(); ++n)
      if (completed[n]) objective += tasks[n].difficulty;

    for (int k = 0; k < K; ++k) {
      battery[k] = battery_update(battery[k], spent[k], inst.harvest[k][t],
                                  inst.profiles[k].battery_capacity_j);
      gain_window[k].push_back(inst.channel_gain[k][t]);
      if (static_cast<int>(gain_window[k].size()) > params.channel_window)
        gain_window[k].erase(gain_window[k].begin());
    }
  }
  return objective;
}

// ---------------------------------------------------------------------------
// Flat key=value config files.

inline std::vector<ChurnEvent> parse_churn(const std::string& spec) {
  // "100:join:5;200:drop:5" or explicit ids "100:join:5,6,7"
  std::vector<ChurnEvent> events;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    std::stringstream es(item);
    std::string step_s, kind_s, what;
    if (!std::getline(es, step_s, ':') || !std::getline(es, kind_s, ':') || !std::getline(es, what))
      throw std::invalid_argument("churn: expected step:kind:count-or-ids, got " + item);
    ChurnEvent ev;
    ev.step = std::stoi(step_s);
    if (kind_s == "join") ev.join = true;
    else if (kind_s == "drop") ev.join = false;
    else throw std::invalid_argument("churn: kind must be join or drop");
    if (what.find(',') != std::string::npos) {
      std::stringstream ws(what);
      std::string id;
      while (std::getline(ws, id, ',')) ev.ids.push_back(std::stoi(id));
    } else {
      ev.count = std::stoi(what);
    }
    events.push_back(ev);
  }
  return events;
}

inline ExperimentConfig parse_config_text(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_d = [&] { return std::stod(value); };
    auto as_i = [&] { return std::stoi(value); };
    auto as_b = [&] { return value == "true" || value == "1" || value == "yes"; };

    if (key == "scenario") cfg.scenario = value;
    else if (key == "policy") cfg.policy = policy_from_name(value);
    else if (key == "policies") {
      cfg.policies.clear();
      std::stringstream ps(value);
      std::string p;
      while (std::getline(ps, p, ',')) cfg.policies.push_back(policy_from_name(p));
    } else if (key == "seeds") {
      cfg.seeds.clear();
      std::stringstream ssd(value);
      std::string s;
      while (std::getline(ssd, s, ',')) cfg.seeds.push_back(std::stoull(s));
    } else if (key == "episodes") cfg.episodes = as_i();
    else if (key == "realizations") cfg.realizations = as_i();
    else if (key == "churn") cfg.churn = parse_churn(value);
    else if (key == "dataset") cfg.dataset_path = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "snap_resources_to_grid") cfg.snap_resources_to_grid = as_b();
    else if (key == "grid_f") cfg.grid_f = as_i();
    else if (key == "grid_p") cfg.grid_p = as_i();
    else if (key == "horizon") cfg.params.horizon_steps = as_i();
    else if (key == "step_duration") cfg.params.step_duration_s = as_d();
    else if (key == "num_mus") cfg.params.num_mus = as_i();
    else if (key == "tasks_per_step") cfg.params.tasks_per_step = as_i();
    else if (key == "num_types") cfg.params.num_types = as_i();
    else if (key == "bandwidth") cfg.params.bandwidth_hz = as_d();
    else if (key == "noise_power") cfg.params.noise_power_w = as_d();
    else if (key == "pathloss_exponent") cfg.params.pathloss_exponent = as_d();
    else if (key == "channel_window") cfg.params.channel_window = as_i();
    else if (key == "xi") cfg.params.difficulty_size_weight = as_d();
    else if (key == "omega") cfg.params.difficulty_deadline_weight = as_d();
    else if (key == "eta") cfg.params.budget_coeff = as_d();
    else if (key == "kappa") cfg.params.payment_coeff = as_d();
    else if (key == "max_harvest_fraction") cfg.params.max_harvest_fraction = as_d();
    else if (key == "result_size_min") cfg.params.result_size_min_bits = as_d();
    else if (key == "result_size_max") cfg.params.result_size_max_bits = as_d();
    else if (key == "raw_size_min") cfg.params.raw_size_min_bits = as_d();
    else if (key == "raw_size_max") cfg.params.raw_size_max_bits = as_d();
    else if (key == "complexity_min") cfg.params.complexity_min = as_d();
    else if (key == "complexity_max") cfg.params.complexity_max = as_d();
    else if (key == "deadline_min_fraction") cfg.params.deadline_min_fraction = as_d();
    else if (key == "whole_area_probability") cfg.params.whole_area_probability = as_d();
    else if (key == "roi_fraction_min") cfg.params.roi_fraction_min = as_d();
    else if (key == "roi_fraction_max") cfg.params.roi_fraction_max = as_d();
    else if (key == "area_size") cfg.params.area_size_m = as_d();
    else if (key == "grid_rows") cfg.params.grid_rows = as_i();
    else if (key == "grid_cols") cfg.params.grid_cols = as_i();
    else if (key == "max_speed") cfg.params.max_speed_mps = as_d();
    else if (key == "battery_capacity") cfg.params.battery_capacity_j = as_d();
    else if (key == "initial_battery_fraction") cfg.params.initial_battery_fraction = as_d();
    else if (key == "mean_sensing_time") cfg.params.mean_sensing_time_s = as_d();
    else if (key == "mean_sensing_power") cfg.params.mean_sensing_power_w = as_d();
    else if (key == "max_transmit_power") cfg.params.max_transmit_power_w = as_d();
    else if (key == "compute_rate_min") cfg.params.compute_rate_min_hz = as_d();
    else if (key == "compute_rate_max") cfg.params.compute_rate_max_hz = as_d();
    else if (key == "compute_energy_coeff") cfg.params.compute_energy_coeff = as_d();
    else if (key == "proposal_size") cfg.params.proposal_size_bits = as_d();
    else if (key == "gamma") cfg.agent.gamma = as_d();
    else if (key == "gae_lambda") cfg.agent.gae_lambda = as_d();
    else if (key == "clip_epsilon") cfg.agent.clip_epsilon = as_d();
    else if (key == "epochs") cfg.agent.epochs = as_i();
    else if (key == "batch_steps") cfg.agent.batch_steps = as_i();
    else if (key == "minibatch") cfg.agent.minibatch = as_i();
    else if (key == "entropy_coeff") cfg.agent.entropy_coeff = as_d();
    else if (key == "value_coeff") cfg.agent.value_coeff = as_d();
    else if (key == "lr0") cfg.agent.lr0 = as_d();
    else if (key == "lr_decay") cfg.agent.lr_decay = as_d();
    else if (key == "hidden") cfg.agent.hidden = as_i();
    else if (key == "fed_enabled") cfg.fed.enabled = as_b();
    else if (key == "fed_steps_per_round") cfg.fed.steps_per_round = as_i();
    else throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key " + key);
  }
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config_text(in);
}

// ---------------------------------------------------------------------------
// Worker pool over independent jobs (seeds, realizations). Results are
// assembled in index order, so output bytes do not depend on the worker
// count.

inline int worker_count() {
  if (const char* env = std::getenv("MCSIM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 2;
}

inline void parallel_for(int jobs, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), jobs);
  if (workers <= 1) {
    for (int i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mcsim
