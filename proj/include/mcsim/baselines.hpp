#pragma once
// Reference policies: random task participation (RTPS), myopically optimal
// participation (MOTP) on top of a minimum-energy resource allocator, and an
// exhaustive full-information allocation solver for tiny instances that
// serves as the performance upper bound.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mcsim/core.hpp"
#include "mcsim/environment.hpp"
#include "mcsim/rng.hpp"

namespace mcsim {

// A policy's per-step decision: a task index with resources, or abstain.
struct PolicyDecision {
  bool abstain = true;
  int task = -1;
  ResourceChoice choice;
};

// Uniform choice over eligible tasks plus abstain; uniform resources over
// (0, max].
inline PolicyDecision rtps_policy(std::span<const TaskSpec> tasks, const MuState& mu,
                                  const MuProfile& profile, RngStream& rng) {
  std::vector<int> eligible;
  for (std::size_t n = 0; n < tasks.size(); ++n)
    if (is_eligible(mu.cell, tasks[n].roi)) eligible.push_back(static_cast<int>(n));
  const int pick = rng.uniform_int(static_cast<int>(eligible.size()) + 1);
  PolicyDecision d;
  if (pick == static_cast<int>(eligible.size())) return d;  // abstain
  d.abstain = false;
  d.task = eligible[pick];
  d.choice = ResourceChoice::checked(rng.uniform01_open_low() * profile.max_compute_rate_hz,
                                     rng.uniform01_open_low() * profile.max_transmit_power_w, profile);
  return d;
}

struct AllocationResult {
  bool feasible = false;
  ResourceChoice choice;
  double energy_j = 0;  // processing + transmission only
  double time_s = 0;
};

// Minimizes processing + transmission energy subject to finishing within
// `time_budget_s`, by golden-section search over the time split between the
// two stages. Each sub-problem is monotone: the slowest rate (and the lowest
// power) that still meets the stage's share is optimal, and the total is
// convex in the split.
inline AllocationResult min_energy_allocation(const TaskSpec& task, const MuProfile& profile,
                                              double gain, double time_budget_s,
                                              const ScenarioParams& params) {
  AllocationResult out;
  if (!(time_budget_s > 0) || !(gain > 0)) return out;

  const double cycles = task.raw_size_bits * task.complexity;
  const double t_comp_min = cycles > 0 ? cycles / profile.max_compute_rate_hz : 0.0;
  const double rate_max =
      params.bandwidth_hz * std::log2(1.0 + profile.max_transmit_power_w * gain / params.noise_power_w);
  if (task.result_size_bits > 0 && rate_max <= 0) return out;
  const double t_tx_min = task.result_size_bits > 0 ? task.result_size_bits / rate_max : 0.0;
  if (t_comp_min + t_tx_min > time_budget_s) return out;

  auto power_for_share = [&](double tx_time) {
    if (task.result_size_bits <= 0 || tx_time <= 0) return 0.0;
    const double rate = task.result_size_bits / tx_time;
    return (std::exp2(rate / params.bandwidth_hz) - 1.0) * params.noise_power_w / gain;
  };
  auto energy_at = [&](double comp_share) {
    const double f = cycles > 0 ? cycles / comp_share : profile.max_compute_rate_hz;
    const double e_comp = cycles > 0 ? cycles * profile.compute_energy_coeff * f * f : 0.0;
    const double tx_time = time_budget_s - comp_share;
    const double p = power_for_share(tx_time);
    return e_comp + tx_time * p;
  };

  double lo = std::max(t_comp_min, 1e-12);
  double hi = std::max(lo, time_budget_s - t_tx_min);
  if (cycles <= 0) {
    lo = hi = 0.0;  // no processing: spend everything on transmission
  }
  double s_best;
  if (hi - lo < 1e-15) {
    s_best = lo;
  } else {
    // golden-section to relative tolerance 1e-6 on the split
    const double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = energy_at(x1), f2 = energy_at(x2);
    while ((b - a) > 1e-6 * std::max(1e-9, hi)) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - phi * (b - a);
        f1 = energy_at(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + phi * (b - a);
        f2 = energy_at(x2);
      }
    }
    s_best = 0.5 * (a + b);
    // endpoints can win when the optimum sits on a bound
    if (energy_at(lo) < energy_at(s_best)) s_best = lo;
    if (energy_at(hi) < energy_at(s_best)) s_best = hi;
  }

  double f = cycles > 0 ? cycles / std::max(s_best, 1e-12) : profile.max_compute_rate_hz;
  f = std::min(f, profile.max_compute_rate_hz);
  double p = power_for_share(time_budget_s - s_best);
  p = std::clamp(p, 0.0, profile.max_transmit_power_w);

  out.feasible = true;
  out.choice = ResourceChoice::checked(f, p, profile);
  out.time_s = computing_time(task.raw_size_bits, task.complexity, f) +
               transmission_time(task.result_size_bits, p, gain, params.bandwidth_hz, params.noise_power_w);
  out.energy_j = compute_energy(task.raw_size_bits, task.complexity, f, profile.compute_energy_coeff) +
                 (p > 0 ? transmission_time(task.result_size_bits, p, gain, params.bandwidth_hz,
                                            params.noise_power_w) *
                              p
                        : 0.0);
  return out;
}

// Greedy one-step optimum with knowledge of the current realized channel:
// propose to the feasible, affordable, within-budget task that pays the
// most; otherwise abstain.
inline PolicyDecision motp_policy(std::span<const TaskSpec> tasks, const MuState& mu,
                                  const MuProfile& profile, double realized_gain,
                                  const ScenarioParams& params) {
  PolicyDecision best;
  double best_payment = 0;
  for (std::size_t n = 0; n < tasks.size(); ++n) {
    const TaskSpec& task = tasks[n];
    if (!is_eligible(mu.cell, task.roi)) continue;
    const double time_budget = task.deadline_s - profile.mean_sensing_time_s;
    if (time_budget <= 0) continue;
    const AllocationResult alloc = min_energy_allocation(task, profile, realized_gain, time_budget, params);
    if (!alloc.feasible) continue;
    EffortBreakdown planned;
    const double p = alloc.choice.transmit_power_w;
    planned.e_proposal_j =
        p > 0 ? transmission_time(params.proposal_size_bits, p, realized_gain, params.bandwidth_hz,
                                  params.noise_power_w) *
                    p
              : 0.0;
    planned.e_sense_j = profile.mean_sensing_time_s * profile.mean_sensing_power_w;
    planned.e_compute_j =
        compute_energy(task.raw_size_bits, task.complexity, alloc.choice.compute_rate_hz,
                       profile.compute_energy_coeff);
    planned.e_transmit_j = alloc.energy_j - planned.e_compute_j;
    const double total = planned.total_energy_j();
    if (total > mu.battery_j) continue;  // unaffordable
    const double payment = payment_request(planned, params.payment_coeff);
    if (payment > task.budget) continue;  // own price over budget, pointless
    if (payment > best_payment) {
      best_payment = payment;
      best.abstain = false;
      best.task = static_cast<int>(n);
      best.choice = alloc.choice;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Exhaustive full-information solver. The instance freezes every draw of a
// tiny horizon; the solver searches all per-step assignments (each unit does
// one task or idles, each task gets at most one unit) over a discretized
// resource grid and propagates batteries exactly.

struct OtaInstance {
  ScenarioParams params;
  std::vector<MuProfile> profiles;
  std::vector<double> initial_battery;
  std::vector<std::vector<TaskSpec>> tasks;        // [t][n]
  std::vector<std::vector<double>> harvest;        // [k][t]
  std::vector<std::vector<double>> channel_gain;   // [k][t]
  std::vector<std::vector<SensingDraw>> sensing;   // [k][t]
  std::vector<std::vector<GridCell>> location;     // [k][t]
  int grid_f = 4;
  int grid_p = 4;

  int num_mus() const { return static_cast<int>(profiles.size()); }
  int horizon() const { return static_cast<int>(tasks.size()); }
};

struct EnumerationBoundError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline void check_enumeration_bound(const OtaInstance& inst) {
  if (inst.num_mus() > 3 || inst.horizon() > 4)
    throw EnumerationBoundError("ota: instance exceeds enumeration bound (K<=3, T<=4)");
  for (const auto& step_tasks : inst.tasks)
    if (static_cast<int>(step_tasks.size()) > 3)
      throw EnumerationBoundError("ota: instance exceeds enumeration bound (N<=3)");
}

inline double grid_level_f(const OtaInstance& inst, int k, int level) {
  return inst.profiles[k].max_compute_rate_hz * (level + 1) / inst.grid_f;
}
inline double grid_level_p(const OtaInstance& inst, int k, int level) {
  return inst.profiles[k].max_transmit_power_w * (level + 1) / inst.grid_p;
}

// Cheapest grid level that completes (k, n, t) by the deadline, if any.
// Execution cost is sensing + processing + transmission; the centralized
// scheme assigns directly, so no proposal uplink is spent. Spending more
// than this level can only shrink future feasibility, so it is the only
// level worth searching.
struct OtaOption {
  int task = -1;
  double energy_j = 0;
  ResourceChoice choice;
};

inline std::optional<OtaOption> cheapest_feasible_level(const OtaInstance& inst, int k, int n, int t) {
  const TaskSpec& task = inst.tasks[t][n];
  if (!is_eligible(inst.location[k][t], task.roi)) return std::nullopt;
  const SensingDraw& sensing = inst.sensing[k][t];
  const double gain = inst.channel_gain[k][t];
  std::optional<OtaOption> best;
  for (int fi = 0; fi < inst.grid_f; ++fi) {
    for (int pi = 0; pi < inst.grid_p; ++pi) {
      const double f = grid_level_f(inst, k, fi);
      const double p = grid_level_p(inst, k, pi);
      const double t_total = sensing.time_s + computing_time(task.raw_size_bits, task.complexity, f) +
                             transmission_time(task.result_size_bits, p, gain, inst.params.bandwidth_hz,
                                               inst.params.noise_power_w);
      if (t_total > task.deadline_s) continue;
      const double energy =
          sensing.time_s * sensing.power_w +
          compute_energy(task.raw_size_bits, task.complexity, f, inst.profiles[k].compute_energy_coeff) +
          transmission_time(task.result_size_bits, p, gain, inst.params.bandwidth_hz,
                            inst.params.noise_power_w) *
              p;
      if (!best || energy < best->energy_j) best = OtaOption{n, energy, ResourceChoice{f, p}};
    }
  }
  return best;
}

struct OtaAssignment {
  int step = 0;
  int mu = 0;
  int task = 0;
  ResourceChoice choice;
};

struct OtaPlan {
  double objective = 0;
  std::vector<OtaAssignment> assignments;
};

namespace detail {

struct OtaSearch {
  const OtaInstance& inst;
  std::vector<std::vector<std::vector<std::optional<OtaOption>>>> options;  // [t][k][n]
  std::vector<double> remaining_value;  // sum of task difficulties from step t on
  OtaPlan best;
  std::vector<OtaAssignment> current;

  explicit OtaSearch(const OtaInstance& i) : inst(i) {
    const int T = inst.horizon(), K = inst.num_mus();
    options.assign(T, {});
    for (int t = 0; t < T; ++t) {
      options[t].assign(K, {});
      for (int k = 0; k < K; ++k) {
        options[t][k].assign(inst.tasks[t].size(), std::nullopt);
        for (std::size_t n = 0; n < inst.tasks[t].size(); ++n)
          options[t][k][n] = cheapest_feasible_level(inst, k, static_cast<int>(n), t);
      }
    }
    remaining_value.assign(T + 1, 0.0);
    for (int t = T - 1; t >= 0; --t) {
      double v = 0;
      for (const auto& task : inst.tasks[t]) v += task.difficulty;
      remaining_value[t] = remaining_value[t + 1] + v;
    }
    best.objective = -1;
  }

  void run() {
    std::vector<double> battery = inst.initial_battery;
    step(0, battery, 0.0);
  }

  void step(int t, std::vector<double>& battery, double value) {
    if (t == inst.horizon()) {
      if (value > best.objective) {
        best.objective = value;
        best.assignments = current;
      }
      return;
    }
    if (value + remaining_value[t] <= best.objective) return;  // cannot improve
    std::vector<double> spent(inst.num_mus(), 0.0);
    assign(t, 0, 0, battery, spent, value);
  }

  void assign(int t, int k, unsigned used_mask, std::vector<double>& battery,
              std::vector<double>& spent, double value) {
    if (k == inst.num_mus()) {
      std::vector<double> next(battery.size());
      for (int kk = 0; kk < inst.num_mus(); ++kk)
        next[kk] = battery_update(battery[kk], spent[kk], inst.harvest[kk][t],
                                  inst.profiles[kk].battery_capacity_j);
      double gained = 0;
      for (std::size_t a = current.size(); a-- > 0;) {
        if (current[a].step != t) break;
        gained += inst.tasks[t][current[a].task].difficulty;
      }
      step(t + 1, next, value + gained);
      return;
    }
    // idle
    assign(t, k + 1, used_mask, battery, spent, value);
    // or take an unclaimed feasible task the battery can afford
    for (std::size_t n = 0; n < inst.tasks[t].size(); ++n) {
      if (used_mask & (1u << n)) continue;
      const auto& opt = options[t][k][n];
      if (!opt || opt->energy_j > battery[k]) continue;
      spent[k] = opt->energy_j;
      current.push_back(OtaAssignment{t, k, static_cast<int>(n), opt->choice});
      assign(t, k + 1, used_mask | (1u << n), battery, spent, value);
      current.pop_back();
      spent[k] = 0;
    }
  }
};

}  // namespace detail

inline OtaPlan ota_solve(const OtaInstance& inst) {
  check_enumeration_bound(inst);
  detail::OtaSearch search(inst);
  search.run();
  return search.best;
}

// Draws a tiny instance with the world's own generators so that replayed
// policies and the solver see identical conditions.
inline OtaInstance sample_ota_instance(const ScenarioParams& params, std::uint64_t seed) {
  OtaInstance inst;
  inst.params = params;
  WorldState w = make_world(seed, params, params.num_mus);
  const int T = params.horizon_steps;
  const int K = params.num_mus;
  inst.profiles = w.profiles;
  inst.initial_battery.resize(K);
  RngStream battery_stream(seed, "ota-battery");
  for (int k = 0; k < K; ++k)
    inst.initial_battery[k] = battery_stream.uniform(0.25, 1.0) * w.profiles[k].battery_capacity_j;
  inst.tasks.resize(T);
  inst.harvest.assign(K, std::vector<double>(T));
  inst.channel_gain.assign(K, std::vector<double>(T));
  inst.sensing.assign(K, std::vector<SensingDraw>(T));
  inst.location.assign(K, std::vector<GridCell>(T));
  for (int t = 0; t < T; ++t) {
    inst.tasks[t] = generate_tasks(t, params, w.task_stream);
    for (int k = 0; k < K; ++k) {
      inst.location[k][t] = w.mus[k].cell;
      inst.channel_gain[k][t] =
          sample_channel(w.mus[k], mcsp_distance_m(w.mus[k].x_m, w.mus[k].y_m, params), params,
                         w.channel_streams[k]);
      inst.harvest[k][t] = harvest_energy(params, w.harvest_streams[k]);
      inst.sensing[k][t] = sample_sensing(w.profiles[k], params, w.sensing_streams[k]);
      step_mobility(w.mus[k], w.mobility[k], params, w.mobility_streams[k]);
    }
  }
  return inst;
}

inline nlohmann::json to_json(const OtaInstance& inst) {
  nlohmann::json j;
  j["grid_f"] = inst.grid_f;
  j["grid_p"] = inst.grid_p;
  j["initial_battery"] = inst.initial_battery;
  auto& profs = j["profiles"] = nlohmann::json::array();
  for (const auto& p : inst.profiles)
    profs.push_back({{"mu", p.mu_index},
                     {"battery_capacity", p.battery_capacity_j},
                     {"mean_sensing_time", p.mean_sensing_time_s},
                     {"mean_sensing_power", p.mean_sensing_power_w},
                     {"p_tx_max", p.max_transmit_power_w},
                     {"f_comp_max", p.max_compute_rate_hz},
                     {"chip_coeff", p.compute_energy_coeff}});
  auto& steps = j["steps"] = nlohmann::json::array();
  for (int t = 0; t < inst.horizon(); ++t) {
    nlohmann::json st;
    st["t"] = t;
    auto& tasks = st["tasks"] = nlohmann::json::array();
    for (const auto& task : inst.tasks[t]) {
      nlohmann::json tj = {{"n", task.task_index},       {"result_bits", task.result_size_bits},
                           {"raw_bits", task.raw_size_bits}, {"deadline", task.deadline_s},
                           {"task_type", task.type},     {"complexity", task.complexity},
                           {"difficulty", task.difficulty}, {"budget", task.budget},
                           {"whole_area", task.roi.whole_area}};
      if (!task.roi.whole_area)
        tj["roi"] = {task.roi.i0, task.roi.j0, task.roi.i1, task.roi.j1};
      tasks.push_back(tj);
    }
    auto& mus = st["mus"] = nlohmann::json::array();
    for (int k = 0; k < inst.num_mus(); ++k)
      mus.push_back({{"mu", k},
                     {"gain", inst.channel_gain[k][t]},
                     {"harvest", inst.harvest[k][t]},
                     {"sense_time", inst.sensing[k][t].time_s},
                     {"sense_power", inst.sensing[k][t].power_w},
                     {"cell", {inst.location[k][t].i, inst.location[k][t].j}}});
    steps.push_back(st);
  }
  return j;
}

}  // namespace mcsim
