#pragma once
// The platform side of the market: collects proposals, runs
// cheapest-within-budget selection, adjudicates attempts against realized
// channel and sensing conditions, settles payments, and keeps the per-step
// ledger.

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mcsim/core.hpp"

namespace mcsim {

enum class Outcome { Success, DeadlineMiss, EnergyShortfall, NotAssigned };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::DeadlineMiss: return "deadline_miss";
    case Outcome::EnergyShortfall: return "energy_shortfall";
    case Outcome::NotAssigned: return "not_assigned";
  }
  return "?";
}

struct Proposal {
  int mu = -1;
  int task = -1;
  double requested_payment = 0;
  ResourceChoice choice;
};

struct AssignmentDecision {
  std::vector<std::pair<int, int>> accepted;  // (mu, task)
  std::vector<std::pair<int, int>> rejected;
  std::map<int, int> collisions_per_task;

  bool is_accepted(int mu) const {
    for (const auto& [k, n] : accepted)
      if (k == mu) return true;
    return false;
  }
};

// What a unit is allowed to learn about the step: its own flags only.
struct MuFeedback {
  bool proposed = false;
  bool accepted = false;
  Outcome outcome = Outcome::NotAssigned;
  double payment = 0;
};

struct TaskLedgerEntry {
  int task = -1;
  int type = 0;
  double difficulty = 0;
  double budget = 0;
  bool completed = false;
};

struct StepRecord {
  int step = 0;
  std::vector<Proposal> proposals;
  AssignmentDecision decision;
  std::vector<TaskLedgerEntry> tasks;
  std::map<std::pair<int, int>, Outcome> outcomes;
  std::map<int, double> payments;           // per proposing unit
  std::map<int, EffortBreakdown> energies;  // actually consumed, incl. proposal uplink
  std::map<int, double> harvested;
  std::map<int, double> battery_after;
  std::map<int, double> overflow;  // harvest clipped at the battery cap
};

// Cheapest-first selection under the per-task budget. Ties on price break
// toward the lower unit index so runs are reproducible.
inline AssignmentDecision select_mus(const std::vector<Proposal>& proposals,
                                     const std::vector<TaskSpec>& tasks) {
  std::set<int> seen;
  for (const auto& p : proposals) {
    if (!seen.insert(p.mu).second)
      throw std::invalid_argument("select_mus: more than one proposal from unit " +
                                  std::to_string(p.mu));
    if (p.task < 0 || p.task >= static_cast<int>(tasks.size()))
      throw std::invalid_argument("select_mus: proposal for unknown task");
    if (!(p.requested_payment > 0))
      throw std::invalid_argument("select_mus: requested payment must be positive");
  }

  std::map<int, std::vector<const Proposal*>> by_task;
  for (const auto& p : proposals) by_task[p.task].push_back(&p);

  AssignmentDecision d;
  for (auto& [n, group] : by_task) {
    std::sort(group.begin(), group.end(), [](const Proposal* a, const Proposal* b) {
      if (a->requested_payment != b->requested_payment)
        return a->requested_payment < b->requested_payment;
      return a->mu < b->mu;
    });
    const double budget = tasks[n].budget;
    double committed = 0;
    int taken = 0;
    for (const Proposal* p : group) {
      if (committed + p->requested_payment <= budget * (1.0 + 1e-12)) {
        committed += p->requested_payment;
        d.accepted.emplace_back(p->mu, n);
        ++taken;
      } else {
        d.rejected.emplace_back(p->mu, n);
      }
    }
    d.collisions_per_task[n] = static_cast<int>(group.size()) - taken;
  }
  return d;
}

struct AttemptResult {
  Outcome outcome = Outcome::NotAssigned;
  EffortBreakdown consumed;  // proposal energy excluded; stages only
};

// Runs the attempt's stages (sense, process, transmit) against the realized
// draws. A stage runs until it finishes, the deadline passes, or the battery
// empties, whichever comes first; energy is spent for the time actually run.
inline AttemptResult adjudicate_attempt(const TaskSpec& task, const MuProfile& profile,
                                        const ResourceChoice& choice, double realized_gain,
                                        const SensingDraw& sensing, double battery_j,
                                        const ScenarioParams& params) {
  AttemptResult r;
  double time_left = task.deadline_s;
  double budget_j = battery_j;

  struct Stage {
    double duration_s;
    double power_w;
    double* time_slot;
    double* energy_slot;
  };
  const double t_comp = computing_time(task.raw_size_bits, task.complexity, choice.compute_rate_hz);
  const double p_comp = compute_power_w(choice.compute_rate_hz, profile.compute_energy_coeff);
  const double t_tx = transmission_time(task.result_size_bits, choice.transmit_power_w, realized_gain,
                                        params.bandwidth_hz, params.noise_power_w);
  Stage stages[3] = {
      {sensing.time_s, sensing.power_w, &r.consumed.t_sense_s, &r.consumed.e_sense_j},
      {t_comp, p_comp, &r.consumed.t_compute_s, &r.consumed.e_compute_j},
      {t_tx, choice.transmit_power_w, &r.consumed.t_transmit_s, &r.consumed.e_transmit_j},
  };

  for (const Stage& s : stages) {
    const double energy_limit_t =
        s.power_w > 0 ? budget_j / s.power_w : std::numeric_limits<double>::infinity();
    const double run_t = std::max(0.0, std::min({s.duration_s, time_left, energy_limit_t}));
    *s.time_slot = run_t;
    *s.energy_slot = run_t * s.power_w;
    budget_j = std::max(0.0, budget_j - run_t * s.power_w);
    time_left -= run_t;
    if (run_t < s.duration_s) {
      r.outcome = energy_limit_t <= time_left + run_t ? Outcome::EnergyShortfall : Outcome::DeadlineMiss;
      return r;
    }
  }
  r.outcome = Outcome::Success;
  return r;
}

// Payment equals the requested amount, and only on success.
inline std::map<int, double> settle(const std::map<std::pair<int, int>, Outcome>& outcomes,
                                    const std::vector<Proposal>& proposals) {
  std::map<int, double> payments;
  for (const auto& p : proposals) payments[p.mu] = 0;
  for (const auto& [pair, outcome] : outcomes) {
    if (outcome != Outcome::Success) continue;
    for (const auto& p : proposals)
      if (p.mu == pair.first && p.task == pair.second) payments[p.mu] = p.requested_payment;
  }
  return payments;
}

inline MuFeedback feedback_for(const StepRecord& rec, int mu) {
  MuFeedback fb;
  for (const auto& p : rec.proposals)
    if (p.mu == mu) fb.proposed = true;
  if (!fb.proposed) return fb;
  fb.accepted = rec.decision.is_accepted(mu);
  for (const auto& [pair, outcome] : rec.outcomes)
    if (pair.first == mu) fb.outcome = outcome;
  if (auto it = rec.payments.find(mu); it != rec.payments.end()) fb.payment = it->second;
  return fb;
}

// --- JSON (one object per step; the run log is JSON-lines) ---

inline nlohmann::json to_json(const EffortBreakdown& e) {
  return {{"e_proposal", e.e_proposal_j}, {"e_sense", e.e_sense_j},   {"e_compute", e.e_compute_j},
          {"e_transmit", e.e_transmit_j}, {"t_sense", e.t_sense_s},   {"t_compute", e.t_compute_s},
          {"t_transmit", e.t_transmit_s}};
}

inline EffortBreakdown effort_from_json(const nlohmann::json& j) {
  EffortBreakdown e;
  e.e_proposal_j = j.at("e_proposal");
  e.e_sense_j = j.at("e_sense");
  e.e_compute_j = j.at("e_compute");
  e.e_transmit_j = j.at("e_transmit");
  e.t_sense_s = j.at("t_sense");
  e.t_compute_s = j.at("t_compute");
  e.t_transmit_s = j.at("t_transmit");
  return e;
}

inline nlohmann::json to_json(const StepRecord& rec) {
  nlohmann::json j;
  j["type"] = "step";
  j["step"] = rec.step;
  auto& props = j["proposals"] = nlohmann::json::array();
  for (const auto& p : rec.proposals)
    props.push_back({{"mu", p.mu},
                     {"task", p.task},
                     {"payment", p.requested_payment},
                     {"f_comp", p.choice.compute_rate_hz},
                     {"p_tx", p.choice.transmit_power_w}});
  auto pairs = [](const std::vector<std::pair<int, int>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [k, n] : v) a.push_back({{"mu", k}, {"task", n}});
    return a;
  };
  j["accepted"] = pairs(rec.decision.accepted);
  j["rejected"] = pairs(rec.decision.rejected);
  auto& coll = j["collisions"] = nlohmann::json::array();
  for (const auto& [n, c] : rec.decision.collisions_per_task)
    coll.push_back({{"task", n}, {"count", c}});
  auto& tasks = j["tasks"] = nlohmann::json::array();
  for (const auto& t : rec.tasks)
    tasks.push_back({{"task", t.task},
                     {"task_type", t.type},
                     {"difficulty", t.difficulty},
                     {"budget", t.budget},
                     {"completed", t.completed}});
  auto& outs = j["outcomes"] = nlohmann::json::array();
  for (const auto& [pair, o] : rec.outcomes)
    outs.push_back({{"mu", pair.first}, {"task", pair.second}, {"outcome", outcome_name(o)}});
  auto map_json = [](const std::map<int, double>& m) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [k, v] : m) a.push_back({{"mu", k}, {"value", v}});
    return a;
  };
  j["payments"] = map_json(rec.payments);
  j["harvested"] = map_json(rec.harvested);
  j["battery_after"] = map_json(rec.battery_after);
  j["overflow"] = map_json(rec.overflow);
  auto& en = j["energies"] = nlohmann::json::array();
  for (const auto& [k, e] : rec.energies) {
    nlohmann::json o = to_json(e);
    o["mu"] = k;
    en.push_back(o);
  }
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord rec;
  rec.step = j.at("step");
  for (const auto& p : j.at("proposals")) {
    Proposal pr;
    pr.mu = p.at("mu");
    pr.task = p.at("task");
    pr.requested_payment = p.at("payment");
    pr.choice.compute_rate_hz = p.at("f_comp");
    pr.choice.transmit_power_w = p.at("p_tx");
    rec.proposals.push_back(pr);
  }
  for (const auto& a : j.at("accepted"))
    rec.decision.accepted.emplace_back(a.at("mu"), a.at("task"));
  for (const auto& a : j.at("rejected"))
    rec.decision.rejected.emplace_back(a.at("mu"), a.at("task"));
  for (const auto& c : j.at("collisions"))
    rec.decision.collisions_per_task[c.at("task")] = c.at("count");
  for (const auto& t : j.at("tasks")) {
    TaskLedgerEntry e;
    e.task = t.at("task");
    e.type = t.at("task_type");
    e.difficulty = t.at("difficulty");
    e.budget = t.at("budget");
    e.completed = t.at("completed");
    rec.tasks.push_back(e);
  }
  for (const auto& o : j.at("outcomes")) {
    const std::string name = o.at("outcome");
    Outcome out = Outcome::NotAssigned;
    if (name == "success") out = Outcome::Success;
    else if (name == "deadline_miss") out = Outcome::DeadlineMiss;
    else if (name == "energy_shortfall") out = Outcome::EnergyShortfall;
    rec.outcomes[{o.at("mu"), o.at("task")}] = out;
  }
  auto read_map = [&](const char* key, std::map<int, double>& m) {
    for (const auto& e : j.at(key)) m[e.at("mu")] = e.at("value");
  };
  read_map("payments", rec.payments);
  read_map("harvested", rec.harvested);
  read_map("battery_after", rec.battery_after);
  read_map("overflow", rec.overflow);
  for (const auto& e : j.at("energies")) rec.energies[e.at("mu")] = effort_from_json(e);
  return rec;
}

}  // namespace mcsim
