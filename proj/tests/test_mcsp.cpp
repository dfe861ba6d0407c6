#include <catch2/catch_amalgamated.hpp>

#include "mcsim/mcsp.hpp"
#include "mcsim/rng.hpp"
#include "oracles.hpp"

using namespace mcsim;
using Catch::Matchers::WithinRel;

namespace {
std::vector<TaskSpec> tasks_with_budgets(std::initializer_list<double> budgets) {
  std::vector<TaskSpec> tasks;
  int n = 0;
  for (double b : budgets) {
    TaskSpec t;
    t.task_index = n++;
    t.budget = b;
    t.difficulty = b / 10;
    tasks.push_back(t);
  }
  return tasks;
}

Proposal prop(int mu, int task, double g) {
  Proposal p;
  p.mu = mu;
  p.task = task;
  p.requested_payment = g;
  p.choice = ResourceChoice{1e8, 0.1};
  return p;
}
}  // namespace

TEST_CASE("selection: greedy cheapest prefix under the budget") {
  const auto tasks = tasks_with_budgets({10.0});
  const auto d = select_mus({prop(0, 0, 3), prop(1, 0, 4), prop(2, 0, 5)}, tasks);
  REQUIRE(d.accepted.size() == 2);
  CHECK(d.is_accepted(0));
  CHECK(d.is_accepted(1));
  CHECK_FALSE(d.is_accepted(2));
  CHECK(d.collisions_per_task.at(0) == 1);
}

TEST_CASE("selection: single proposal over budget collides") {
  const auto tasks = tasks_with_budgets({10.0});
  const auto d = select_mus({prop(0, 0, 11)}, tasks);
  CHECK(d.accepted.empty());
  CHECK(d.rejected.size() == 1);
  CHECK(d.collisions_per_task.at(0) == 1);
}

TEST_CASE("selection: no proposals, empty decision") {
  const auto tasks = tasks_with_budgets({5.0});
  const auto d = select_mus({}, tasks);
  CHECK(d.accepted.empty());
  CHECK(d.rejected.empty());
  CHECK(d.collisions_per_task.empty());
}

TEST_CASE("selection: ties break toward the lower unit index") {
  const auto tasks = tasks_with_budgets({5.0});
  const auto d = select_mus({prop(3, 0, 4), prop(1, 0, 4)}, tasks);
  REQUIRE(d.accepted.size() == 1);
  CHECK(d.accepted[0].first == 1);
}

TEST_CASE("selection: duplicate proposer is rejected up front") {
  const auto tasks = tasks_with_budgets({5.0, 5.0});
  CHECK_THROWS_AS(select_mus({prop(0, 0, 1), prop(0, 1, 1)}, tasks), std::invalid_argument);
}

TEST_CASE("selection matches the subset-enumeration oracle") {
  RngStream rng(51, "select-oracle");
  for (int iter = 0; iter < 300; ++iter) {
    const int n_props = 1 + rng.uniform_int(10);
    const double budget = rng.uniform(1, 20);
    std::vector<Proposal> proposals;
    std::vector<double> prices;
    std::vector<int> mus;
    for (int i = 0; i < n_props; ++i) {
      const double g = rng.uniform_int(2) == 0 ? rng.uniform(0.5, 8)
                                               : 1.0 + rng.uniform_int(6);  // force some ties
      proposals.push_back(prop(i, 0, g));
      prices.push_back(g);
      mus.push_back(i);
    }
    const auto tasks = tasks_with_budgets({budget});
    const auto d = select_mus(proposals, tasks);

    const auto oracle = oracles::select_oracle(prices, mus, budget);
    std::vector<int> got;
    for (const auto& [k, n] : d.accepted) got.push_back(k);
    std::sort(got.begin(), got.end());
    // same cardinality and same total price as the enumerated optimum
    REQUIRE(got.size() == oracle.accepted.size());
    double got_sum = 0, oracle_sum = 0;
    for (int k : got) got_sum += prices[k];
    for (int i : oracle.accepted) oracle_sum += prices[i];
    CHECK_THAT(got_sum, WithinRel(oracle_sum, 1e-12));
    CHECK(got_sum <= budget * (1 + 1e-12));
    // accounting identity
    int acc = 0;
    for (const auto& [n, c] : d.collisions_per_task) acc += c;
    CHECK(acc + static_cast<int>(d.accepted.size()) == n_props);
  }
}

TEST_CASE("adjudication: plan that fits succeeds when conditions match the plan") {
  ScenarioParams params;
  MuProfile prof;
  TaskSpec task;
  task.result_size_bits = 4e6;
  task.raw_size_bits = 1e8;
  task.complexity = 12;
  task.deadline_s = 9;
  const ResourceChoice rc{3e8, 0.1};
  const double gain = 1e-8;
  const SensingDraw sensing{0.5, 0.1};
  const auto r = adjudicate_attempt(task, prof, rc, gain, sensing, 8.0, params);
  CHECK(r.outcome == Outcome::Success);
  CHECK(r.consumed.total_time_s() <= task.deadline_s);
  CHECK(r.consumed.total_energy_j() <= 8.0);
}

TEST_CASE("adjudication: vanishing channel means a deadline miss") {
  ScenarioParams params;
  MuProfile prof;
  TaskSpec task;
  task.result_size_bits = 4e6;
  task.raw_size_bits = 1e8;
  task.complexity = 12;
  task.deadline_s = 9;
  const auto r = adjudicate_attempt(task, prof, ResourceChoice{3e8, 0.1}, 1e-16,
                                    SensingDraw{0.5, 0.1}, 8.0, params);
  CHECK(r.outcome == Outcome::DeadlineMiss);
  // the attempt still burned sensing and processing energy
  CHECK(r.consumed.e_sense_j > 0);
  CHECK(r.consumed.e_compute_j > 0);
}

TEST_CASE("adjudication: battery below sensing energy is an energy shortfall") {
  ScenarioParams params;
  MuProfile prof;
  TaskSpec task;
  task.result_size_bits = 4e6;
  task.raw_size_bits = 1e8;
  task.complexity = 12;
  task.deadline_s = 9;
  const auto r = adjudicate_attempt(task, prof, ResourceChoice{3e8, 0.1}, 1e-8,
                                    SensingDraw{0.5, 0.1}, 0.01, params);
  CHECK(r.outcome == Outcome::EnergyShortfall);
  CHECK(r.consumed.total_energy_j() <= 0.01 + 1e-12);
}

TEST_CASE("adjudication never spends more than the battery or the deadline") {
  ScenarioParams params;
  MuProfile prof;
  RngStream rng(52, "adj-prop");
  for (int i = 0; i < 500; ++i) {
    TaskSpec task;
    task.result_size_bits = rng.uniform(1e6, 8e6);
    task.raw_size_bits = rng.uniform(2e7, 2e8);
    task.complexity = rng.uniform(10, 15);
    task.deadline_s = rng.uniform(5, 10);
    const ResourceChoice rc{rng.uniform(1e8, 4e8), rng.uniform(0.01, 0.2)};
    const double battery = rng.uniform(0, 8);
    const auto r = adjudicate_attempt(task, prof, rc, std::pow(10.0, rng.uniform(-12, -7)),
                                      SensingDraw{rng.uniform(0.35, 0.65), rng.uniform(0.07, 0.13)},
                                      battery, params);
    CHECK(r.consumed.total_energy_j() <= battery * (1 + 1e-9) + 1e-12);
    CHECK(r.consumed.total_time_s() <= task.deadline_s * (1 + 1e-9));
    if (r.outcome == Outcome::Success) {
      CHECK(r.consumed.t_transmit_s > 0);
    }
  }
}

TEST_CASE("settlement pays the requested amount on success only") {
  const std::vector<Proposal> proposals = {prop(0, 0, 3), prop(1, 0, 4), prop(2, 1, 5)};
  std::map<std::pair<int, int>, Outcome> outcomes;
  outcomes[{0, 0}] = Outcome::DeadlineMiss;
  outcomes[{1, 0}] = Outcome::Success;
  outcomes[{2, 1}] = Outcome::EnergyShortfall;
  const auto payments = settle(outcomes, proposals);
  CHECK(payments.at(0) == 0.0);
  CHECK_THAT(payments.at(1), WithinRel(4.0, 1e-15));
  CHECK(payments.at(2) == 0.0);

  std::map<std::pair<int, int>, Outcome> all_fail;
  all_fail[{0, 0}] = Outcome::DeadlineMiss;
  all_fail[{1, 0}] = Outcome::DeadlineMiss;
  for (const auto& [k, v] : settle(all_fail, proposals)) CHECK(v == 0.0);
}

TEST_CASE("per-unit feedback exposes own flags only") {
  StepRecord rec;
  rec.step = 3;
  rec.proposals = {prop(0, 0, 3), prop(1, 0, 4)};
  rec.decision.accepted = {{0, 0}};
  rec.decision.rejected = {{1, 0}};
  rec.outcomes[{0, 0}] = Outcome::Success;
  rec.outcomes[{1, 0}] = Outcome::NotAssigned;
  rec.payments[0] = 3;
  rec.payments[1] = 0;
  const MuFeedback fb0 = feedback_for(rec, 0);
  CHECK(fb0.proposed);
  CHECK(fb0.accepted);
  CHECK(fb0.payment == 3.0);
  const MuFeedback fb1 = feedback_for(rec, 1);
  CHECK(fb1.proposed);
  CHECK_FALSE(fb1.accepted);
  CHECK(fb1.payment == 0.0);
  const MuFeedback fb2 = feedback_for(rec, 2);
  CHECK_FALSE(fb2.proposed);
}

TEST_CASE("step record survives a JSON round trip") {
  StepRecord rec;
  rec.step = 12;
  rec.proposals = {prop(0, 1, 2.5), prop(3, 1, 7.25)};
  rec.decision.accepted = {{0, 1}};
  rec.decision.rejected = {{3, 1}};
  rec.decision.collisions_per_task[1] = 1;
  TaskLedgerEntry entry;
  entry.task = 1;
  entry.type = 4;
  entry.difficulty = 1.25;
  entry.budget = 12.5;
  entry.completed = true;
  rec.tasks.push_back(entry);
  rec.outcomes[{0, 1}] = Outcome::Success;
  rec.outcomes[{3, 1}] = Outcome::NotAssigned;
  rec.payments[0] = 2.5;
  rec.payments[3] = 0.0;
  EffortBreakdown e;
  e.e_proposal_j = 1e-5;
  e.e_sense_j = 0.05;
  e.e_compute_j = 0.7;
  e.e_transmit_j = 0.02;
  e.t_sense_s = 0.5;
  e.t_compute_s = 4.0;
  e.t_transmit_s = 0.2;
  rec.energies[0] = e;
  rec.harvested[0] = 0.4;
  rec.battery_after[0] = 7.1;
  rec.overflow[0] = 0.0;

  const auto j = to_json(rec);
  const StepRecord back = step_record_from_json(j);
  CHECK(back.step == rec.step);
  CHECK(back.proposals.size() == 2);
  CHECK(back.proposals[1].requested_payment == 7.25);
  CHECK(back.decision.accepted == rec.decision.accepted);
  CHECK(back.tasks[0].completed);
  CHECK(back.outcomes.at({0, 1}) == Outcome::Success);
  CHECK(back.energies.at(0).e_compute_j == 0.7);
  CHECK(to_json(back).dump() == j.dump());
}
