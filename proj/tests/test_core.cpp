#include <catch2/catch_amalgamated.hpp>

#include "mcsim/core.hpp"
#include "mcsim/rng.hpp"
#include "oracles.hpp"

using namespace mcsim;
using Catch::Matchers::WithinRel;

namespace {
ScenarioParams params_with(double xi, double omega) {
  ScenarioParams p;
  p.difficulty_size_weight = xi;
  p.difficulty_deadline_weight = omega;
  return p;
}
}  // namespace

TEST_CASE("difficulty: boundary and midpoint values") {
  ScenarioParams p = params_with(1, 1);
  const double m_max = 8e6;
  CHECK_THAT(compute_difficulty(m_max, p.step_duration_s, p, m_max), WithinRel(1.0, 1e-15));
  CHECK_THAT(compute_difficulty(m_max / 2, p.step_duration_s / 2, p, m_max), WithinRel(1.0, 1e-15));
  // largest result size, half-interval deadline
  CHECK_THAT(compute_difficulty(8e6, 5.0, p, 8e6), WithinRel(1.5, 1e-15));
}

TEST_CASE("difficulty: domain errors") {
  ScenarioParams p = params_with(1, 1);
  CHECK_THROWS_AS(compute_difficulty(9e6, 5.0, p, 8e6), std::domain_error);
  CHECK_THROWS_AS(compute_difficulty(1e6, 11.0, p, 8e6), std::domain_error);
  CHECK_THROWS_AS(compute_difficulty(0, 5.0, p, 8e6), std::domain_error);
}

TEST_CASE("difficulty stays within [0, xi+omega]") {
  RngStream rng(11, "difficulty-prop");
  ScenarioParams p = params_with(1, 1);
  for (int i = 0; i < 2000; ++i) {
    const double m = rng.uniform(1e3, 8e6);
    const double dl = rng.uniform(1e-3, 10.0);
    const double v = compute_difficulty(m, dl, p, 8e6);
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("budget is eta times difficulty") {
  CHECK(compute_budget(0, 10) == 0.0);
  CHECK_THAT(compute_budget(1.5, 10), WithinRel(15.0, 1e-15));
  CHECK_THAT(compute_budget(1.0, 20), WithinRel(20.0, 1e-15));
  CHECK_THROWS_AS(compute_budget(-1, 10), std::domain_error);
  CHECK_THROWS_AS(compute_budget(1, 0), std::domain_error);
}

TEST_CASE("transmission time: unit-SNR case, zero power, fixture") {
  CHECK_THAT(transmission_time(1e6, 1.0, 1e-16, 1e6, 1e-16), WithinRel(1.0, 1e-12));
  CHECK(std::isinf(transmission_time(1e6, 0.0, 1e-8, 1e6, 1e-16)));
  // 1 Mbit over 1 MHz at p=0.2, gain 1e-9, noise 1e-16 (SNR 2e6)
  CHECK_THAT(transmission_time(1e6, 0.2, 1e-9, 1e6, 1e-16),
             WithinRel(0.04777472659184067, 1e-12));
  CHECK_THROWS_AS(transmission_time(1e6, 0.1, 1e-9, 0.0, 1e-16), std::domain_error);
  CHECK_THROWS_AS(transmission_time(1e6, 0.1, 1e-9, 1e6, 0.0), std::domain_error);
}

TEST_CASE("transmission time decreases in power and gain") {
  RngStream rng(12, "tx-mono");
  for (int i = 0; i < 500; ++i) {
    const double bits = rng.uniform(1e5, 1e7);
    const double gain = std::pow(10.0, rng.uniform(-12, -6));
    const double p = rng.uniform(0.01, 0.2);
    const double t0 = transmission_time(bits, p, gain, 1e6, 1e-16);
    CHECK(transmission_time(bits, p * 1.5, gain, 1e6, 1e-16) < t0);
    CHECK(transmission_time(bits, p, gain * 1.5, 1e6, 1e-16) < t0);
  }
}

TEST_CASE("computing time: fixture and proportionality") {
  CHECK_THAT(computing_time(2e7, 200, 4e8), WithinRel(10.0, 1e-15));
  CHECK_THAT(computing_time(4e8, 1.0, 4e8), WithinRel(1.0, 1e-15));
  RngStream rng(13, "comp-prop");
  for (int i = 0; i < 200; ++i) {
    const double bits = rng.uniform(1e6, 1e8);
    const double delta = rng.uniform(1, 300);
    const double f = rng.uniform(1e7, 4e8);
    CHECK_THAT(computing_time(bits, delta, 2 * f), WithinRel(0.5 * computing_time(bits, delta, f), 1e-12));
  }
  CHECK_THROWS_AS(computing_time(1e6, 10, 0), std::domain_error);
}

TEST_CASE("compute energy: quadratic in rate, zero coefficient") {
  const double e1 = compute_energy(1e6, 10, 1e8, 1e-26);
  CHECK_THAT(compute_energy(1e6, 10, 2e8, 1e-26), WithinRel(4 * e1, 1e-12));
  CHECK(compute_energy(1e6, 10, 1e8, 0) == 0.0);
  // 1e9 cycles at 3e8 Hz
  CHECK_THAT(compute_energy(5e6, 200, 3e8, 1e-26), WithinRel(0.9, 1e-12));
}

TEST_CASE("total effort: sensing-only limit and component sum") {
  ScenarioParams p;
  MuProfile prof;
  TaskSpec task;
  task.result_size_bits = 0;  // limit fixture: no workload
  task.raw_size_bits = 0;
  task.complexity = 0;
  const EffortBreakdown e =
      total_effort(task, prof, ResourceChoice{prof.max_compute_rate_hz, 0.0}, 1e-9,
                   SensingDraw{0.5, 0.1}, p);
  CHECK(e.e_proposal_j == 0.0);
  CHECK(e.e_compute_j == 0.0);
  CHECK(e.e_transmit_j == 0.0);
  CHECK_THAT(e.e_sense_j, WithinRel(0.05, 1e-15));
  CHECK_THAT(e.total_energy_j(), WithinRel(e.e_sense_j, 1e-15));

  RngStream rng(14, "effort-sum");
  for (int i = 0; i < 200; ++i) {
    TaskSpec t;
    t.result_size_bits = rng.uniform(1e6, 8e6);
    t.raw_size_bits = rng.uniform(2e7, 2e8);
    t.complexity = rng.uniform(10, 15);
    const ResourceChoice rc{rng.uniform(1e7, 4e8), rng.uniform(0.001, 0.2)};
    const EffortBreakdown b = total_effort(t, prof, rc, std::pow(10.0, rng.uniform(-11, -7)),
                                           SensingDraw{rng.uniform(0.1, 1), rng.uniform(0.01, 0.2)}, p);
    CHECK_THAT(b.total_energy_j(),
               WithinRel(b.e_proposal_j + b.e_sense_j + b.e_compute_j + b.e_transmit_j, 1e-15));
    CHECK_THAT(b.total_time_s(), WithinRel(b.t_sense_s + b.t_compute_s + b.t_transmit_s, 1e-15));
  }
}

TEST_CASE("total effort: frozen golden record") {
  // midpoint task, f=3e8, p=0.1, gain 1e-8, sensing (0.5 s, 0.1 W)
  ScenarioParams p;
  MuProfile prof;
  TaskSpec task;
  task.result_size_bits = 4.5e6;
  task.raw_size_bits = 110e6;
  task.complexity = 12.5;
  const EffortBreakdown e =
      total_effort(task, prof, ResourceChoice{3e8, 0.1}, 1e-8, SensingDraw{0.5, 0.1}, p);
  CHECK_THAT(e.e_proposal_j, WithinRel(4.300428482804699e-06, 1e-12));
  CHECK_THAT(e.t_compute_s, WithinRel(4.5833333333333333, 1e-12));
  CHECK_THAT(e.e_compute_j, WithinRel(1.2375, 1e-12));
  CHECK_THAT(e.t_transmit_s, WithinRel(0.19351928172621145, 1e-12));
  CHECK_THAT(e.e_transmit_j, WithinRel(0.019351928172621145, 1e-12));
  CHECK_THAT(e.total_energy_j(), WithinRel(1.306856228601104, 1e-12));
  CHECK_THAT(e.total_time_s(), WithinRel(5.2768526150595448, 1e-12));
}

TEST_CASE("effort is nondecreasing in sizes and complexity") {
  ScenarioParams p;
  MuProfile prof;
  RngStream rng(15, "effort-mono");
  for (int i = 0; i < 200; ++i) {
    TaskSpec t;
    t.result_size_bits = rng.uniform(1e6, 8e6);
    t.raw_size_bits = rng.uniform(2e7, 2e8);
    t.complexity = rng.uniform(10, 15);
    const ResourceChoice rc{rng.uniform(1e8, 4e8), rng.uniform(0.01, 0.2)};
    const double gain = std::pow(10.0, rng.uniform(-11, -7));
    const SensingDraw s{0.5, 0.1};
    const EffortBreakdown base = total_effort(t, prof, rc, gain, s, p);
    TaskSpec t2 = t;
    t2.result_size_bits *= 1.2;
    t2.raw_size_bits *= 1.3;
    t2.complexity *= 1.1;
    const EffortBreakdown more = total_effort(t2, prof, rc, gain, s, p);
    CHECK(more.total_energy_j() >= base.total_energy_j());
    CHECK(more.total_time_s() >= base.total_time_s());
  }
}

TEST_CASE("payment request: zero, linearity, golden") {
  EffortBreakdown zero;
  CHECK(payment_request(zero, 1.0) == 0.0);
  EffortBreakdown e;
  e.e_sense_j = 0.3;
  e.e_compute_j = 0.5;
  CHECK_THAT(payment_request(e, 4.0), WithinRel(2.0 * payment_request(e, 2.0), 1e-15));
  CHECK_THAT(payment_request(e, 1.0), WithinRel(0.8, 1e-15));
}

TEST_CASE("battery update: arithmetic, clipping, causality") {
  CHECK_THAT(battery_update(5, 1, 0.8, 8), WithinRel(4.8, 1e-15));
  CHECK(battery_update(8, 0, 0.8, 8) == 8.0);
  CHECK_THROWS_AS(battery_update(0.5, 0.6, 0, 8), EnergyCausalityError);
  RngStream rng(16, "battery-prop");
  for (int i = 0; i < 2000; ++i) {
    const double cap = 8;
    const double b = rng.uniform(0, cap);
    const double spent = rng.uniform(0, b);
    const double harv = rng.uniform(0, 0.8);
    const double after = battery_update(b, spent, harv, cap);
    CHECK(after >= 0.0);
    CHECK(after <= cap);
  }
}

TEST_CASE("eligibility: whole area, interior, closed boundary") {
  CHECK(is_eligible(GridCell{13, 87}, Region::whole()));
  const Region r = Region::rect(2, 3, 6, 9);
  CHECK(is_eligible(GridCell{4, 5}, r));
  CHECK(is_eligible(GridCell{2, 3}, r));
  CHECK(is_eligible(GridCell{6, 9}, r));
  CHECK_FALSE(is_eligible(GridCell{1, 5}, r));
  CHECK_FALSE(is_eligible(GridCell{4, 10}, r));
}

TEST_CASE("physics agrees with long-double reference on random inputs") {
  RngStream rng(17, "physics-oracle");
  ScenarioParams p = params_with(1, 1);
  for (int i = 0; i < 1000; ++i) {
    const double m = rng.uniform(1e5, 8e6);
    const double dl = rng.uniform(0.5, 10.0);
    const double v = compute_difficulty(m, dl, p, 8e6);
    const long double vref = oracles::difficulty_ld(m, dl, 1, 1, 8e6, 10);
    CHECK(std::abs((long double)v - vref) <= 1e-12L * std::max(1.0L, std::abs(vref)));

    const double bits = rng.uniform(1e5, 1e7);
    const double pw = rng.uniform(1e-3, 0.2);
    const double gain = std::pow(10.0, rng.uniform(-12, -6));
    const double t = transmission_time(bits, pw, gain, 1e6, 1e-16);
    const long double tref = oracles::tx_time_ld(bits, pw, gain, 1e6, 1e-16);
    CHECK(std::abs((long double)t - tref) <= 1e-12L * std::abs(tref));

    const double raw = rng.uniform(1e6, 2e8);
    const double delta = rng.uniform(1, 300);
    const double f = rng.uniform(1e7, 4e8);
    const long double ctref = oracles::comp_time_ld(raw, delta, f);
    CHECK(std::abs((long double)computing_time(raw, delta, f) - ctref) <= 1e-12L * std::abs(ctref));
    const long double ceref = oracles::comp_energy_ld(raw, delta, f, 1e-26);
    CHECK(std::abs((long double)compute_energy(raw, delta, f, 1e-26) - ceref) <=
          1e-12L * std::abs(ceref));
  }
}
