#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mcsim/environment.hpp"

using namespace mcsim;
using Catch::Matchers::WithinRel;

TEST_CASE("generate_tasks: count, field ranges, budgets") {
  ScenarioParams p;
  RngStream rng(21, "tasks");
  for (int t = 0; t < 200; ++t) {
    const auto tasks = generate_tasks(t, p, rng);
    REQUIRE(tasks.size() == static_cast<std::size_t>(p.tasks_per_step));
    for (const auto& task : tasks) {
      CHECK(task.type >= 0);
      CHECK(task.type < p.num_types);
      CHECK(task.result_size_bits >= p.result_size_min_bits);
      CHECK(task.result_size_bits <= p.result_size_max_bits);
      CHECK(task.raw_size_bits >= p.raw_size_min_bits);
      CHECK(task.raw_size_bits <= p.raw_size_max_bits);
      CHECK(task.raw_size_bits > task.result_size_bits);
      CHECK(task.deadline_s >= p.deadline_min_fraction * p.step_duration_s);
      CHECK(task.deadline_s <= p.step_duration_s);
      CHECK(task.complexity >= p.complexity_min);
      CHECK(task.complexity <= p.complexity_max);
      CHECK_THAT(task.budget, WithinRel(p.budget_coeff * task.difficulty, 1e-12));
      // type index orders result size bands
      auto [lo, hi] = type_size_band(task.type, p);
      CHECK(task.result_size_bits >= lo);
      CHECK(task.result_size_bits <= hi);
    }
  }
}

TEST_CASE("generate_tasks: whole-area probability 1 and seed determinism") {
  ScenarioParams p;
  p.whole_area_probability = 1.0;
  RngStream rng(22, "tasks");
  for (const auto& task : generate_tasks(0, p, rng)) CHECK(task.roi.whole_area);

  ScenarioParams q;
  RngStream a(23, "tasks"), b(23, "tasks");
  const auto ta = generate_tasks(5, q, a);
  const auto tb = generate_tasks(5, q, b);
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].result_size_bits == tb[i].result_size_bits);
    CHECK(ta[i].deadline_s == tb[i].deadline_s);
    CHECK(ta[i].type == tb[i].type);
  }
}

TEST_CASE("mobility: zero speed, displacement bound, determinism") {
  ScenarioParams p;
  {
    ScenarioParams frozen = p;
    frozen.max_speed_mps = 0;
    MuState mu;
    mu.x_m = 700;
    mu.y_m = 300;
    MobilityLeg leg;
    RngStream rng(24, "mob");
    step_mobility(mu, leg, frozen, rng);
    CHECK(mu.x_m == 700.0);
    CHECK(mu.y_m == 300.0);
  }
  {
    MuState mu;
    mu.x_m = 1000;
    mu.y_m = 1000;
    MobilityLeg leg;
    RngStream rng(25, "mob");
    const double bound = p.max_speed_mps * p.step_duration_s + 1e-9;
    for (int t = 0; t < 2000; ++t) {
      const double x0 = mu.x_m, y0 = mu.y_m;
      step_mobility(mu, leg, p, rng);
      CHECK(std::hypot(mu.x_m - x0, mu.y_m - y0) <= bound);
      CHECK(mu.x_m >= 0);
      CHECK(mu.x_m <= p.area_size_m);
      CHECK(mu.y_m >= 0);
      CHECK(mu.y_m <= p.area_size_m);
    }
  }
  {
    MuState a, b;
    a.x_m = b.x_m = 500;
    a.y_m = b.y_m = 500;
    MobilityLeg la, lb;
    RngStream ra(26, "mob"), rb(26, "mob");
    for (int t = 0; t < 50; ++t) {
      step_mobility(a, la, p, ra);
      step_mobility(b, lb, p, rb);
    }
    CHECK(a.x_m == b.x_m);
    CHECK(a.y_m == b.y_m);
  }
}

TEST_CASE("channel: power-law mean, window bound, exact running mean") {
  ScenarioParams p;
  auto mc_mean = [&](double d, std::uint64_t seed) {
    MuState mu;
    RngStream rng(seed, "chan");
    ScenarioParams wide = p;
    wide.channel_window = 1;  // only the newest draw contributes
    double acc = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += sample_channel(mu, d, wide, rng);
    return acc / n;
  };
  const double m100 = mc_mean(100, 31);
  const double m1000 = mc_mean(1000, 32);
  CHECK(std::abs(m100 / std::pow(100.0, -3) - 1.0) < 0.03);
  CHECK(std::abs(m1000 / std::pow(1000.0, -3) - 1.0) < 0.03);
  CHECK(m100 / m1000 > 900.0);
  CHECK(m100 / m1000 < 1100.0);

  MuState mu;
  RngStream rng(33, "chan");
  for (int i = 0; i < 100; ++i) {
    sample_channel(mu, 500, p, rng);
    CHECK(static_cast<int>(mu.channel_history.size()) <= p.channel_window);
    const double mean = std::accumulate(mu.channel_history.begin(), mu.channel_history.end(), 0.0) /
                        mu.channel_history.size();
    CHECK(mu.avg_channel_gain == mean);
    CHECK(mu.avg_channel_gain > 0);
  }
}

TEST_CASE("harvest: range, mean, determinism") {
  ScenarioParams p;
  RngStream rng(34, "harv");
  double acc = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double e = harvest_energy(p, rng);
    CHECK(e >= 0.0);
    CHECK(e <= 0.1 * p.battery_capacity_j);
    acc += e;
  }
  CHECK(std::abs(acc / n / (0.05 * p.battery_capacity_j) - 1.0) < 0.02);

  RngStream a(35, "harv"), b(35, "harv");
  for (int i = 0; i < 100; ++i) CHECK(harvest_energy(p, a) == harvest_energy(p, b));
}

TEST_CASE("sensing draws stay within the truncation band") {
  ScenarioParams p;
  MuProfile prof;
  RngStream rng(36, "sense");
  for (int i = 0; i < 5000; ++i) {
    const SensingDraw d = sample_sensing(prof, p, rng);
    CHECK(d.time_s >= 0.7 * prof.mean_sensing_time_s - 1e-12);
    CHECK(d.time_s <= 1.3 * prof.mean_sensing_time_s + 1e-12);
    CHECK(d.power_w >= 0.7 * prof.mean_sensing_power_w - 1e-12);
    CHECK(d.power_w <= 1.3 * prof.mean_sensing_power_w + 1e-12);
  }
}

TEST_CASE("world: identical seeds give identical trajectories") {
  ScenarioParams p;
  p.num_mus = 3;
  WorldState wa = make_world(99, p, 3);
  WorldState wb = make_world(99, p, 3);
  for (int t = 0; t < 20; ++t) {
    for (int k = 0; k < 3; ++k) {
      CHECK(sample_channel(wa.mus[k], 500, p, wa.channel_streams[k]) ==
            sample_channel(wb.mus[k], 500, p, wb.channel_streams[k]));
      CHECK(harvest_energy(p, wa.harvest_streams[k]) == harvest_energy(p, wb.harvest_streams[k]));
      step_mobility(wa.mus[k], wa.mobility[k], p, wa.mobility_streams[k]);
      step_mobility(wb.mus[k], wb.mobility[k], p, wb.mobility_streams[k]);
      CHECK(wa.mus[k].x_m == wb.mus[k].x_m);
    }
    const auto ta = generate_tasks(t, p, wa.task_stream);
    const auto tb = generate_tasks(t, p, wb.task_stream);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta[i].result_size_bits == tb[i].result_size_bits);
  }
}

TEST_CASE("world: adding a unit does not disturb existing streams") {
  ScenarioParams p;
  p.num_mus = 2;
  WorldState wa = make_world(77, p, 2);
  WorldState wb = make_world(77, p, 2);
  add_mu(wb);  // third unit joins in world b only
  for (int t = 0; t < 20; ++t) {
    for (int k = 0; k < 2; ++k) {
      CHECK(harvest_energy(p, wa.harvest_streams[k]) == harvest_energy(p, wb.harvest_streams[k]));
      CHECK(sample_channel(wa.mus[k], 400, p, wa.channel_streams[k]) ==
            sample_channel(wb.mus[k], 400, p, wb.channel_streams[k]));
    }
  }
}

namespace {
std::filesystem::path temp_csv(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream os(path);
  os << content;
  return path;
}
}  // namespace

TEST_CASE("dataset: quantile buckets, ties by file order") {
  std::string csv = "external_id,x_m,y_m,reward,type_label\n";
  for (int i = 0; i < 10; ++i)
    csv += "job" + std::to_string(i) + ",100,100,5.0,foo\n";  // all equal rewards
  const auto path = temp_csv("mcsim_ties.csv", csv);
  ScenarioParams p;
  RngStream rng(41, "ds");
  const auto tasks = load_dataset_tasks(path.string(), 10, p, rng);
  REQUIRE(tasks.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(tasks[i].type == i);  // one per bucket, file order
}

TEST_CASE("dataset: monotone rewards give strictly increasing bucket means") {
  std::string csv = "external_id,x_m,y_m,reward,type_label\n";
  for (int i = 1; i <= 100; ++i)
    csv += "job" + std::to_string(i) + "," + std::to_string(i * 3.0) + ",50," + std::to_string(i) +
           ",bar\n";
  const auto path = temp_csv("mcsim_mono.csv", csv);
  ScenarioParams p;
  RngStream rng(42, "ds");
  const auto tasks = load_dataset_tasks(path.string(), 10, p, rng);
  REQUIRE(tasks.size() == 100);
  std::vector<double> sum(10, 0.0);
  std::vector<int> cnt(10, 0);
  for (const auto& t : tasks) {
    sum[t.type] += t.budget;
    cnt[t.type]++;
  }
  for (int c = 0; c < 10; ++c) CHECK(cnt[c] == 10);
  for (int c = 1; c < 10; ++c) CHECK(sum[c] / cnt[c] > sum[c - 1] / cnt[c - 1]);
  // arrival order preserved: budgets appear in file order
  for (int i = 0; i < 100; ++i) CHECK_THAT(tasks[i].budget, WithinRel(i + 1.0, 1e-12));
}

TEST_CASE("dataset: malformed rows and empty files are named errors") {
  ScenarioParams p;
  RngStream rng(43, "ds");
  const auto bad = temp_csv("mcsim_bad.csv",
                            "external_id,x_m,y_m,reward,type_label\n"
                            "job0,1.0,2.0,3.0,ok\n"
                            "job1,1.0,not_a_number,3.0,broken\n");
  try {
    load_dataset_tasks(bad.string(), 10, p, rng);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  const auto empty = temp_csv("mcsim_empty.csv", "external_id,x_m,y_m,reward,type_label\n");
  CHECK_THROWS_AS(load_dataset_tasks(empty.string(), 10, p, rng), std::runtime_error);
  const auto noheader = temp_csv("mcsim_nohdr.csv", "job0,1,2,3,ok\n");
  CHECK_THROWS_AS(load_dataset_tasks(noheader.string(), 10, p, rng), std::runtime_error);
}

TEST_CASE("surrogate dataset: loads back with increasing budgets per type") {
  ScenarioParams p;
  const auto path = std::filesystem::temp_directory_path() / "mcsim_surrogate.csv";
  write_surrogate_dataset(path.string(), 500, 7, p);
  RngStream rng(44, "ds");
  const auto tasks = load_dataset_tasks(path.string(), p.num_types, p, rng);
  REQUIRE(tasks.size() == 500);
  std::vector<double> sum(p.num_types, 0.0);
  std::vector<int> cnt(p.num_types, 0);
  for (const auto& t : tasks) {
    sum[t.type] += t.budget;
    cnt[t.type]++;
  }
  for (int c = 0; c < p.num_types; ++c) CHECK(cnt[c] >= 40);
  for (int c = 1; c < p.num_types; ++c) CHECK(sum[c] / cnt[c] > sum[c - 1] / cnt[c - 1]);
}
