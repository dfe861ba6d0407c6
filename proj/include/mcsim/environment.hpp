#pragma once
// World state and its stochastic processes: task generation, unit mobility,
// channel realization, energy harvesting, plus dataset ingestion. Each
// process draws from its own named stream per entity.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcsim/core.hpp"
#include "mcsim/rng.hpp"

namespace mcsim {

struct MobilityLeg {
  double wp_x = 0;
  double wp_y = 0;
  double speed_mps = 0;
  bool active = false;
};

struct WorldState {
  std::uint64_t seed = 0;
  int step = 0;
  ScenarioParams params;
  std::vector<TaskSpec> active_tasks;
  std::vector<MuProfile> profiles;
  std::vector<MuState> mus;
  std::vector<MobilityLeg> mobility;
  std::vector<bool> present;

  RngStream task_stream;
  std::vector<RngStream> mobility_streams;
  std::vector<RngStream> channel_streams;
  std::vector<RngStream> harvest_streams;
  std::vector<RngStream> sensing_streams;
  RngStream churn_stream;
};

inline GridCell cell_of(double x_m, double y_m, const ScenarioParams& p) {
  int i = static_cast<int>(y_m / p.cell_height_m());
  int j = static_cast<int>(x_m / p.cell_width_m());
  i = std::clamp(i, 0, p.grid_rows - 1);
  j = std::clamp(j, 0, p.grid_cols - 1);
  return GridCell{i, j};
}

inline double mcsp_distance_m(double x_m, double y_m, const ScenarioParams& p) {
  const double d = std::hypot(x_m - p.mcsp_x_m(), y_m - p.mcsp_y_m());
  return std::clamp(d, p.min_mcsp_distance_m, p.max_mcsp_distance_m);
}

// Result sizes are partitioned into `num_types` contiguous bands so that the
// type index orders the mean size: type 0 smallest, type C-1 largest.
inline std::pair<double, double> type_size_band(int type, const ScenarioParams& p) {
  const double width = (p.result_size_max_bits - p.result_size_min_bits) / p.num_types;
  return {p.result_size_min_bits + type * width, p.result_size_min_bits + (type + 1) * width};
}

inline std::vector<TaskType> make_task_types(const ScenarioParams& p) {
  std::vector<TaskType> types;
  types.reserve(p.num_types);
  for (int c = 0; c < p.num_types; ++c) {
    auto [lo, hi] = type_size_band(c, p);
    types.push_back(TaskType{c, 0.5 * (lo + hi), "type" + std::to_string(c)});
  }
  return types;
}

inline Region random_roi(const ScenarioParams& p, RngStream& rng) {
  if (rng.uniform01() < p.whole_area_probability) return Region::whole();
  const double fraction = rng.uniform(p.roi_fraction_min, p.roi_fraction_max);
  const double cells = fraction * p.grid_rows * p.grid_cols;
  const double aspect = rng.uniform(0.5, 2.0);
  int w = std::clamp(static_cast<int>(std::lround(std::sqrt(cells * aspect))), 1, p.grid_cols);
  int h = std::clamp(static_cast<int>(std::lround(cells / w)), 1, p.grid_rows);
  const int i0 = rng.uniform_int(p.grid_rows - h + 1);
  const int j0 = rng.uniform_int(p.grid_cols - w + 1);
  return Region::rect(i0, j0, i0 + h - 1, j0 + w - 1);
}

inline std::vector<TaskSpec> generate_tasks(int step, const ScenarioParams& p, RngStream& rng) {
  std::vector<TaskSpec> tasks;
  tasks.reserve(p.tasks_per_step);
  for (int n = 0; n < p.tasks_per_step; ++n) {
    TaskSpec t;
    t.task_index = n;
    t.step = step;
    t.type = rng.uniform_int(p.num_types);
    auto [lo, hi] = type_size_band(t.type, p);
    t.result_size_bits = rng.uniform(lo, hi);
    t.raw_size_bits = rng.uniform(p.raw_size_min_bits, p.raw_size_max_bits);
    t.deadline_s = rng.uniform(p.deadline_min_fraction * p.step_duration_s, p.step_duration_s);
    t.complexity = rng.uniform(p.complexity_min, p.complexity_max);
    t.roi = random_roi(p, rng);
    t.difficulty = compute_difficulty(t.result_size_bits, t.deadline_s, p, p.result_size_max_bits);
    t.budget = compute_budget(t.difficulty, p.budget_coeff);
    tasks.push_back(t);
  }
  return tasks;
}

// Random-waypoint walk on the area. Per-step displacement never exceeds
// max_speed * step duration; positions reflect at the boundary.
inline void step_mobility(MuState& mu, MobilityLeg& leg, const ScenarioParams& p, RngStream& rng) {
  if (p.max_speed_mps <= 0) return;
  if (!leg.active) {
    leg.wp_x = rng.uniform(0.0, p.area_size_m);
    leg.wp_y = rng.uniform(0.0, p.area_size_m);
    leg.speed_mps = rng.uniform(0.1, 1.0) * p.max_speed_mps;
    leg.active = true;
  }
  const double dx = leg.wp_x - mu.x_m;
  const double dy = leg.wp_y - mu.y_m;
  const double dist = std::hypot(dx, dy);
  const double reach = leg.speed_mps * p.step_duration_s;
  if (dist <= reach) {
    mu.x_m = leg.wp_x;
    mu.y_m = leg.wp_y;
    leg.active = false;
  } else {
    mu.x_m += dx / dist * reach;
    mu.y_m += dy / dist * reach;
  }
  auto reflect = [](double v, double size) {
    if (v < 0) return -v;
    if (v > size) return 2 * size - v;
    return v;
  };
  mu.x_m = reflect(mu.x_m, p.area_size_m);
  mu.y_m = reflect(mu.y_m, p.area_size_m);
  mu.cell = cell_of(mu.x_m, mu.y_m, p);
}

// Draws the step's channel power gain (path loss times an Exp(1) fading
// factor), appends it to the bounded history window and refreshes the mean.
inline double sample_channel(MuState& mu, double distance_m, const ScenarioParams& p, RngStream& rng) {
  const double gain = std::pow(distance_m, -p.pathloss_exponent) * rng.exponential(1.0);
  mu.channel_history.push_back(gain);
  if (static_cast<int>(mu.channel_history.size()) > p.channel_window)
    mu.channel_history.erase(mu.channel_history.begin());
  mu.avg_channel_gain =
      std::accumulate(mu.channel_history.begin(), mu.channel_history.end(), 0.0) /
      static_cast<double>(mu.channel_history.size());
  return gain;
}

inline double harvest_energy(const ScenarioParams& p, RngStream& rng) {
  return rng.uniform(0.0, p.max_harvest_fraction * p.battery_capacity_j);
}

inline SensingDraw sample_sensing(const MuProfile& profile, const ScenarioParams& p, RngStream& rng) {
  auto draw = [&](double mean) {
    const double sigma = p.sensing_sigma_fraction * mean;
    return rng.truncated_normal(mean, sigma, std::max(0.0, mean - 3 * sigma), mean + 3 * sigma);
  };
  return SensingDraw{draw(profile.mean_sensing_time_s), draw(profile.mean_sensing_power_w)};
}

// Allocates streams and initial state for one unit. New units get fresh
// streams keyed by their own index, so existing units' draws are untouched.
inline void add_mu(WorldState& w) {
  const int k = static_cast<int>(w.profiles.size());
  RngStream init(w.seed, "mu-init", static_cast<std::uint64_t>(k));
  MuProfile prof;
  prof.mu_index = k;
  prof.battery_capacity_j = w.params.battery_capacity_j;
  prof.mean_sensing_time_s = w.params.mean_sensing_time_s;
  prof.mean_sensing_power_w = w.params.mean_sensing_power_w;
  prof.max_transmit_power_w = w.params.max_transmit_power_w;
  prof.max_compute_rate_hz = init.uniform(w.params.compute_rate_min_hz, w.params.compute_rate_max_hz);
  prof.compute_energy_coeff = w.params.compute_energy_coeff;

  MuState mu;
  mu.battery_j = w.params.initial_battery_fraction * prof.battery_capacity_j;
  mu.x_m = init.uniform(0.0, w.params.area_size_m);
  mu.y_m = init.uniform(0.0, w.params.area_size_m);
  mu.cell = cell_of(mu.x_m, mu.y_m, w.params);

  w.profiles.push_back(prof);
  w.mus.push_back(mu);
  w.mobility.push_back(MobilityLeg{});
  w.present.push_back(true);
  w.mobility_streams.emplace_back(w.seed, "mobility", k);
  w.channel_streams.emplace_back(w.seed, "channel", k);
  w.harvest_streams.emplace_back(w.seed, "harvest", k);
  w.sensing_streams.emplace_back(w.seed, "sensing", k);

  // one association-time channel measurement so the average gain is defined
  // before the first decision
  sample_channel(w.mus[k], mcsp_distance_m(mu.x_m, mu.y_m, w.params), w.params, w.channel_streams[k]);
}

inline WorldState make_world(std::uint64_t seed, const ScenarioParams& params, int num_mus) {
  WorldState w;
  w.seed = seed;
  w.params = params;
  w.task_stream = RngStream(seed, "tasks");
  w.churn_stream = RngStream(seed, "churn");
  for (int k = 0; k < num_mus; ++k) add_mu(w);
  return w;
}

// ---------------------------------------------------------------------------
// Dataset ingestion. CSV schema (header required):
//   external_id,x_m,y_m,reward,type_label[,deadline_s]
// UTF-8, '.' decimal separator, no quoting.

struct DatasetTask {
  std::string external_id;
  double x_m = 0;
  double y_m = 0;
  double reward = 0;
  std::string type_label;
  std::optional<double> deadline_s;
};

inline std::vector<DatasetTask> parse_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: empty file");
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
  };
  line = strip(line);
  const bool with_deadline = line == "external_id,x_m,y_m,reward,type_label,deadline_s";
  if (!with_deadline && line != "external_id,x_m,y_m,reward,type_label")
    throw std::runtime_error("dataset: unrecognized header: " + line);

  std::vector<DatasetTask> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::size_t expect = with_deadline ? 6 : 5;
    if (fields.size() != expect)
      throw std::runtime_error("dataset: line " + std::to_string(lineno) + ": expected " +
                               std::to_string(expect) + " fields, got " + std::to_string(fields.size()));
    try {
      DatasetTask t;
      t.external_id = fields[0];
      t.x_m = std::stod(fields[1]);
      t.y_m = std::stod(fields[2]);
      t.reward = std::stod(fields[3]);
      t.type_label = fields[4];
      if (with_deadline) t.deadline_s = std::stod(fields[5]);
      if (t.reward < 0)
        throw std::runtime_error("negative reward");
      rows.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset: line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (rows.empty()) throw std::runtime_error("dataset: no data rows");
  return rows;
}

// Loads a dataset into a task stream ordered by arrival. Tasks are bucketed
// into `bucket_count` equal-population quantile buckets by reward (ties keep
// file order); the bucket becomes the type, the reward becomes the budget.
// Fields the dataset does not carry are drawn like synthetic tasks.
inline std::vector<TaskSpec> load_dataset_tasks(const std::string& path, int bucket_count,
                                                const ScenarioParams& params, RngStream& rng) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  auto rows = parse_dataset_csv(in);

  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].reward < rows[b].reward; });
  std::vector<int> bucket(rows.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    bucket[order[pos]] = static_cast<int>(pos * static_cast<std::size_t>(bucket_count) / order.size());

  double xmin = rows[0].x_m, xmax = rows[0].x_m, ymin = rows[0].y_m, ymax = rows[0].y_m;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.x_m);
    xmax = std::max(xmax, r.x_m);
    ymin = std::min(ymin, r.y_m);
    ymax = std::max(ymax, r.y_m);
  }
  auto map_coord = [](double v, double lo, double hi, double size) {
    if (hi <= lo) return size / 2;
    return (v - lo) / (hi - lo) * size * 0.999;
  };

  std::vector<TaskSpec> tasks;
  tasks.reserve(rows.size());
  for (std::size_t idx = 0; idx < rows.size(); ++idx) {
    const auto& r = rows[idx];
    TaskSpec t;
    t.type = bucket[idx];
    auto [lo, hi] = type_size_band(std::min(t.type, params.num_types - 1), params);
    t.result_size_bits = rng.uniform(lo, hi);
    t.raw_size_bits = rng.uniform(params.raw_size_min_bits, params.raw_size_max_bits);
    t.complexity = rng.uniform(params.complexity_min, params.complexity_max);
    t.deadline_s = r.deadline_s
                       ? std::clamp(*r.deadline_s, params.deadline_min_fraction * params.step_duration_s,
                                    params.step_duration_s)
                       : rng.uniform(params.deadline_min_fraction * params.step_duration_s,
                                     params.step_duration_s);
    t.budget = r.reward;
    t.difficulty = r.reward / params.budget_coeff;

    const double cx = map_coord(r.x_m, xmin, xmax, params.area_size_m);
    const double cy = map_coord(r.y_m, ymin, ymax, params.area_size_m);
    const GridCell center = cell_of(cx, cy, params);
    const double fraction = rng.uniform(params.roi_fraction_min, params.roi_fraction_max);
    const double cells = fraction * params.grid_rows * params.grid_cols;
    const int half_h = std::max(1, static_cast<int>(std::lround(std::sqrt(cells))) / 2);
    const int half_w = half_h;
    t.roi = Region::rect(std::max(0, center.i - half_h), std::max(0, center.j - half_w),
                         std::min(params.grid_rows - 1, center.i + half_h),
                         std::min(params.grid_cols - 1, center.j + half_w));
    tasks.push_back(t);
  }
  return tasks;  // arrival order preserved
}

// Synthetic surrogate with the same shape as the commercial dump this loader
// targets: near-equal type populations, exponentially increasing budget per
// type, non-uniform (bursty) arrival of types.
inline void write_surrogate_dataset(const std::string& path, int n_tasks, std::uint64_t seed,
                                    const ScenarioParams& params) {
  RngStream rng(seed, "surrogate");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("surrogate: cannot open " + path + " for writing");
  out << "external_id,x_m,y_m,reward,type_label\n";
  std::vector<int> remaining(params.num_types, n_tasks / params.num_types);
  for (int i = 0; i < n_tasks % params.num_types; ++i) remaining[i]++;
  int written = 0;
  while (written < n_tasks) {
    int type = rng.uniform_int(params.num_types);
    while (remaining[type] == 0) type = (type + 1) % params.num_types;
    const int burst = std::min(remaining[type], 1 + rng.uniform_int(12));
    for (int b = 0; b < burst; ++b) {
      const double base = 2.0 * std::pow(1.45, type);
      const double reward = base * rng.uniform(0.8, 1.2);
      char id[32];
      std::snprintf(id, sizeof(id), "job%06d", written);
      out << id << ',' << rng.uniform(0.0, params.area_size_m) << ','
          << rng.uniform(0.0, params.area_size_m) << ',' << reward << ",class" << type << "\n";
      ++written;
      --remaining[type];
    }
  }
}

}  // namespace mcsim
