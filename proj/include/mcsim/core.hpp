#pragma once
// Domain types and execution physics for the crowdsensing market: task
// difficulty and budgets, execution time and energy, payment requests,
// battery dynamics, and region eligibility. Everything here is pure and
// reentrant.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcsim {

struct GridCell {
  int i = 0;  // row
  int j = 0;  // column
  bool operator==(const GridCell&) const = default;
};

// Closed rectangle of grid cells, or the whole target area. Boundary cells
// are inside.
struct Region {
  bool whole_area = true;
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;  // inclusive bounds

  static Region whole() { return Region{}; }

  static Region rect(int i0, int j0, int i1, int j1) {
    if (i1 < i0 || j1 < j0) throw std::invalid_argument("Region::rect: empty rectangle");
    Region r;
    r.whole_area = false;
    r.i0 = i0;
    r.j0 = j0;
    r.i1 = i1;
    r.j1 = j1;
    return r;
  }

  bool contains(GridCell c) const {
    return whole_area || (c.i >= i0 && c.i <= i1 && c.j >= j0 && c.j <= j1);
  }
};

struct TaskType {
  int id = 0;
  double mean_result_size_bits = 0;
  std::string label;
};

struct TaskSpec {
  int task_index = 0;          // n
  int step = 0;                // t
  double result_size_bits = 0; // size after processing, transmitted back
  double raw_size_bits = 0;    // size of the sensed data before processing
  double deadline_s = 0;
  Region roi;
  int type = 0;
  double complexity = 0;       // CPU cycles per raw bit
  double difficulty = 0;
  double budget = 0;           // monetary units, budget_coeff * difficulty
};

struct MuProfile {
  int mu_index = 0;
  double battery_capacity_j = 8.0;
  double mean_sensing_time_s = 0.5;
  double mean_sensing_power_w = 0.1;
  double max_transmit_power_w = 0.2;
  double max_compute_rate_hz = 4.0e8;
  double compute_energy_coeff = 1.0e-26;  // J / (cycle * Hz^2)
};

struct MuState {
  double battery_j = 0;
  double x_m = 0;
  double y_m = 0;
  GridCell cell;
  std::vector<double> channel_history;  // bounded window of past power gains
  double avg_channel_gain = 0;          // mean of the window, 0 until first sample
};

struct SensingDraw {
  double time_s = 0;
  double power_w = 0;
};

// An execution plan: processing rate and transmit power. `checked` enforces
// the box constraints at construction time.
struct ResourceChoice {
  double compute_rate_hz = 0;
  double transmit_power_w = 0;

  static ResourceChoice checked(double f_hz, double p_w, const MuProfile& profile) {
    if (!(f_hz > 0) || f_hz > profile.max_compute_rate_hz)
      throw std::domain_error("ResourceChoice: compute rate outside (0, f_max]");
    if (p_w < 0 || p_w > profile.max_transmit_power_w)
      throw std::domain_error("ResourceChoice: transmit power outside [0, p_max]");
    return ResourceChoice{f_hz, p_w};
  }
};

struct EffortBreakdown {
  double e_proposal_j = 0;
  double e_sense_j = 0;
  double e_compute_j = 0;
  double e_transmit_j = 0;
  double t_sense_s = 0;
  double t_compute_s = 0;
  double t_transmit_s = 0;

  double total_energy_j() const { return e_proposal_j + e_sense_j + e_compute_j + e_transmit_j; }
  double total_time_s() const { return t_sense_s + t_compute_s + t_transmit_s; }
};

// Scenario-level constants. Defaults give the baseline synthetic setup; the
// task complexity band is calibrated so that a median task costs roughly a
// tenth of the battery at mid compute rates.
struct ScenarioParams {
  // time
  int horizon_steps = 1000;       // T
  double step_duration_s = 10.0;  // tau_int

  // population
  int num_mus = 5;        // K
  int tasks_per_step = 5; // N
  int num_types = 10;     // C

  // radio
  double bandwidth_hz = 1.0e6;    // W
  double noise_power_w = 1.0e-16; // sigma^2
  double pathloss_exponent = 3.0;
  int channel_window = 20;

  // economy
  double difficulty_size_weight = 1.0;      // xi
  double difficulty_deadline_weight = 1.0;  // omega
  double budget_coeff = 10.0;               // eta
  double payment_coeff = 5.0;               // kappa, monetary units per joule
  double max_harvest_fraction = 0.1;        // of B_max per step

  // tasks
  double result_size_min_bits = 1.0e6;
  double result_size_max_bits = 8.0e6;
  double raw_size_min_bits = 20.0e6;
  double raw_size_max_bits = 200.0e6;
  double complexity_min = 10.0;  // cycles per raw bit
  double complexity_max = 15.0;
  double deadline_min_fraction = 0.5;  // of tau_int
  double whole_area_probability = 0.5;
  double roi_fraction_min = 0.05;
  double roi_fraction_max = 0.25;

  // area: square grid, platform antenna at the center
  double area_size_m = 2000.0;
  int grid_rows = 100;
  int grid_cols = 100;
  double min_mcsp_distance_m = 100.0;
  double max_mcsp_distance_m = 1000.0;
  double max_speed_mps = 10.0 / 3.6;  // 10 km/h

  // unit hardware
  double battery_capacity_j = 8.0;
  double initial_battery_fraction = 1.0;
  double mean_sensing_time_s = 0.5;
  double mean_sensing_power_w = 0.1;
  double sensing_sigma_fraction = 0.1;  // sigma = fraction * mean, truncated at +-3 sigma
  double max_transmit_power_w = 0.2;
  double compute_rate_min_hz = 2.0e8;
  double compute_rate_max_hz = 4.0e8;
  double compute_energy_coeff = 1.0e-26;

  // proposal message
  double proposal_size_bits = 1000.0;  // M_p

  double cell_width_m() const { return area_size_m / grid_cols; }
  double cell_height_m() const { return area_size_m / grid_rows; }
  double mcsp_x_m() const { return area_size_m / 2; }
  double mcsp_y_m() const { return area_size_m / 2; }
};

struct EnergyCausalityError : std::logic_error {
  using std::logic_error::logic_error;
};

// Difficulty from normalized result size and deadline tightness. The
// per-unit location factor is a separate predicate (`is_eligible`), so that
// the budget can be derived before any unit is known.
inline double compute_difficulty(double result_size_bits, double deadline_s,
                                 const ScenarioParams& params, double max_result_size_bits) {
  if (!(result_size_bits > 0) || result_size_bits > max_result_size_bits)
    throw std::domain_error("compute_difficulty: result size outside (0, M_max]");
  if (!(deadline_s > 0) || deadline_s > params.step_duration_s)
    throw std::domain_error("compute_difficulty: deadline outside (0, tau_int]");
  return params.difficulty_size_weight * (result_size_bits / max_result_size_bits) +
         params.difficulty_deadline_weight * (1.0 - deadline_s / params.step_duration_s);
}

inline double compute_budget(double difficulty, double budget_coeff) {
  if (difficulty < 0) throw std::domain_error("compute_budget: negative difficulty");
  if (!(budget_coeff > 0)) throw std::domain_error("compute_budget: budget coefficient must be positive");
  return budget_coeff * difficulty;
}

// Time to push `size_bits` through the uplink at transmit power `p_w` and
// power gain `gain`. Zero power means zero rate, so +infinity.
inline double transmission_time(double size_bits, double p_w, double gain, double bandwidth_hz,
                                double noise_power_w) {
  if (!(bandwidth_hz > 0)) throw std::domain_error("transmission_time: bandwidth must be positive");
  if (!(noise_power_w > 0)) throw std::domain_error("transmission_time: noise power must be positive");
  if (p_w < 0) throw std::domain_error("transmission_time: negative transmit power");
  if (!(size_bits > 0)) return 0.0;
  const double snr = p_w * gain / noise_power_w;
  if (snr <= 0) return std::numeric_limits<double>::infinity();
  const double rate = bandwidth_hz * std::log2(1.0 + snr);
  return size_bits / rate;
}

inline double computing_time(double raw_size_bits, double cycles_per_bit, double compute_rate_hz) {
  if (!(compute_rate_hz > 0)) throw std::domain_error("computing_time: compute rate must be positive");
  if (raw_size_bits <= 0 || cycles_per_bit <= 0) return 0.0;
  return raw_size_bits * cycles_per_bit / compute_rate_hz;
}

// Dynamic-power processing cost: energy per cycle scales with the square of
// the clock rate.
inline double compute_energy(double raw_size_bits, double cycles_per_bit, double compute_rate_hz,
                             double compute_energy_coeff) {
  if (raw_size_bits <= 0 || cycles_per_bit <= 0) return 0.0;
  return raw_size_bits * cycles_per_bit * compute_energy_coeff * compute_rate_hz * compute_rate_hz;
}

inline double compute_power_w(double compute_rate_hz, double compute_energy_coeff) {
  return compute_energy_coeff * compute_rate_hz * compute_rate_hz * compute_rate_hz;
}

// Full effort of one attempt: proposal uplink, sensing, processing,
// result uplink. `gain` is the channel power gain the attempt experiences.
inline EffortBreakdown total_effort(const TaskSpec& task, const MuProfile& profile,
                                    const ResourceChoice& choice, double gain,
                                    const SensingDraw& sensing, const ScenarioParams& params) {
  if (!(sensing.time_s >= 0) || !(sensing.power_w >= 0))
    throw std::domain_error("total_effort: negative sensing draw");
  EffortBreakdown e;
  const double p = choice.transmit_power_w;
  if (p > 0) {
    e.e_proposal_j =
        transmission_time(params.proposal_size_bits, p, gain, params.bandwidth_hz, params.noise_power_w) * p;
  }
  e.t_sense_s = sensing.time_s;
  e.e_sense_j = sensing.time_s * sensing.power_w;
  e.t_compute_s = computing_time(task.raw_size_bits, task.complexity, choice.compute_rate_hz);
  e.e_compute_j =
      compute_energy(task.raw_size_bits, task.complexity, choice.compute_rate_hz, profile.compute_energy_coeff);
  e.t_transmit_s =
      transmission_time(task.result_size_bits, p, gain, params.bandwidth_hz, params.noise_power_w);
  e.e_transmit_j = p > 0 ? e.t_transmit_s * p : 0.0;
  return e;
}

inline double payment_request(const EffortBreakdown& effort, double payment_coeff) {
  if (!(payment_coeff > 0)) throw std::domain_error("payment_request: payment coefficient must be positive");
  return payment_coeff * effort.total_energy_j();
}

// End-of-step battery update. Spending more than the stored charge is a
// causality violation and aborts the simulation.
inline double battery_update(double battery_j, double spent_j, double harvested_j,
                             double battery_capacity_j) {
  if (battery_j < 0 || battery_j > battery_capacity_j * (1.0 + 1e-12))
    throw std::domain_error("battery_update: battery outside [0, B_max]");
  if (spent_j < 0) throw std::domain_error("battery_update: negative spend");
  if (harvested_j < 0) throw std::domain_error("battery_update: negative harvest");
  if (spent_j > battery_j + 1e-12 * battery_capacity_j)
    throw EnergyCausalityError("battery_update: spent more energy than stored");
  const double after_spend = std::max(0.0, battery_j - spent_j);
  return std::min(battery_capacity_j, after_spend + harvested_j);
}

inline bool is_eligible(GridCell location, const Region& roi) { return roi.contains(location); }

}  // namespace mcsim
