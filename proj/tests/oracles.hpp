#pragma once
// Test-only reference implementations. Everything here is written
// independently of the library code paths it checks: long-double physics,
// naive matrix math, a reference Adam, finite differences, brute-force GAE,
// and a flat-enumeration allocation solver.

#include <cmath>
#include <functional>
#include <vector>

#include "mcsim/baselines.hpp"
#include "mcsim/core.hpp"

namespace oracles {

// --- long-double physics ---

inline long double difficulty_ld(long double m, long double dl, long double xi, long double omega,
                                 long double m_max, long double tau_int) {
  return xi * (m / m_max) + omega * (1.0L - dl / tau_int);
}

inline long double tx_time_ld(long double bits, long double p, long double gain, long double w,
                              long double noise) {
  const long double snr = p * gain / noise;
  return bits / (w * (std::log(1.0L + snr) / std::log(2.0L)));
}

inline long double comp_time_ld(long double bits, long double delta, long double f) {
  return bits * delta / f;
}

inline long double comp_energy_ld(long double bits, long double delta, long double f,
                                  long double eps) {
  return bits * delta * eps * f * f;
}

inline long double battery_ld(long double b, long double spent, long double harv, long double cap) {
  const long double v = b - spent + harv;
  return v < cap ? v : cap;
}

// --- naive dense forward in long double (independent of Mlp internals) ---

inline std::vector<long double> mlp_forward_ld(const std::vector<int>& sizes,
                                               const std::vector<double>& params,
                                               const std::vector<double>& input) {
  std::vector<long double> a(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    std::vector<long double> z(out, 0.0L);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) z[r] += (long double)params[off + (std::size_t)r * in + c] * a[c];
    off += (std::size_t)out * in;
    for (int r = 0; r < out; ++r) z[r] += (long double)params[off + r];
    off += out;
    if (l + 2 < sizes.size())
      for (auto& v : z) v = v > 0 ? v : 0.0L;
    a = std::move(z);
  }
  return a;
}

// --- reference Adam trajectory ---

struct RefAdam {
  std::vector<long double> m, v;
  long long step = 0;
  long double lr, b1 = 0.9L, b2 = 0.999L, eps = 1e-8L;
  explicit RefAdam(std::size_t n, long double lr_) : m(n, 0.0L), v(n, 0.0L), lr(lr_) {}
  void apply(std::vector<long double>& p, const std::vector<long double>& g) {
    ++step;
    const long double c1 = 1.0L - std::pow(b1, (long double)step);
    const long double c2 = 1.0L - std::pow(b2, (long double)step);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

// --- central finite differences over a parameter vector ---

inline std::vector<double> finite_difference(std::vector<double>& params,
                                             const std::function<double()>& eval, double h = 1e-5) {
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = eval();
    params[i] = keep - h;
    const double down = eval();
    params[i] = keep;
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

// --- GAE by its double-sum definition ---

inline std::vector<double> gae_double_sum(const std::vector<double>& rewards,
                                          const std::vector<double>& values,
                                          const std::vector<bool>& done, double bootstrap,
                                          double gamma, double lambda) {
  const int n = (int)rewards.size();
  auto delta = [&](int t) {
    const double next = done[t] ? 0.0 : (t + 1 < n ? values[t + 1] : bootstrap);
    return rewards[t] + gamma * next - values[t];
  };
  std::vector<double> adv(n, 0.0);
  for (int t = 0; t < n; ++t) {
    double coeff = 1.0;
    for (int l = t; l < n; ++l) {
      adv[t] += coeff * delta(l);
      if (done[l]) break;
      coeff *= gamma * lambda;
    }
  }
  return adv;
}

// --- cheapest-prefix selection, rederived by subset enumeration ---
// max cardinality within budget, then min total price, then lexicographic by
// (price, index) order.

struct SelectionOracle {
  std::vector<int> accepted;  // indices into the proposal list
};

inline SelectionOracle select_oracle(const std::vector<double>& prices,
                                     const std::vector<int>& mu_ids, double budget) {
  const int n = (int)prices.size();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (prices[a] != prices[b]) return prices[a] < prices[b];
    return mu_ids[a] < mu_ids[b];
  });
  SelectionOracle best;
  double best_sum = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    double sum = 0;
    std::vector<int> members;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        sum += prices[order[i]];
        members.push_back(order[i]);
      }
    if (sum > budget * (1 + 1e-12)) continue;
    const bool better =
        members.size() > best.accepted.size() ||
        (members.size() == best.accepted.size() && !members.empty() && sum < best_sum - 1e-15);
    if (better) {
      best.accepted = members;
      best_sum = sum;
    }
  }
  // canonical order for comparison
  std::sort(best.accepted.begin(), best.accepted.end());
  return best;
}

// --- flat-enumeration solver for tiny instances ---
// Walks every per-step injective assignment pattern with an odometer; for an
// assigned pair it takes the cheapest deadline-feasible grid level (spending
// more only shrinks the future), rejects plans that overdraw a battery, and
// keeps the best objective.

inline double ota_enumerate(const mcsim::OtaInstance& inst) {
  const int K = inst.num_mus();
  const int T = inst.horizon();

  // cheapest feasible level per (t, k, n), scanned here independently
  struct Opt {
    bool ok = false;
    double energy = 0;
  };
  std::vector<std::vector<std::vector<Opt>>> opts(T);
  for (int t = 0; t < T; ++t) {
    opts[t].assign(K, std::vector<Opt>(inst.tasks[t].size()));
    for (int k = 0; k < K; ++k) {
      for (std::size_t n = 0; n < inst.tasks[t].size(); ++n) {
        const auto& task = inst.tasks[t][n];
        if (!task.roi.contains(inst.location[k][t])) continue;
        for (int fi = 1; fi <= inst.grid_f; ++fi) {
          for (int pi = 1; pi <= inst.grid_p; ++pi) {
            const double f = inst.profiles[k].max_compute_rate_hz * fi / inst.grid_f;
            const double p = inst.profiles[k].max_transmit_power_w * pi / inst.grid_p;
            const double snr = p * inst.channel_gain[k][t] / inst.params.noise_power_w;
            const double rate = inst.params.bandwidth_hz * std::log2(1.0 + snr);
            const double t_total = inst.sensing[k][t].time_s +
                                   task.raw_size_bits * task.complexity / f +
                                   task.result_size_bits / rate;
            if (t_total > task.deadline_s) continue;
            const double e = inst.sensing[k][t].time_s * inst.sensing[k][t].power_w +
                             task.raw_size_bits * task.complexity *
                                 inst.profiles[k].compute_energy_coeff * f * f +
                             task.result_size_bits / rate * p;
            if (!opts[t][k][n].ok || e < opts[t][k][n].energy) opts[t][k][n] = {true, e};
          }
        }
      }
    }
  }

  // all injective patterns per step: pattern[k] in {-1} + task ids
  std::vector<std::vector<std::vector<int>>> patterns(T);
  for (int t = 0; t < T; ++t) {
    const int N = (int)inst.tasks[t].size();
    std::vector<int> cur(K, -1);
    std::function<void(int, unsigned)> rec = [&](int k, unsigned used) {
      if (k == K) {
        patterns[t].push_back(cur);
        return;
      }
      cur[k] = -1;
      rec(k + 1, used);
      for (int n = 0; n < N; ++n) {
        if (used & (1u << n)) continue;
        if (!opts[t][k][n].ok) continue;
        cur[k] = n;
        rec(k + 1, used | (1u << n));
        cur[k] = -1;
      }
    };
    rec(0, 0);
  }

  double best = -1;
  std::vector<int> odo(T, 0);
  for (;;) {
    // evaluate the plan odo
    double value = 0;
    std::vector<double> battery = inst.initial_battery;
    bool valid = true;
    for (int t = 0; t < T && valid; ++t) {
      const auto& pat = patterns[t][odo[t]];
      std::vector<double> spent(K, 0.0);
      for (int k = 0; k < K; ++k) {
        if (pat[k] < 0) continue;
        const auto& o = opts[t][k][pat[k]];
        if (o.energy > battery[k]) {
          valid = false;  // would overdraw: not a lawful plan
          break;
        }
        spent[k] = o.energy;
        value += inst.tasks[t][pat[k]].difficulty;
      }
      if (!valid) break;
      for (int k = 0; k < K; ++k) {
        const double v = battery[k] - spent[k] + inst.harvest[k][t];
        battery[k] = v < inst.profiles[k].battery_capacity_j ? v : inst.profiles[k].battery_capacity_j;
      }
    }
    if (valid && value > best) best = value;
    // odometer
    int pos = 0;
    while (pos < T) {
      if (++odo[pos] < (int)patterns[pos].size()) break;
      odo[pos] = 0;
      ++pos;
    }
    if (pos == T) break;
  }
  return best;
}

}  // namespace oracles
