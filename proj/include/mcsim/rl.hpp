#pragma once
// Per-unit PPO-clip decision maker: observation encoding, a hybrid
// categorical/continuous action head (task choice plus squashed-Gaussian
// resource fractions), GAE, and the clipped-surrogate update driven by the
// dense-net substrate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <vector>

#include <json.hpp>

#include "mcsim/core.hpp"
#include "mcsim/nn.hpp"
#include "mcsim/rng.hpp"

namespace mcsim {

struct AgentHyperparams {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs = 4;
  int batch_steps = 100;
  int minibatch = 64;
  double entropy_coeff = 0.01;
  double value_coeff = 0.5;
  double lr0 = 5e-5;
  double lr_decay = 0.995;  // multiplicative, per training episode
  int hidden = 256;         // two hidden layers of this width
};

inline nlohmann::json to_json(const AgentHyperparams& h) {
  return {{"gamma", h.gamma},         {"gae_lambda", h.gae_lambda},
          {"clip_epsilon", h.clip_epsilon}, {"epochs", h.epochs},
          {"batch_steps", h.batch_steps},   {"minibatch", h.minibatch},
          {"entropy_coeff", h.entropy_coeff}, {"value_coeff", h.value_coeff},
          {"lr0", h.lr0},             {"lr_decay", h.lr_decay},
          {"hidden", h.hidden}};
}

// ---------------------------------------------------------------------------
// Observation: [battery, channel, row, col] ++ per task slot
// [size', deadline', eligible, difficulty', type']. All entries in [0, 1];
// absent slots are zero with eligibility 0.

constexpr int kObsHeader = 4;
constexpr int kObsPerTask = 5;

inline int observation_size(int task_slots) { return kObsHeader + kObsPerTask * task_slots; }

// Channel gains span orders of magnitude; squash through a fixed log window.
inline double normalize_gain(double gain) {
  if (gain <= 0) return 0.0;
  const double lo = -12.0, hi = -4.0;  // log10 of the plausible gain window
  return std::clamp((std::log10(gain) - lo) / (hi - lo), 0.0, 1.0);
}

inline std::vector<double> encode_state(const MuProfile& profile, const MuState& mu,
                                        std::span<const TaskSpec> tasks, int task_slots,
                                        const ScenarioParams& params) {
  if (static_cast<int>(tasks.size()) > task_slots)
    throw std::invalid_argument("encode_state: more tasks than slots");
  std::vector<double> obs(observation_size(task_slots), 0.0);
  obs[0] = std::clamp(mu.battery_j / profile.battery_capacity_j, 0.0, 1.0);
  obs[1] = normalize_gain(mu.avg_channel_gain);
  obs[2] = params.grid_rows > 1 ? static_cast<double>(mu.cell.i) / (params.grid_rows - 1) : 0.0;
  obs[3] = params.grid_cols > 1 ? static_cast<double>(mu.cell.j) / (params.grid_cols - 1) : 0.0;
  const double v_max = params.difficulty_size_weight + params.difficulty_deadline_weight;
  for (std::size_t s = 0; s < tasks.size(); ++s) {
    const TaskSpec& t = tasks[s];
    double* slot = obs.data() + kObsHeader + kObsPerTask * s;
    slot[0] = t.result_size_bits / params.result_size_max_bits;
    slot[1] = t.deadline_s / params.step_duration_s;
    slot[2] = is_eligible(mu.cell, t.roi) ? 1.0 : 0.0;
    slot[3] = v_max > 0 ? t.difficulty / v_max : 0.0;
    slot[4] = static_cast<double>(t.type) / params.num_types;
  }
  return obs;
}

inline bool slot_eligible(std::span<const double> obs, int slot) {
  return obs[kObsHeader + kObsPerTask * slot + 2] > 0.5;
}

// ---------------------------------------------------------------------------
// Action head. Actor output layout: task logits [0..N] (N = abstain), then
// mean_f, mean_p, raw log-std f, raw log-std p. Log-stds are tanh-bounded so
// the density stays smooth everywhere.

constexpr double kLogStdMin = -4.0;
constexpr double kLogStdMax = 1.0;

inline int actor_output_size(int task_slots) { return task_slots + 1 + 4; }

inline double bounded_log_std(double raw) {
  return kLogStdMin + 0.5 * (kLogStdMax - kLogStdMin) * (std::tanh(raw) + 1.0);
}

inline double bounded_log_std_draw(double raw) {  // d(log_std)/d(raw)
  const double t = std::tanh(raw);
  return 0.5 * (kLogStdMax - kLogStdMin) * (1.0 - t * t);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double logit(double fraction) { return std::log(fraction) - std::log1p(-fraction); }

struct ActionDistribution {
  int task_slots = 0;
  std::vector<double> logits;    // raw actor outputs, size N+1
  std::vector<bool> allowed;     // per option, abstain always allowed
  std::vector<double> log_pmf;   // masked log-softmax; -inf where masked
  double mean_f = 0, mean_p = 0;
  double raw_std_f = 0, raw_std_p = 0;
  double log_std_f = 0, log_std_p = 0;
};

inline ActionDistribution action_distribution(const Mlp& actor, std::span<const double> obs,
                                              int task_slots) {
  ActionDistribution d;
  d.task_slots = task_slots;
  const std::vector<double> out = actor.forward(obs);
  d.logits.assign(out.begin(), out.begin() + task_slots + 1);
  d.mean_f = out[task_slots + 1];
  d.mean_p = out[task_slots + 2];
  d.raw_std_f = out[task_slots + 3];
  d.raw_std_p = out[task_slots + 4];
  d.log_std_f = bounded_log_std(d.raw_std_f);
  d.log_std_p = bounded_log_std(d.raw_std_p);

  d.allowed.assign(task_slots + 1, false);
  d.allowed[task_slots] = true;  // abstain
  for (int s = 0; s < task_slots; ++s) d.allowed[s] = slot_eligible(obs, s);

  double max_logit = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= task_slots; ++i)
    if (d.allowed[i]) max_logit = std::max(max_logit, d.logits[i]);
  double z = 0;
  for (int i = 0; i <= task_slots; ++i)
    if (d.allowed[i]) z += std::exp(d.logits[i] - max_logit);
  const double log_z = max_logit + std::log(z);
  d.log_pmf.assign(task_slots + 1, -std::numeric_limits<double>::infinity());
  for (int i = 0; i <= task_slots; ++i)
    if (d.allowed[i]) d.log_pmf[i] = d.logits[i] - log_z;
  return d;
}

struct ActionSample {
  int task_choice = 0;  // == task_slots means abstain
  double compute_fraction = 0.5;
  double power_fraction = 0.5;
  double z_f = 0, z_p = 0;  // pre-squash coordinates, kept for re-evaluation
  double log_prob = 0;
};

inline double gaussian_log_pdf(double z, double mean, double log_std) {
  const double sd = std::exp(log_std);
  const double u = (z - mean) / sd;
  return -0.5 * u * u - log_std - 0.91893853320467274178;  // 0.5*log(2*pi)
}

// Joint log-density of a sample: categorical term plus, when a task is
// chosen, both squashed-Gaussian terms with the change-of-variable
// correction.
inline double action_log_prob(const ActionDistribution& d, const ActionSample& a) {
  double lp = d.log_pmf[a.task_choice];
  if (a.task_choice == d.task_slots) return lp;
  lp += gaussian_log_pdf(a.z_f, d.mean_f, d.log_std_f);
  lp -= std::log(a.compute_fraction * (1.0 - a.compute_fraction));
  lp += gaussian_log_pdf(a.z_p, d.mean_p, d.log_std_p);
  lp -= std::log(a.power_fraction * (1.0 - a.power_fraction));
  return lp;
}

// Masked options can never come out of here: sampling walks the allowed set
// only. Draw count per call is fixed (1 + 2*2 uniforms).
inline ActionSample sample_action(const ActionDistribution& d, RngStream& rng) {
  ActionSample a;
  const double u = rng.uniform01();
  double acc = 0;
  a.task_choice = d.task_slots;
  for (int i = 0; i <= d.task_slots; ++i) {
    if (!d.allowed[i]) continue;
    acc += std::exp(d.log_pmf[i]);
    if (u < acc) {
      a.task_choice = i;
      break;
    }
  }
  const double n_f = rng.normal(0.0, 1.0);
  const double n_p = rng.normal(0.0, 1.0);
  a.z_f = d.mean_f + std::exp(d.log_std_f) * n_f;
  a.z_p = d.mean_p + std::exp(d.log_std_p) * n_p;
  a.compute_fraction = sigmoid(a.z_f);
  a.power_fraction = sigmoid(a.z_p);
  a.log_prob = action_log_prob(d, a);
  return a;
}

inline ActionSample greedy_action(const ActionDistribution& d) {
  ActionSample a;
  double best = -std::numeric_limits<double>::infinity();
  a.task_choice = d.task_slots;
  for (int i = 0; i <= d.task_slots; ++i) {
    if (d.allowed[i] && d.logits[i] > best) {
      best = d.logits[i];
      a.task_choice = i;
    }
  }
  a.z_f = d.mean_f;
  a.z_p = d.mean_p;
  a.compute_fraction = sigmoid(a.z_f);
  a.power_fraction = sigmoid(a.z_p);
  a.log_prob = action_log_prob(d, a);
  return a;
}

// ---------------------------------------------------------------------------
// Trajectories and GAE.

struct Transition {
  std::vector<double> obs;
  ActionSample action;
  double reward = 0;
  double value = 0;
  bool done = false;
};

struct GaeResult {
  std::vector<double> advantages;  // pre-normalization
  std::vector<double> returns;
};

inline GaeResult compute_gae(std::span<const Transition> traj, double bootstrap_value, double gamma,
                             double lambda) {
  if (traj.empty()) throw std::invalid_argument("compute_gae: empty trajectory");
  const int n = static_cast<int>(traj.size());
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double adv = 0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_value = traj[t].done ? 0.0 : (t + 1 < n ? traj[t + 1].value : bootstrap_value);
    const double not_done = traj[t].done ? 0.0 : 1.0;
    const double delta = traj[t].reward + gamma * next_value - traj[t].value;
    adv = delta + gamma * lambda * not_done * adv;
    r.advantages[t] = adv;
    r.returns[t] = adv + traj[t].value;
  }
  return r;
}

// In-place batch normalization; a constant batch is left centered only.
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.empty()) return;
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / adv.size();
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= adv.size();
  const double sd = std::sqrt(var);
  for (double& a : adv) a -= mean;
  if (sd > 1e-12)
    for (double& a : adv) a /= sd;
}

// Clipped surrogate for one sample (the quantity being maximized).
inline double ppo_surrogate(double log_prob_new, double log_prob_old, double advantage,
                            double clip_epsilon) {
  const double ratio = std::exp(log_prob_new - log_prob_old);
  const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

struct PpoDiagnostics {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
  double surrogate = 0;          // mean clipped surrogate before the first update
  double mean_ratio_first = 0;   // mean ratio over the first minibatch before its update
};

// ---------------------------------------------------------------------------
// The agent.

class PpoAgent {
 public:
  PpoAgent(int mu_index, int task_slots, const AgentHyperparams& hp, std::uint64_t seed)
      : mu_index_(mu_index),
        task_slots_(task_slots),
        hp_(hp),
        rng_(seed, "agent", static_cast<std::uint64_t>(mu_index)) {
    RngStream init(seed, "agent-init", static_cast<std::uint64_t>(mu_index));
    const int obs = observation_size(task_slots);
    actor_ = Mlp::he_init({obs, hp.hidden, hp.hidden, actor_output_size(task_slots)}, init);
    critic_ = Mlp::he_init({obs, hp.hidden, hp.hidden, 1}, init);
    opt_actor_ = AdamState(actor_.param_count(), hp.lr0);
    opt_critic_ = AdamState(critic_.param_count(), hp.lr0);
  }

  int mu_index() const { return mu_index_; }
  int task_slots() const { return task_slots_; }
  const AgentHyperparams& hyperparams() const { return hp_; }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }

  ActionSample act(std::span<const double> obs, bool explore) {
    const ActionDistribution d = action_distribution(actor_, obs, task_slots_);
    return explore ? sample_action(d, rng_) : greedy_action(d);
  }

  double value(std::span<const double> obs) const { return critic_.forward(obs)[0]; }

  void store(Transition t) { buffer_.push_back(std::move(t)); }
  bool buffer_full() const { return static_cast<int>(buffer_.size()) >= hp_.batch_steps; }
  std::size_t buffer_size() const { return buffer_.size(); }

  void set_episode(int episode) {
    const double lr = hp_.lr0 * std::pow(hp_.lr_decay, episode);
    opt_actor_.lr = lr;
    opt_critic_.lr = lr;
  }

  ModelParams model() const { return ModelParams{actor_, critic_, model_version_}; }

  void set_model(const ModelParams& mp) {
    if (!mp.actor.same_shape(actor_) || !mp.critic.same_shape(critic_))
      throw std::invalid_argument("PpoAgent: model shape mismatch");
    actor_ = mp.actor;
    critic_ = mp.critic;
    model_version_ = mp.version;
  }

  // One PPO update over the full buffer; clears it.
  PpoDiagnostics update(double bootstrap_value) {
    PpoDiagnostics diag;
    if (buffer_.empty()) return diag;
    GaeResult gae = compute_gae(buffer_, bootstrap_value, hp_.gamma, hp_.gae_lambda);
    std::vector<double> adv = gae.advantages;
    normalize_advantages(adv);

    const int n = static_cast<int>(buffer_.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    int clip_hits = 0, samples_seen = 0;
    bool first_minibatch = true;
    for (int epoch = 0; epoch < hp_.epochs; ++epoch) {
      shuffle(idx);
      for (int start = 0; start < n; start += hp_.minibatch) {
        const int end = std::min(n, start + hp_.minibatch);
        const int mb = end - start;
        std::vector<double> grad_actor(actor_.param_count(), 0.0);
        std::vector<double> grad_critic(critic_.param_count(), 0.0);
        double ratio_sum = 0;
        for (int ii = start; ii < end; ++ii) {
          const Transition& tr = buffer_[idx[ii]];
          const double a_hat = adv[idx[ii]];
          accumulate_sample(tr, a_hat, gae.returns[idx[ii]], mb, grad_actor, grad_critic, diag,
                            ratio_sum, clip_hits);
          ++samples_seen;
        }
        if (first_minibatch) {
          diag.mean_ratio_first = ratio_sum / mb;
          first_minibatch = false;
        }
        adam_step(actor_.params, grad_actor, opt_actor_);
        adam_step(critic_.params, grad_critic, opt_critic_);
      }
    }
    diag.policy_loss /= samples_seen;
    diag.value_loss /= samples_seen;
    diag.entropy /= samples_seen;
    diag.approx_kl /= samples_seen;
    diag.clip_fraction = static_cast<double>(clip_hits) / samples_seen;
    // surrogate of the updated policy against the behavior policy
    for (int i = 0; i < n; ++i) {
      const ActionDistribution d = action_distribution(actor_, buffer_[i].obs, task_slots_);
      diag.surrogate += ppo_surrogate(action_log_prob(d, buffer_[i].action),
                                      buffer_[i].action.log_prob, adv[i], hp_.clip_epsilon);
    }
    diag.surrogate /= n;
    buffer_.clear();
    return diag;
  }

  void save_checkpoint(const std::string& prefix) const {
    {
      std::ofstream os(prefix + ".model.bin", std::ios::binary);
      if (!os) throw std::runtime_error("checkpoint: cannot write " + prefix + ".model.bin");
      write_model_params(os, model());
    }
    {
      std::ofstream os(prefix + ".adam.bin", std::ios::binary);
      write_adam_state(os, opt_actor_);
      write_adam_state(os, opt_critic_);
    }
    {
      std::ofstream os(prefix + ".hyper.json");
      os << to_json(hp_).dump(2) << "\n";
    }
  }

  void load_checkpoint(const std::string& prefix) {
    {
      std::ifstream is(prefix + ".model.bin", std::ios::binary);
      if (!is) throw std::runtime_error("checkpoint: cannot read " + prefix + ".model.bin");
      set_model(read_model_params(is));
    }
    {
      std::ifstream is(prefix + ".adam.bin", std::ios::binary);
      if (!is) throw std::runtime_error("checkpoint: cannot read " + prefix + ".adam.bin");
      opt_actor_ = read_adam_state(is);
      opt_critic_ = read_adam_state(is);
    }
  }

 private:
  void shuffle(std::vector<int>& idx) {
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
      std::swap(idx[i], idx[rng_.uniform_int(i + 1)]);
  }

  // Accumulates the gradient of the minibatch loss
  //   -(surrogate + entropy_coeff * entropy) + value_coeff * (v - ret)^2
  // for one sample into the flat gradient buffers.
  void accumulate_sample(const Transition& tr, double advantage, double ret, int mb_size,
                         std::vector<double>& grad_actor, std::vector<double>& grad_critic,
                         PpoDiagnostics& diag, double& ratio_sum, int& clip_hits) {
    Mlp::Cache cache;
    actor_.forward_cached(tr.obs, cache);
    ActionDistribution d = distribution_from_cache(cache);

    const double logp_new = action_log_prob(d, tr.action);
    const double ratio = std::exp(logp_new - tr.action.log_prob);
    ratio_sum += ratio;
    diag.approx_kl += tr.action.log_prob - logp_new;
    if (std::abs(ratio - 1.0) > hp_.clip_epsilon) ++clip_hits;

    const double unclipped = ratio * advantage;
    const double clipped = std::clamp(ratio, 1.0 - hp_.clip_epsilon, 1.0 + hp_.clip_epsilon) * advantage;
    diag.policy_loss += -std::min(unclipped, clipped);
    const bool pass_gradient =
        unclipped <= clipped || (ratio >= 1.0 - hp_.clip_epsilon && ratio <= 1.0 + hp_.clip_epsilon);
    const double surrogate_coeff = pass_gradient ? ratio * advantage : 0.0;

    // d(objective)/d(actor outputs)
    std::vector<double> dout(actor_.output_size(), 0.0);
    const int n_opt = task_slots_ + 1;

    // categorical term: d logp / d logit_j = [j == choice] - pmf_j (allowed j)
    if (surrogate_coeff != 0.0) {
      for (int jopt = 0; jopt < n_opt; ++jopt) {
        if (!d.allowed[jopt]) continue;
        const double pj = std::exp(d.log_pmf[jopt]);
        dout[jopt] += surrogate_coeff * ((jopt == tr.action.task_choice ? 1.0 : 0.0) - pj);
      }
      if (tr.action.task_choice != task_slots_) {
        const double sd_f = std::exp(d.log_std_f), sd_p = std::exp(d.log_std_p);
        const double uf = (tr.action.z_f - d.mean_f) / sd_f;
        const double up = (tr.action.z_p - d.mean_p) / sd_p;
        dout[n_opt + 0] += surrogate_coeff * uf / sd_f;
        dout[n_opt + 1] += surrogate_coeff * up / sd_p;
        dout[n_opt + 2] += surrogate_coeff * (uf * uf - 1.0) * bounded_log_std_draw(d.raw_std_f);
        dout[n_opt + 3] += surrogate_coeff * (up * up - 1.0) * bounded_log_std_draw(d.raw_std_p);
      }
    }

    // entropy bonus: categorical entropy plus both Gaussian head entropies
    double cat_entropy = 0;
    for (int jopt = 0; jopt < n_opt; ++jopt)
      if (d.allowed[jopt]) {
        const double pj = std::exp(d.log_pmf[jopt]);
        if (pj > 0) cat_entropy -= pj * d.log_pmf[jopt];
      }
    const double gauss_entropy =
        d.log_std_f + d.log_std_p + 2.0 * 1.4189385332046727418;  // 0.5*log(2*pi*e) each
    diag.entropy += cat_entropy + gauss_entropy;
    if (hp_.entropy_coeff != 0.0) {
      for (int jopt = 0; jopt < n_opt; ++jopt) {
        if (!d.allowed[jopt]) continue;
        const double pj = std::exp(d.log_pmf[jopt]);
        if (pj > 0) dout[jopt] += hp_.entropy_coeff * (-pj * (d.log_pmf[jopt] + cat_entropy));
      }
      dout[n_opt + 2] += hp_.entropy_coeff * bounded_log_std_draw(d.raw_std_f);
      dout[n_opt + 3] += hp_.entropy_coeff * bounded_log_std_draw(d.raw_std_p);
    }

    // gradients minimize the loss, so flip the maximized objective
    for (double& g : dout) g = -g / mb_size;
    std::vector<double> ga = actor_.backward(cache, dout);
    for (std::size_t i = 0; i < ga.size(); ++i) grad_actor[i] += ga[i];

    Mlp::Cache vcache;
    const double v = critic_.forward_cached(tr.obs, vcache)[0];
    diag.value_loss += (v - ret) * (v - ret);
    const double dv[1] = {hp_.value_coeff * 2.0 * (v - ret) / mb_size};
    std::vector<double> gc = critic_.backward(vcache, dv);
    for (std::size_t i = 0; i < gc.size(); ++i) grad_critic[i] += gc[i];
  }

  ActionDistribution distribution_from_cache(const Mlp::Cache& cache) const {
    // same math as action_distribution, reusing the cached forward pass
    ActionDistribution d;
    d.task_slots = task_slots_;
    const std::vector<double>& out = cache.act.back();
    d.logits.assign(out.begin(), out.begin() + task_slots_ + 1);
    d.mean_f = out[task_slots_ + 1];
    d.mean_p = out[task_slots_ + 2];
    d.raw_std_f = out[task_slots_ + 3];
    d.raw_std_p = out[task_slots_ + 4];
    d.log_std_f = bounded_log_std(d.raw_std_f);
    d.log_std_p = bounded_log_std(d.raw_std_p);
    d.allowed.assign(task_slots_ + 1, false);
    d.allowed[task_slots_] = true;
    const std::vector<double>& obs = cache.act.front();
    for (int s = 0; s < task_slots_; ++s) d.allowed[s] = slot_eligible(obs, s);
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= task_slots_; ++i)
      if (d.allowed[i]) max_logit = std::max(max_logit, d.logits[i]);
    double z = 0;
    for (int i = 0; i <= task_slots_; ++i)
      if (d.allowed[i]) z += std::exp(d.logits[i] - max_logit);
    const double log_z = max_logit + std::log(z);
    d.log_pmf.assign(task_slots_ + 1, -std::numeric_limits<double>::infinity());
    for (int i = 0; i <= task_slots_; ++i)
      if (d.allowed[i]) d.log_pmf[i] = d.logits[i] - log_z;
    return d;
  }

  int mu_index_;
  int task_slots_;
  AgentHyperparams hp_;
  Mlp actor_, critic_;
  AdamState opt_actor_{0}, opt_critic_{0};
  RngStream rng_;
  std::vector<Transition> buffer_;
  std::int64_t model_version_ = 0;
};

}  // namespace mcsim
