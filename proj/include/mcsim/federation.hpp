#pragma once
// Federated model exchange: round scheduling, reward-based local blending,
// and reward-weighted aggregation. The module only talks to an abstract
// aggregator endpoint, so the aggregation could be hosted by a separate
// service; models cross the boundary in the serialized wire format, never as
// raw experience.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mcsim/nn.hpp"
#include "mcsim/rl.hpp"

namespace mcsim {

struct FederationConfig {
  bool enabled = true;
  int steps_per_round = 100;  // T_r; aligned with the PPO batch by default
};

struct RoundLedger {
  int round = 0;
  std::vector<int> mu_ids;
  std::vector<double> rewards;  // per listed unit, earned during the round
  std::vector<double> chi;      // local-blend factor applied at round start
  std::int64_t model_version = 0;
};

inline nlohmann::json to_json(const RoundLedger& l) {
  return {{"type", "round"},     {"round", l.round}, {"mu_ids", l.mu_ids},
          {"rewards", l.rewards}, {"chi", l.chi},    {"model_version", l.model_version}};
}

// Local model for the new round: chi * local + (1 - chi) * global.
inline ModelParams blend_local(const ModelParams& local, const ModelParams& global, double chi) {
  if (chi < 0 || chi > 1) throw std::invalid_argument("blend_local: chi outside [0, 1]");
  ModelParams out = combine({local, global}, {chi, 1.0 - chi});
  out.version = global.version;
  return out;
}

// Reward-weighted average of the uploaded locals. All-zero rewards fall back
// to uniform weights.
inline ModelParams aggregate_global(const std::vector<ModelParams>& locals,
                                    const std::vector<double>& rewards) {
  if (locals.empty()) throw std::invalid_argument("aggregate_global: no models");
  if (locals.size() != rewards.size())
    throw std::invalid_argument("aggregate_global: reward count mismatch");
  double sum = 0;
  for (double r : rewards) {
    if (r < 0) throw std::invalid_argument("aggregate_global: negative reward");
    sum += r;
  }
  std::vector<double> weights(rewards.size());
  if (sum > 0)
    for (std::size_t i = 0; i < rewards.size(); ++i) weights[i] = rewards[i] / sum;
  else
    weights.assign(rewards.size(), 1.0 / rewards.size());
  return combine(locals, weights);
}

// Transport boundary. Only serialized model bytes and scalar round rewards
// cross it.
class AggregatorEndpoint {
 public:
  virtual ~AggregatorEndpoint() = default;
  virtual void publish(const std::string& model_bytes) = 0;
  virtual std::string fetch() const = 0;
  virtual void submit(int mu, const std::string& model_bytes, double round_reward) = 0;
  virtual std::vector<std::tuple<int, std::string, double>> drain() = 0;
};

class InProcessAggregator final : public AggregatorEndpoint {
 public:
  void publish(const std::string& bytes) override { global_ = bytes; }
  std::string fetch() const override {
    if (global_.empty()) throw std::logic_error("aggregator: no global model published");
    return global_;
  }
  void submit(int mu, const std::string& bytes, double reward) override {
    inbox_.emplace_back(mu, bytes, reward);
  }
  std::vector<std::tuple<int, std::string, double>> drain() override {
    auto out = std::move(inbox_);
    inbox_.clear();
    return out;
  }

 private:
  std::string global_;
  std::vector<std::tuple<int, std::string, double>> inbox_;
};

// Runs the round protocol against a set of agents. Rewards of the most
// recently completed round drive both the blend factors and the aggregation
// weights; while no round has completed, chi is 0 and agents adopt the
// global model.
class FederationDriver {
 public:
  FederationDriver() : endpoint_(std::make_unique<InProcessAggregator>()) {}
  explicit FederationDriver(std::unique_ptr<AggregatorEndpoint> ep) : endpoint_(std::move(ep)) {}

  void initialize(const ModelParams& global) {
    ModelParams g = global;
    g.version = 0;
    endpoint_->publish(model_params_bytes(g));
    last_rewards_.clear();
    round_ = 0;
  }

  int round() const { return round_; }
  ModelParams current_global() const { return model_params_from_bytes(endpoint_->fetch()); }

  double chi_for(int mu) const {
    double sum = 0;
    for (const auto& [k, r] : last_rewards_) sum += r;
    if (sum <= 0) return 0.0;
    const auto it = last_rewards_.find(mu);
    return it == last_rewards_.end() ? 0.0 : it->second / sum;
  }

  // Download + blend for every agent; returns the chi values applied.
  std::vector<double> begin_round(std::vector<PpoAgent*>& agents) {
    const ModelParams global = current_global();
    std::vector<double> chis;
    chis.reserve(agents.size());
    for (PpoAgent* a : agents) {
      const double chi = chi_for(a->mu_index());
      a->set_model(blend_local(a->model(), global, chi));
      chis.push_back(chi);
    }
    return chis;
  }

  // Upload + aggregate. `round_rewards` maps unit id -> reward earned this
  // round; absent units contribute no upload.
  RoundLedger end_round(std::vector<PpoAgent*>& agents, const std::map<int, double>& round_rewards,
                        const std::vector<double>& chis_applied) {
    RoundLedger ledger;
    ledger.round = round_;
    ledger.chi = chis_applied;
    for (PpoAgent* a : agents) {
      const auto it = round_rewards.find(a->mu_index());
      const double reward = it == round_rewards.end() ? 0.0 : it->second;
      endpoint_->submit(a->mu_index(), model_params_bytes(a->model()), reward);
      ledger.mu_ids.push_back(a->mu_index());
      ledger.rewards.push_back(reward);
    }
    auto uploads = endpoint_->drain();
    std::vector<ModelParams> locals;
    std::vector<double> rewards;
    last_rewards_.clear();
    for (auto& [mu, bytes, reward] : uploads) {
      locals.push_back(model_params_from_bytes(bytes));
      rewards.push_back(reward);
      last_rewards_[mu] = reward;
    }
    ModelParams next = aggregate_global(locals, rewards);
    next.version = ++round_;
    ledger.model_version = next.version;
    endpoint_->publish(model_params_bytes(next));
    return ledger;
  }

 private:
  std::unique_ptr<AggregatorEndpoint> endpoint_;
  std::map<int, double> last_rewards_;
  int round_ = 0;
};

// One full round: blend, run `steps_per_round` environment steps through the
// caller-supplied stepper (which returns per-unit rewards), upload,
// aggregate.
inline RoundLedger run_round(std::vector<PpoAgent*>& agents, FederationDriver& driver,
                             const FederationConfig& config,
                             const std::function<std::map<int, double>(int)>& run_steps) {
  if (!config.enabled) throw std::logic_error("run_round: federation disabled");
  const auto chis = driver.begin_round(agents);
  std::map<int, double> rewards = run_steps(config.steps_per_round);
  return driver.end_round(agents, rewards, chis);
}

}  // namespace mcsim
