#pragma once
// Minimal dense-network substrate: forward pass with cached activations,
// exact reverse-mode gradients, Adam, and a serializable parameter container
// that supports convex combination. f64 throughout; parameters live in one
// flat array per network so optimizer, averaging, and serialization all
// operate coordinate-wise.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mcsim/rng.hpp"

namespace mcsim {

// Dense net: ReLU on hidden layers, identity output. Layer l maps sizes[l]
// -> sizes[l+1]; parameters are [W_0, b_0, W_1, b_1, ...] with W row-major
// (out x in).
class Mlp {
 public:
  std::vector<int> sizes;
  std::vector<double> params;

  Mlp() = default;

  explicit Mlp(std::vector<int> layer_sizes) : sizes(std::move(layer_sizes)) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output layer");
    rebuild_offsets();
    params.assign(total_params_, 0.0);
  }

  static Mlp he_init(std::vector<int> layer_sizes, RngStream& rng) {
    Mlp net(std::move(layer_sizes));
    for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
      const int fan_in = net.sizes[l];
      const double bound = std::sqrt(6.0 / fan_in);
      double* w = net.params.data() + net.w_off_[l];
      for (int i = 0; i < net.sizes[l + 1] * net.sizes[l]; ++i) w[i] = rng.uniform(-bound, bound);
      // biases stay zero
    }
    return net;
  }

  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  int param_count() const { return total_params_; }
  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }

  bool same_shape(const Mlp& other) const { return sizes == other.sizes; }

  struct Cache {
    std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = layer l output
    std::vector<std::vector<double>> pre;  // pre-activation per layer
  };

  std::vector<double> forward(std::span<const double> x) const {
    Cache c;
    return forward_cached(x, c);
  }

  std::vector<double> forward_cached(std::span<const double> x, Cache& cache) const {
    if (static_cast<int>(x.size()) != input_size()) throw std::invalid_argument("Mlp: input size mismatch");
    ensure_offsets();
    cache.act.assign(sizes.size(), {});
    cache.pre.assign(layer_count(), {});
    cache.act[0].assign(x.begin(), x.end());
    for (int l = 0; l < layer_count(); ++l) {
      const int in = sizes[l], out = sizes[l + 1];
      const double* w = params.data() + w_off_[l];
      const double* b = params.data() + b_off_[l];
      const std::vector<double>& a = cache.act[l];
      std::vector<double>& z = cache.pre[l];
      z.assign(out, 0.0);
      for (int r = 0; r < out; ++r) {
        double acc = b[r];
        const double* row = w + static_cast<std::size_t>(r) * in;
        for (int cidx = 0; cidx < in; ++cidx) acc += row[cidx] * a[cidx];
        z[r] = acc;
      }
      std::vector<double>& anext = cache.act[l + 1];
      anext = z;
      if (l + 1 < layer_count())
        for (double& v : anext) v = v > 0 ? v : 0.0;
    }
    return cache.act.back();
  }

  // Gradient of a scalar loss wrt all parameters, given d(loss)/d(output).
  // Returned flat vector is aligned with `params`.
  std::vector<double> backward(const Cache& cache, std::span<const double> dout) const {
    if (static_cast<int>(dout.size()) != output_size())
      throw std::invalid_argument("Mlp: output gradient size mismatch");
    ensure_offsets();
    std::vector<double> grad(params.size(), 0.0);
    std::vector<double> dz(dout.begin(), dout.end());
    for (int l = layer_count() - 1; l >= 0; --l) {
      const int in = sizes[l], out = sizes[l + 1];
      const double* w = params.data() + w_off_[l];
      double* gw = grad.data() + w_off_[l];
      double* gb = grad.data() + b_off_[l];
      const std::vector<double>& a = cache.act[l];
      for (int r = 0; r < out; ++r) {
        gb[r] += dz[r];
        double* grow = gw + static_cast<std::size_t>(r) * in;
        for (int cidx = 0; cidx < in; ++cidx) grow[cidx] += dz[r] * a[cidx];
      }
      if (l == 0) break;
      std::vector<double> da(in, 0.0);
      for (int r = 0; r < out; ++r) {
        const double* row = w + static_cast<std::size_t>(r) * in;
        for (int cidx = 0; cidx < in; ++cidx) da[cidx] += row[cidx] * dz[r];
      }
      // ReLU mask of the previous layer
      for (int cidx = 0; cidx < in; ++cidx) da[cidx] = cache.pre[l - 1][cidx] > 0 ? da[cidx] : 0.0;
      dz = std::move(da);
    }
    return grad;
  }

 private:
  void rebuild_offsets() {
    w_off_.clear();
    b_off_.clear();
    int off = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      w_off_.push_back(off);
      off += sizes[l + 1] * sizes[l];
      b_off_.push_back(off);
      off += sizes[l + 1];
    }
    total_params_ = off;
  }
  void ensure_offsets() const {
    if (w_off_.empty() || total_params_ != static_cast<int>(params.size()))
      const_cast<Mlp*>(this)->rebuild_offsets();
    if (total_params_ != static_cast<int>(params.size()))
      throw std::invalid_argument("Mlp: parameter array inconsistent with sizes");
  }

  mutable std::vector<int> w_off_, b_off_;
  mutable int total_params_ = 0;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t step = 0;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(int n = 0, double lr_ = 5e-5) : m(n, 0.0), v(n, 0.0), lr(lr_) {}
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

// The unit of federation: actor and critic parameters plus the round they
// belong to.
struct ModelParams {
  Mlp actor;
  Mlp critic;
  std::int64_t version = 0;
};

inline ModelParams combine(const std::vector<ModelParams>& models, const std::vector<double>& weights) {
  if (models.empty()) throw std::invalid_argument("combine: no models");
  if (models.size() != weights.size()) throw std::invalid_argument("combine: weight count mismatch");
  double sum = 0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("combine: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("combine: weights must sum to 1");
  for (const auto& m : models)
    if (!m.actor.same_shape(models[0].actor) || !m.critic.same_shape(models[0].critic))
      throw std::invalid_argument("combine: shape mismatch");

  ModelParams out;
  out.actor = Mlp(models[0].actor.sizes);
  out.critic = Mlp(models[0].critic.sizes);
  out.version = models[0].version;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t c = 0; c < out.actor.params.size(); ++c)
      out.actor.params[c] += weights[i] * models[i].actor.params[c];
    for (std::size_t c = 0; c < out.critic.params.size(); ++c)
      out.critic.params[c] += weights[i] * models[i].critic.params[c];
  }
  return out;
}

// --- Serialization ---
// Binary layout: "MPB1" magic, i64 version, then per net (actor, critic):
// u32 layer count, i32 sizes, f64 payload. Little-endian throughout.

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("model params: truncated stream");
  return v;
}
inline void write_mlp(std::ostream& os, const Mlp& net) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(net.sizes.size()));
  for (int s : net.sizes) write_pod<std::int32_t>(os, s);
  os.write(reinterpret_cast<const char*>(net.params.data()),
           static_cast<std::streamsize>(net.params.size() * sizeof(double)));
}
inline Mlp read_mlp(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  if (n < 2 || n > 64) throw std::runtime_error("model params: bad shape table");
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    s = read_pod<std::int32_t>(is);
    if (s <= 0 || s > 1 << 20) throw std::runtime_error("model params: bad layer size");
  }
  Mlp net(sizes);
  is.read(reinterpret_cast<char*>(net.params.data()),
          static_cast<std::streamsize>(net.params.size() * sizeof(double)));
  if (!is) throw std::runtime_error("model params: truncated payload");
  return net;
}
}  // namespace detail

inline void write_model_params(std::ostream& os, const ModelParams& mp) {
  os.write("MPB1", 4);
  detail::write_pod<std::int64_t>(os, mp.version);
  detail::write_mlp(os, mp.actor);
  detail::write_mlp(os, mp.critic);
}

inline ModelParams read_model_params(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MPB1", 4) != 0)
    throw std::runtime_error("model params: bad magic");
  ModelParams mp;
  mp.version = detail::read_pod<std::int64_t>(is);
  mp.actor = detail::read_mlp(is);
  mp.critic = detail::read_mlp(is);
  return mp;
}

inline std::string model_params_bytes(const ModelParams& mp) {
  std::ostringstream os(std::ios::binary);
  write_model_params(os, mp);
  return os.str();
}

inline ModelParams model_params_from_bytes(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_model_params(is);
}

// Debug export.
inline nlohmann::json to_json(const ModelParams& mp) {
  auto net = [](const Mlp& m) {
    return nlohmann::json{{"sizes", m.sizes}, {"params", m.params}};
  };
  return {{"version", mp.version}, {"actor", net(mp.actor)}, {"critic", net(mp.critic)}};
}

inline void write_adam_state(std::ostream& os, const AdamState& st) {
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(st.m.size()));
  os.write(reinterpret_cast<const char*>(st.m.data()),
           static_cast<std::streamsize>(st.m.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(st.v.data()),
           static_cast<std::streamsize>(st.v.size() * sizeof(double)));
  detail::write_pod<std::int64_t>(os, st.step);
  detail::write_pod<double>(os, st.lr);
  detail::write_pod<double>(os, st.beta1);
  detail::write_pod<double>(os, st.beta2);
  detail::write_pod<double>(os, st.eps);
}

inline AdamState read_adam_state(std::istream& is) {
  const auto n = detail::read_pod<std::uint32_t>(is);
  AdamState st(static_cast<int>(n));
  is.read(reinterpret_cast<char*>(st.m.data()), static_cast<std::streamsize>(n * sizeof(double)));
  is.read(reinterpret_cast<char*>(st.v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  st.step = detail::read_pod<std::int64_t>(is);
  st.lr = detail::read_pod<double>(is);
  st.beta1 = detail::read_pod<double>(is);
  st.beta2 = detail::read_pod<double>(is);
  st.eps = detail::read_pod<double>(is);
  if (!is) throw std::runtime_error("adam state: truncated stream");
  return st;
}

}  // namespace mcsim
