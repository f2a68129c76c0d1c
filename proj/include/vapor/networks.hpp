#pragma once

// Actor and critic networks. Both share the two-branch state encoder: an
// exteroception branch over the pooled cost-map stack (spatial gate, channel
// gate, dense layers) and a proprioception branch over the stability vector.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "vapor/autodiff.hpp"
#include "vapor/percept.hpp"
#include "vapor/types.hpp"

namespace vapor::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

struct NetworkConfig {
  int grid_n = 40;
  int pool = 4;  // two 2x average-pool stages
  int channel_hidden = 8;
  int ext_hidden = 128;
  int ext_out = 64;
  int prop_hidden = 16;
  int action_hidden = 16;
  int fusion = 64;
  bool attention = true;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double head_scale = 0.01;
  Action bound = Action(1.0, 1.0, 1.0);

  int pooled_side() const { return grid_n / pool; }
  int cells() const { return pooled_side() * pooled_side(); }
  int extero_width() const { return cells() * 3; }
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

inline constexpr int kActionDim = 3;
inline constexpr int kMapChannels = 3;

/// Network-ready state rows: pooled, scaled maps (cell-major, channel-minor) and
/// the compressed stability vector.
template <typename S>
struct StateBatch {
  Matrix<S> extero;
  Matrix<S> proprio;

  Eigen::Index size() const { return extero.rows(); }
};

/// Cost maps as stored in dataset records: float32, C_i then C_h then C_g, each n x n row-major.
inline std::vector<float> map_record(const CostMapStack& maps) {
  const int n = maps.grid.n;
  std::vector<float> out(static_cast<std::size_t>(3) * n * n);
  const Eigen::MatrixXd* layers[3] = {&maps.intensity, &maps.height, &maps.goal};
  for (int c = 0; c < 3; ++c) {
    for (int l = 0; l < n; ++l) {
      for (int m = 0; m < n; ++m) out[(static_cast<std::size_t>(c) * n + l) * n + m] = static_cast<float>((*layers[c])(l, m));
    }
  }
  return out;
}

/// Average-pools a map record into one cell-major feature row scaled to [0, 1].
template <typename S>
Eigen::Matrix<S, 1, Eigen::Dynamic> pool_record(const float* maps, const NetworkConfig& cfg) {
  const int n = cfg.grid_n, side = cfg.pooled_side();
  const double norm = 1.0 / (100.0 * cfg.pool * cfg.pool);
  Eigen::Matrix<S, 1, Eigen::Dynamic> row(cfg.extero_width());
  for (int pl = 0; pl < side; ++pl) {
    for (int pm = 0; pm < side; ++pm) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int dl = 0; dl < cfg.pool; ++dl) {
          const float* line = maps + (static_cast<std::size_t>(c) * n + pl * cfg.pool + dl) * n + pm * cfg.pool;
          for (int dm = 0; dm < cfg.pool; ++dm) sum += line[dm];
        }
        row((pl * side + pm) * 3 + c) = static_cast<S>(sum * norm);
      }
    }
  }
  return row;
}

template <typename S>
Eigen::Matrix<S, 1, Eigen::Dynamic> pool_maps(const CostMapStack& maps, const NetworkConfig& cfg) {
  if (maps.grid.n != cfg.grid_n) throw std::invalid_argument("observation grid does not match the network");
  return pool_record<S>(map_record(maps).data(), cfg);
}

/// log1p of the stability variances, taken from their float32 record values.
template <typename S>
Eigen::Matrix<S, 1, 2> proprio_features(float pc1, float pc2) {
  return {static_cast<S>(std::log1p(static_cast<double>(pc1))), static_cast<S>(std::log1p(static_cast<double>(pc2)))};
}

template <typename S>
Eigen::Matrix<S, 1, 2> proprio_features(const StabilityVector& sp) {
  return proprio_features<S>(static_cast<float>(sp.pc1), static_cast<float>(sp.pc2));
}

template <typename S>
StateBatch<S> make_state_batch(std::span<const Observation> obs, const NetworkConfig& cfg) {
  StateBatch<S> batch;
  batch.extero.resize(static_cast<Eigen::Index>(obs.size()), cfg.extero_width());
  batch.proprio.resize(static_cast<Eigen::Index>(obs.size()), 2);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    batch.extero.row(static_cast<Eigen::Index>(i)) = pool_maps<S>(obs[i].maps, cfg);
    batch.proprio.row(static_cast<Eigen::Index>(i)) = proprio_features<S>(obs[i].stability);
  }
  return batch;
}

template <typename S>
struct Linear {
  Parameter<S> weight;
  Parameter<S> bias;

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix<S> w(in, out), b(1, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(gain * u(rng));
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<S>(gain * u(rng));
    weight = Parameter<S>(name + ".weight", std::move(w));
    bias = Parameter<S>(name + ".bias", std::move(b));
  }

  Var<S> operator()(Tape<S>& t, const Var<S>& x, bool track) {
    return ad::add_row(ad::matmul(x, t.param(weight, track)), t.param(bias, track));
  }

  void collect(std::vector<Parameter<S>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

template <typename S>
class ExteroceptionBranch {
 public:
  ExteroceptionBranch() = default;
  ExteroceptionBranch(const std::string& name, const NetworkConfig& cfg, Rng& rng)
      : cells_(cfg.cells()), attention_(cfg.attention) {
    if (attention_) {
      spatial_ = Linear<S>(name + ".spatial", kMapChannels, 1, rng);
      squeeze1_ = Linear<S>(name + ".channel1", kMapChannels, cfg.channel_hidden, rng);
      squeeze2_ = Linear<S>(name + ".channel2", cfg.channel_hidden, kMapChannels, rng);
      // Per-channel mean over cells, and its transpose-like broadcast back to cells.
      average_ = Matrix<S>::Zero(cfg.extero_width(), kMapChannels);
      tile_ = Matrix<S>::Zero(kMapChannels, cfg.extero_width());
      for (int cell = 0; cell < cells_; ++cell) {
        for (int c = 0; c < kMapChannels; ++c) {
          average_(cell * kMapChannels + c, c) = static_cast<S>(1.0 / cells_);
          tile_(c, cell * kMapChannels + c) = S(1);
        }
      }
    }
    fc1_ = Linear<S>(name + ".fc1", cfg.extero_width(), cfg.ext_hidden, rng);
    fc2_ = Linear<S>(name + ".fc2", cfg.ext_hidden, cfg.ext_out, rng);
  }

  struct Gates {
    Matrix<S> spatial;  // (B*cells) x 1
    Matrix<S> channel;  // B x 3
  };

  Var<S> operator()(Tape<S>& t, const Var<S>& x, bool track, Gates* gates = nullptr) {
    Var<S> h = x;
    if (attention_) {
      const Eigen::Index batch = x.rows();
      Var<S> per_cell = ad::reshape(x, batch * cells_, kMapChannels);
      Var<S> spatial_gate = ad::sigmoid(spatial_(t, per_cell, track));
      Var<S> gated = ad::reshape(ad::mul_col(per_cell, spatial_gate), batch, cells_ * kMapChannels);
      Var<S> squeezed = ad::matmul(gated, t.constant(average_));
      Var<S> channel_gate = ad::sigmoid(squeeze2_(t, ad::relu(squeeze1_(t, squeezed, track)), track));
      h = gated * ad::matmul(channel_gate, t.constant(tile_));
      if (gates != nullptr) *gates = {spatial_gate.value(), channel_gate.value()};
    }
    return ad::relu(fc2_(t, ad::relu(fc1_(t, h, track)), track));
  }

  void collect(std::vector<Parameter<S>*>& out) {
    if (attention_) {
      spatial_.collect(out);
      squeeze1_.collect(out);
      squeeze2_.collect(out);
    }
    fc1_.collect(out);
    fc2_.collect(out);
  }

 private:
  int cells_ = 0;
  bool attention_ = true;
  Linear<S> spatial_, squeeze1_, squeeze2_, fc1_, fc2_;
  Matrix<S> average_, tile_;
};

template <typename S>
class TwoLayer {
 public:
  TwoLayer() = default;
  TwoLayer(const std::string& name, int in, int hidden, Rng& rng)
      : fc1_(name + ".fc1", in, hidden, rng), fc2_(name + ".fc2", hidden, hidden, rng) {}

  Var<S> operator()(Tape<S>& t, const Var<S>& x, bool track) {
    return ad::relu(fc2_(t, ad::relu(fc1_(t, x, track)), track));
  }
  void collect(std::vector<Parameter<S>*>& out) {
    fc1_.collect(out);
    fc2_.collect(out);
  }

 private:
  Linear<S> fc1_, fc2_;
};

template <typename S>
struct PolicyOutput {
  Var<S> mean;
  Var<S> log_std;
  Var<S> std;
};

template <typename S>
class PolicyNetwork {
 public:
  PolicyNetwork() = default;
  PolicyNetwork(const NetworkConfig& cfg, std::uint64_t seed, const std::string& name = "policy") : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    ext_ = ExteroceptionBranch<S>(name + ".ext", cfg, rng);
    prop_ = TwoLayer<S>(name + ".prop", 2, cfg.prop_hidden, rng);
    fuse_ = TwoLayer<S>(name + ".fuse", cfg.ext_out + cfg.prop_hidden, cfg.fusion, rng);
    mean_ = Linear<S>(name + ".mean", cfg.fusion, kActionDim, rng, cfg.head_scale);
    log_std_ = Linear<S>(name + ".log_std", cfg.fusion, kActionDim, rng, cfg.head_scale);
  }

  PolicyOutput<S> forward(Tape<S>& t, const StateBatch<S>& s, bool track = true) {
    check_batch(s, cfg_);
    Var<S> e = ext_(t, t.constant(s.extero), track);
    Var<S> p = prop_(t, t.constant(s.proprio), track);
    Var<S> h = fuse_(t, ad::concat_cols<S>({e, p}), track);
    PolicyOutput<S> out;
    out.mean = mean_(t, h, track);
    out.log_std = ad::clamp(log_std_(t, h, track), static_cast<S>(cfg_.log_std_min), static_cast<S>(cfg_.log_std_max));
    out.std = ad::exp(out.log_std);
    return out;
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    ext_.collect(out);
    prop_.collect(out);
    fuse_.collect(out);
    mean_.collect(out);
    log_std_.collect(out);
    return out;
  }

  const NetworkConfig& config() const { return cfg_; }

  static void check_batch(const StateBatch<S>& s, const NetworkConfig& cfg) {
    if (s.extero.cols() != cfg.extero_width() || s.proprio.cols() != 2 || s.proprio.rows() != s.extero.rows()) {
      throw std::invalid_argument("state batch shape does not match the network");
    }
  }

 private:
  NetworkConfig cfg_;
  ExteroceptionBranch<S> ext_;
  TwoLayer<S> prop_, fuse_;
  Linear<S> mean_, log_std_;
};

template <typename S>
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(const NetworkConfig& cfg, std::uint64_t seed, const std::string& name = "q") : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    ext_ = ExteroceptionBranch<S>(name + ".ext", cfg, rng);
    prop_ = TwoLayer<S>(name + ".prop", 2, cfg.prop_hidden, rng);
    act_ = TwoLayer<S>(name + ".act", kActionDim, cfg.action_hidden, rng);
    fuse_ = TwoLayer<S>(name + ".fuse", cfg.ext_out + cfg.prop_hidden + cfg.action_hidden, cfg.fusion, rng);
    head_ = Linear<S>(name + ".head", cfg.fusion, 1, rng, cfg.head_scale);
  }

  /// State features shared by every action evaluated at that state.
  Var<S> encode(Tape<S>& t, const StateBatch<S>& s, bool track = true) {
    PolicyNetwork<S>::check_batch(s, cfg_);
    Var<S> e = ext_(t, t.constant(s.extero), track);
    Var<S> p = prop_(t, t.constant(s.proprio), track);
    return ad::concat_cols<S>({e, p});
  }

  /// Q for `actions` (R x 3); R must be a multiple of the encoded batch, with the
  /// actions for one state stored consecutively.
  Var<S> evaluate(Tape<S>& t, const Var<S>& encoded, const Var<S>& actions, bool track = true) {
    if (actions.cols() != kActionDim || actions.rows() % encoded.rows() != 0) {
      throw std::invalid_argument("action batch shape does not match the encoded states");
    }
    const Eigen::Index per_state = actions.rows() / encoded.rows();
    Var<S> enc = per_state == 1 ? encoded : ad::repeat_rows(encoded, per_state);
    Var<S> a = act_(t, actions, track);
    return head_(t, fuse_(t, ad::concat_cols<S>({enc, a}), track), track);
  }

  Var<S> forward(Tape<S>& t, const StateBatch<S>& s, const Var<S>& actions, bool track = true) {
    return evaluate(t, encode(t, s, track), actions, track);
  }

  std::vector<Parameter<S>*> parameters() {
    std::vector<Parameter<S>*> out;
    ext_.collect(out);
    prop_.collect(out);
    act_.collect(out);
    fuse_.collect(out);
    head_.collect(out);
    return out;
  }

  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  ExteroceptionBranch<S> ext_;
  TwoLayer<S> prop_, act_, fuse_;
  Linear<S> head_;
};

template <typename Net>
std::size_t parameter_count(Net& net) {
  std::size_t n = 0;
  for (auto* p : net.parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

/// Log-density of a tanh-squashed Gaussian at `action` (bound * tanh(u)).
template <typename S>
S squashed_log_prob(const Eigen::Matrix<S, 3, 1>& action, const Eigen::Matrix<S, 3, 1>& mean,
                    const Eigen::Matrix<S, 3, 1>& std_dev, const Action& bound) {
  constexpr S kHalfLog2Pi = S(0.91893853320467274178);
  S lp = 0;
  for (int j = 0; j < 3; ++j) {
    const S b = static_cast<S>(bound[j]);
    const S y = action[j] / b;
    const S u = std::atanh(y);
    const S z = (u - mean[j]) / std_dev[j];
    lp += -S(0.5) * z * z - std::log(std_dev[j]) - kHalfLog2Pi - std::log(b * (S(1) - y * y));
  }
  return lp;
}

/// log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
template <typename S>
S log_one_minus_tanh_sq(S u) {
  const S x = -S(2) * u;
  const S sp = x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return S(2) * (static_cast<S>(std::numbers::ln2) - u - sp);
}

template <typename S>
struct SampledAction {
  Eigen::Matrix<S, 3, 1> action;
  S log_prob;
};

/// a = bound * tanh(mean + std * z), z ~ N(0, I), with the change-of-variables term.
template <typename S>
SampledAction<S> sample_action(const Eigen::Matrix<S, 3, 1>& mean, const Eigen::Matrix<S, 3, 1>& std_dev,
                               const Action& bound, Rng& rng) {
  constexpr S kHalfLog2Pi = S(0.91893853320467274178);
  SampledAction<S> out{};
  out.log_prob = 0;
  for (int j = 0; j < 3; ++j) {
    const S z = static_cast<S>(gaussian(rng));
    const S u = mean[j] + std_dev[j] * z;
    const S b = static_cast<S>(bound[j]);
    out.action[j] = b * std::tanh(u);
    out.log_prob += -S(0.5) * z * z - std::log(std_dev[j]) - kHalfLog2Pi - std::log(b) - log_one_minus_tanh_sq(u);
  }
  return out;
}

/// Differentiable reparameterized sample for a batch; `noise` is B x 3 standard normal.
template <typename S>
struct SampledBatch {
  Var<S> action;    // B x 3
  Var<S> log_prob;  // B x 1
};

template <typename S>
SampledBatch<S> sample_actions(Tape<S>& t, const PolicyOutput<S>& pi, const Matrix<S>& noise, const Action& bound) {
  constexpr S kHalfLog2Pi = S(0.91893853320467274178);
  const Eigen::Index batch = noise.rows();
  Matrix<S> bound_rows(batch, 3);
  for (int j = 0; j < 3; ++j) bound_rows.col(j).setConstant(static_cast<S>(bound[j]));
  const S log_bound = static_cast<S>(std::log(bound[0]) + std::log(bound[1]) + std::log(bound[2]));

  Var<S> z = t.constant(noise);
  Var<S> u = pi.mean + pi.std * z;
  SampledBatch<S> out;
  out.action = ad::tanh(u) * t.constant(bound_rows);
  // log N(u; mean, std) = -z^2/2 - log std - log(2 pi)/2 with z held fixed.
  Matrix<S> gauss = (-S(0.5) * noise.array().square() - kHalfLog2Pi).rowwise().sum();
  Var<S> correction = ad::scale(ad::add_scalar(u + ad::softplus(ad::scale(u, S(-2))), -static_cast<S>(std::numbers::ln2)), S(2));
  out.log_prob = ad::add_scalar(t.constant(gauss) - ad::row_sum(pi.log_std) + ad::row_sum(correction), -log_bound);
  return out;
}

inline void NetworkConfig::validate() const {
  if (grid_n <= 0 || pool <= 0 || grid_n % pool != 0) throw std::invalid_argument("grid must divide into pooling blocks");
  if (channel_hidden <= 0 || ext_hidden <= 0 || ext_out <= 0 || prop_hidden <= 0 || action_hidden <= 0 || fusion <= 0) {
    throw std::invalid_argument("layer widths must be positive");
  }
  if (!(log_std_min < log_std_max)) throw std::invalid_argument("log-std clamp range is empty");
  if ((bound.array() <= 0.0).any()) throw std::invalid_argument("action bounds must be positive");
}

}  // namespace vapor::nn
