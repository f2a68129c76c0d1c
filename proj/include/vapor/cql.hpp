#pragma once

// Offline actor-critic training: SAC losses with the CQL(H) penalty on both
// critics, automatic entropy temperature, Polyak target critics.

#include <cmath>
#include <cstdint>
#include <deque>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vapor/checkpoint.hpp"
#include "vapor/dataset.hpp"
#include "vapor/networks.hpp"

namespace vapor::rl {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using nn::NetworkConfig;
using nn::PolicyNetwork;
using nn::QNetwork;
using nn::StateBatch;

struct CqlParams {
  double gamma = 0.99;
  double tau = 0.005;
  double alpha_cql = 1.0;
  int batch = 256;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  int uniform_samples = 5;
  int policy_samples = 5;
  int window = 1000;  // steps averaged when picking Q_min
  double target_entropy = -3.0;
  double init_alpha = 1.0;

  int samples() const { return uniform_samples + policy_samples; }
  void validate() const;
};

template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S step = static_cast<S>(lr_ / c1), root_c2 = static_cast<S>(std::sqrt(c2)), eps = static_cast<S>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step * m_[i].array() / (v_[i].array().sqrt() / root_c2 + eps);
    }
  }

  long steps() const { return t_; }
  void set_steps(long t) { t_ = t; }
  std::vector<Matrix<S>>& first_moments() { return m_; }
  std::vector<Matrix<S>>& second_moments() { return v_; }
  const std::vector<Parameter<S>*>& parameters() const { return params_; }

 private:
  std::vector<Parameter<S>*> params_;
  std::vector<Matrix<S>> m_, v_;
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

template <typename S>
struct Batch {
  StateBatch<S> s;
  StateBatch<S> next;
  Matrix<S> action;  // B x 3
  Matrix<S> reward;  // B x 1
  Matrix<S> done;    // B x 1, 0 or 1
};

template <typename S>
Batch<S> make_batch(const TrainingSet& data, std::span<const std::size_t> idx) {
  Batch<S> b;
  b.s = data.states<S>(idx, false);
  b.next = data.states<S>(idx, true);
  b.action = data.actions<S>(idx);
  b.reward.resize(static_cast<Eigen::Index>(idx.size()), 1);
  b.done.resize(static_cast<Eigen::Index>(idx.size()), 1);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    b.reward(static_cast<Eigen::Index>(i), 0) = static_cast<S>(data.reward[idx[i]]);
    b.done(static_cast<Eigen::Index>(i), 0) = static_cast<S>(data.done[idx[i]]);
  }
  return b;
}

/// y = r + gamma (1 - done) (min target Q(s', a') - alpha log pi(a'|s')), a' drawn with `noise`.
template <typename S>
Matrix<S> bellman_target(PolicyNetwork<S>& policy, QNetwork<S>& target1, QNetwork<S>& target2, const Batch<S>& b,
                         const Matrix<S>& noise, S alpha, S gamma) {
  Tape<S> t;
  const auto pi = policy.forward(t, b.next, false);
  const auto sample = nn::sample_actions(t, pi, noise, policy.config().bound);
  const Matrix<S> q1 = target1.forward(t, b.next, sample.action, false).value();
  const Matrix<S> q2 = target2.forward(t, b.next, sample.action, false).value();
  const Matrix<S> soft = q1.cwiseMin(q2) - alpha * sample.log_prob.value();
  return b.reward + gamma * ((S(1) - b.done.array()) * soft.array()).matrix();
}

/// Actions scored by the CQL penalty: `uniform` rows per state drawn over the bounds
/// (weight 0), then policy samples weighted by log(1/volume) - log pi.
template <typename S>
struct PenaltySamples {
  Matrix<S> actions;  // (B * M) x 3, consecutive per state
  Matrix<S> weights;  // B x M
};

template <typename S>
PenaltySamples<S> penalty_samples(PolicyNetwork<S>& policy, const StateBatch<S>& s, const Matrix<S>& uniform,
                                  const Matrix<S>& noise) {
  const Eigen::Index batch = s.size();
  const Eigen::Index mu = uniform.rows() / batch, mp = noise.rows() / batch;
  if (uniform.rows() != mu * batch || noise.rows() != mp * batch) throw std::invalid_argument("sample count mismatch");
  const Action& bound = policy.config().bound;
  const S log_uniform = static_cast<S>(-std::log(8.0 * bound[0] * bound[1] * bound[2]));

  PenaltySamples<S> out;
  out.actions.resize(batch * (mu + mp), 3);
  out.weights = Matrix<S>::Zero(batch, mu + mp);
  Matrix<S> sampled, log_prob;
  if (mp > 0) {
    Tape<S> t;
    const auto pi = policy.forward(t, s, false);
    nn::PolicyOutput<S> rep{ad::repeat_rows(pi.mean, mp), ad::repeat_rows(pi.log_std, mp), ad::repeat_rows(pi.std, mp)};
    const auto draw = nn::sample_actions(t, rep, noise, bound);
    sampled = draw.action.value();
    log_prob = draw.log_prob.value();
  }
  for (Eigen::Index r = 0; r < batch; ++r) {
    const Eigen::Index base = r * (mu + mp);
    out.actions.middleRows(base, mu) = uniform.middleRows(r * mu, mu);
    if (mp > 0) {
      out.actions.middleRows(base + mu, mp) = sampled.middleRows(r * mp, mp);
      for (Eigen::Index k = 0; k < mp; ++k) out.weights(r, mu + k) = log_uniform - log_prob(r * mp + k, 0);
    }
  }
  return out;
}

template <typename S>
struct CriticTerms {
  Var<S> loss;
  Var<S> bellman;
  Var<S> penalty;
  Matrix<S> q_data;    // B x 1
  Matrix<S> q_scored;  // B x M, unweighted
};

/// Bellman MSE to `y` plus alpha_cql (logsumexp_k(Q(s, a_k) + w_k) - Q(s, a_data)), batch means.
template <typename S>
CriticTerms<S> critic_loss(Tape<S>& t, QNetwork<S>& q, const Batch<S>& b, const Matrix<S>& y,
                           const PenaltySamples<S>& samples, S alpha_cql) {
  const Eigen::Index batch = b.s.size(), m = samples.weights.cols();
  Matrix<S> actions(batch * (1 + m), 3);
  for (Eigen::Index r = 0; r < batch; ++r) {
    actions.row(r * (1 + m)) = b.action.row(r);
    actions.middleRows(r * (1 + m) + 1, m) = samples.actions.middleRows(r * m, m);
  }
  Var<S> all = ad::reshape(q.forward(t, b.s, t.constant(std::move(actions))), batch, 1 + m);
  Var<S> q_data = ad::slice_cols(all, 0, 1);
  Var<S> scored = ad::slice_cols(all, 1, m);
  CriticTerms<S> out;
  out.bellman = ad::mean(ad::square(q_data - t.constant(y)));
  out.penalty = ad::scale(ad::mean(ad::row_logsumexp(scored + t.constant(samples.weights))) - ad::mean(q_data), alpha_cql);
  out.loss = out.bellman + out.penalty;
  out.q_data = q_data.value();
  out.q_scored = scored.value();
  return out;
}

template <typename S>
struct ActorTerms {
  Var<S> loss;
  Matrix<S> log_prob;
};

/// mean(alpha log pi(a|s) - min(Q1, Q2)(s, a)), a reparameterized; critic weights are not tracked.
template <typename S>
ActorTerms<S> actor_loss(Tape<S>& t, PolicyNetwork<S>& policy, QNetwork<S>& q1, QNetwork<S>& q2, const StateBatch<S>& s,
                         const Matrix<S>& noise, S alpha) {
  const auto pi = policy.forward(t, s, true);
  const auto sample = nn::sample_actions(t, pi, noise, policy.config().bound);
  Var<S> q = ad::minimum(q1.forward(t, s, sample.action, false), q2.forward(t, s, sample.action, false));
  ActorTerms<S> out;
  out.loss = ad::mean(ad::scale(sample.log_prob, alpha) - q);
  out.log_prob = sample.log_prob.value();
  return out;
}

/// d/d(log alpha) of -log alpha * (log pi + target entropy), averaged over the batch.
template <typename S>
S temperature_gradient(const Matrix<S>& log_prob, double target_entropy) {
  return static_cast<S>(-(static_cast<double>(log_prob.mean()) + target_entropy));
}

/// target <- tau * online + (1 - tau) * target, parameter by parameter.
template <typename S>
void polyak(QNetwork<S>& online, QNetwork<S>& target, double tau) {
  auto src = online.parameters();
  auto dst = target.parameters();
  const S a = static_cast<S>(tau), b = static_cast<S>(1.0 - tau);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = a * src[i]->value + b * dst[i]->value;
}

struct StepLog {
  long step = 0;
  double loss1 = 0.0;
  double loss2 = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
  double q_data = 0.0;
  double q_rand = 0.0;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const StepLog& row);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  Trainer(const NetworkConfig& network, const CqlParams& params, std::uint64_t seed);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  /// One critic, actor and temperature update on a uniformly sampled batch, then target updates.
  StepLog step(const TrainingSet& data);

  long steps() const { return step_; }
  double alpha() const { return std::exp(static_cast<double>(log_alpha_.value(0, 0))); }
  /// Mean critic loss over the most recent `window` steps.
  double window_loss(int critic) const;
  /// 0 for Q1, 1 for Q2; the lower windowed loss wins and ties go to Q1.
  int qmin_index() const;
  QNetwork<float> export_qmin() const;

  PolicyNetwork<float>& policy() { return policy_; }
  QNetwork<float>& critic(int i) { return i == 0 ? q1_ : q2_; }
  QNetwork<float>& target(int i) { return i == 0 ? target1_ : target2_; }
  const NetworkConfig& network() const { return network_; }
  const CqlParams& params() const { return params_; }

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ckpt);

 private:
  NetworkConfig network_;
  CqlParams params_;
  PolicyNetwork<float> policy_;
  QNetwork<float> q1_, q2_, target1_, target2_;
  Parameter<float> log_alpha_;
  Adam<float> actor_opt_, critic1_opt_, critic2_opt_, alpha_opt_;
  Rng rng_;
  long step_ = 0;
  std::deque<double> recent1_, recent2_;
};

/// Held-out conservatism: mean Q(s, a_data) and mean Q(s, a_uniform), one uniform action per row.
struct QGap {
  double q_data = 0.0;
  double q_uniform = 0.0;
  double gap() const { return q_data - q_uniform; }
};

QGap conservatism_gap(QNetwork<float>& q, const TrainingSet& data, std::uint64_t seed, int batch = 512);

/// Q network weights from a checkpoint, under the blob prefix used by `Trainer` or `save_qmin`.
QNetwork<float> load_critic(const Checkpoint& ckpt, const std::string& prefix, const NetworkConfig& network);
Checkpoint qmin_checkpoint(const Trainer& trainer);

}  // namespace vapor::rl
