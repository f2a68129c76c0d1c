#include "vapor/cql.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>

namespace vapor::rl {
namespace {

NetworkConfig small_config() {
  NetworkConfig cfg;
  cfg.grid_n = 8;
  cfg.pool = 2;
  cfg.ext_hidden = 16;
  cfg.ext_out = 8;
  cfg.fusion = 16;
  cfg.head_scale = 1.0;
  return cfg;
}

Matrix<double> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

Matrix<double> normal_matrix(Rng& rng, Eigen::Index rows) {
  Matrix<double> m(rows, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gaussian(rng);
  return m;
}

StateBatch<double> random_states(Rng& rng, const NetworkConfig& cfg, int batch) {
  return {random_matrix(rng, batch, cfg.extero_width(), 0.0, 1.0), random_matrix(rng, batch, 2, 0.0, 2.0)};
}

StateBatch<double> row_of(const StateBatch<double>& s, Eigen::Index r) {
  return {s.extero.row(r), s.proprio.row(r)};
}

Batch<double> random_batch(Rng& rng, const NetworkConfig& cfg, int batch) {
  Batch<double> b;
  b.s = random_states(rng, cfg, batch);
  b.next = random_states(rng, cfg, batch);
  b.action = random_matrix(rng, batch, 3, -1.0, 1.0);
  b.reward = random_matrix(rng, batch, 1, -3.0, 3.0);
  b.done = Matrix<double>::Zero(batch, 1);
  b.done(batch - 1, 0) = 1.0;
  return b;
}

double q_single(QNetwork<double>& q, const StateBatch<double>& s, const Eigen::Vector3d& a) {
  Tape<double> t;
  Matrix<double> am(1, 3);
  am.row(0) = a.transpose();
  return q.forward(t, s, t.constant(am), false).scalar();
}

struct PolicyRow {
  Eigen::Vector3d mean, std;
};

PolicyRow policy_single(PolicyNetwork<double>& pi, const StateBatch<double>& s) {
  Tape<double> t;
  const auto out = pi.forward(t, s, false);
  return {out.mean.value().row(0).transpose(), out.std.value().row(0).transpose()};
}

Eigen::Vector3d squash(const PolicyRow& p, const Eigen::Vector3d& z, const Action& bound) {
  Eigen::Vector3d a;
  for (int j = 0; j < 3; ++j) a[j] = bound[j] * std::tanh(p.mean[j] + p.std[j] * z[j]);
  return a;
}

// Per-row scalar reimplementation of the critic loss, sharing only the network forward pass.
double critic_loss_oracle(PolicyNetwork<double>& pi, QNetwork<double>& q, QNetwork<double>& t1, QNetwork<double>& t2,
                          const Batch<double>& b, const Matrix<double>& next_noise, const Matrix<double>& uniform,
                          const Matrix<double>& penalty_noise, double alpha, double gamma, double alpha_cql) {
  const Eigen::Index batch = b.s.size();
  const Eigen::Index mu = uniform.rows() / batch, mp = penalty_noise.rows() / batch;
  const Action bound = pi.config().bound;
  double bellman = 0.0, lse_sum = 0.0, data_sum = 0.0;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const auto s = row_of(b.s, r), next = row_of(b.next, r);
    const PolicyRow pn = policy_single(pi, next);
    const Eigen::Vector3d a_next = squash(pn, next_noise.row(r).transpose(), bound);
    const double logp_next = nn::squashed_log_prob<double>(a_next, pn.mean, pn.std, bound);
    const double soft = std::min(q_single(t1, next, a_next), q_single(t2, next, a_next)) - alpha * logp_next;
    const double y = b.reward(r, 0) + gamma * (1.0 - b.done(r, 0)) * soft;
    const double qd = q_single(q, s, b.action.row(r).transpose());
    bellman += (qd - y) * (qd - y);
    data_sum += qd;

    std::vector<double> terms;
    for (Eigen::Index k = 0; k < mu; ++k) terms.push_back(q_single(q, s, uniform.row(r * mu + k).transpose()));
    const PolicyRow ps = policy_single(pi, s);
    for (Eigen::Index k = 0; k < mp; ++k) {
      const Eigen::Vector3d a = squash(ps, penalty_noise.row(r * mp + k).transpose(), bound);
      const double logp = nn::squashed_log_prob<double>(a, ps.mean, ps.std, bound);
      terms.push_back(q_single(q, s, a) + std::log(1.0 / 8.0) - logp);
    }
    double lse = 0.0;
    for (double v : terms) lse += std::exp(v);
    lse_sum += std::log(lse);
  }
  return bellman / batch + alpha_cql * (lse_sum / batch - data_sum / batch);
}

TEST(CriticLoss, MatchesScalarOracle) {
  const NetworkConfig cfg = small_config();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    PolicyNetwork<double> pi(cfg, seed);
    QNetwork<double> q(cfg, seed + 10), t1(cfg, seed + 20), t2(cfg, seed + 30);
    Rng rng(seed);
    const Batch<double> b = random_batch(rng, cfg, 4);
    const Matrix<double> next_noise = normal_matrix(rng, 4);
    const Matrix<double> uniform = random_matrix(rng, 4 * 3, 3, -1.0, 1.0);
    const Matrix<double> penalty_noise = normal_matrix(rng, 4 * 2);
    const double alpha = 0.3, gamma = 0.9, alpha_cql = 1.5;

    const Matrix<double> y = bellman_target(pi, t1, t2, b, next_noise, alpha, gamma);
    const auto samples = penalty_samples(pi, b.s, uniform, penalty_noise);
    Tape<double> t;
    const auto terms = critic_loss(t, q, b, y, samples, alpha_cql);
    const double want = critic_loss_oracle(pi, q, t1, t2, b, next_noise, uniform, penalty_noise, alpha, gamma, alpha_cql);
    EXPECT_NEAR(terms.loss.scalar(), want, 1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST(CriticLoss, TargetIsRewardWithoutDiscountOrEntropy) {
  const NetworkConfig cfg = small_config();
  PolicyNetwork<double> pi(cfg, 1);
  QNetwork<double> t1(cfg, 2), t2(cfg, 3);
  Rng rng(5);
  Batch<double> b = random_batch(rng, cfg, 6);
  b.done.setZero();
  EXPECT_EQ(bellman_target(pi, t1, t2, b, normal_matrix(rng, 6), 0.0, 0.0), b.reward);
}

TEST(CriticLoss, ConstantCriticPenaltyIsLogM) {
  const NetworkConfig cfg = small_config();
  QNetwork<double> q(cfg, 4);
  for (auto* p : q.parameters()) {
    if (p->name == "q.head.weight") p->value.setZero();
    if (p->name == "q.head.bias") p->value.setConstant(2.5);
  }
  PolicyNetwork<double> pi(cfg, 1);
  Rng rng(6);
  const Batch<double> b = random_batch(rng, cfg, 5);
  const int m = 10;
  const auto samples = penalty_samples(pi, b.s, random_matrix(rng, 5 * m, 3, -1.0, 1.0), Matrix<double>(0, 3));
  Tape<double> t;
  const Matrix<double> y = Matrix<double>::Zero(5, 1);
  const auto terms = critic_loss(t, q, b, y, samples, 0.7);
  EXPECT_NEAR(terms.penalty.scalar(), 0.7 * std::log(static_cast<double>(m)), 1e-12);
  EXPECT_NEAR(terms.bellman.scalar(), 2.5 * 2.5, 1e-12);
}

TEST(ActorLoss, ZeroCriticAndTemperatureGiveZero) {
  const NetworkConfig cfg = small_config();
  PolicyNetwork<double> pi(cfg, 1);
  QNetwork<double> q1(cfg, 2), q2(cfg, 3);
  for (auto* net : {&q1, &q2}) {
    for (auto* p : net->parameters()) {
      if (p->name.find("head") != std::string::npos) p->value.setZero();
    }
  }
  Rng rng(7);
  const auto s = random_states(rng, cfg, 5);
  const Matrix<double> noise = normal_matrix(rng, 5);
  Tape<double> t;
  EXPECT_EQ(actor_loss(t, pi, q1, q2, s, noise, 0.0).loss.scalar(), 0.0);

  for (auto* net : {&q1, &q2}) {
    for (auto* p : net->parameters()) {
      if (p->name.find("head.bias") != std::string::npos) p->value.setConstant(4.0);
    }
  }
  Tape<double> t2;
  const double base = actor_loss(t2, pi, q1, q2, s, noise, 0.2).loss.scalar();
  for (auto* net : {&q1, &q2}) {
    for (auto* p : net->parameters()) {
      if (p->name.find("head.bias") != std::string::npos) p->value.array() += 1.5;
    }
  }
  Tape<double> t3;
  EXPECT_NEAR(actor_loss(t3, pi, q1, q2, s, noise, 0.2).loss.scalar(), base - 1.5, 1e-12);
}

TEST(ActorLoss, GradientReachesOnlyThePolicy) {
  const NetworkConfig cfg = small_config();
  PolicyNetwork<double> pi(cfg, 1);
  QNetwork<double> q1(cfg, 2), q2(cfg, 3);
  Rng rng(8);
  const auto s = random_states(rng, cfg, 4);
  for (auto* p : q1.parameters()) p->zero_grad();
  for (auto* p : q2.parameters()) p->zero_grad();
  for (auto* p : pi.parameters()) p->zero_grad();
  Tape<double> t;
  t.backward(actor_loss(t, pi, q1, q2, s, normal_matrix(rng, 4), 0.5).loss);
  for (auto* p : q1.parameters()) EXPECT_EQ(p->grad.norm(), 0.0) << p->name;
  for (auto* p : q2.parameters()) EXPECT_EQ(p->grad.norm(), 0.0) << p->name;
  double total = 0.0;
  for (auto* p : pi.parameters()) total += p->grad.norm();
  EXPECT_GT(total, 0.0);
}

TEST(Temperature, GradientSign) {
  Matrix<double> logp = Matrix<double>::Constant(8, 1, 3.0);
  EXPECT_EQ(temperature_gradient(logp, -3.0), 0.0);
  logp.setConstant(1.0);  // entropy -1 is above the -3 target
  EXPECT_GT(temperature_gradient(logp, -3.0), 0.0);
  logp.setConstant(5.0);
  EXPECT_LT(temperature_gradient(logp, -3.0), 0.0);
}

TEST(Temperature, StaysPositiveUnderRandomUpdates) {
  Parameter<double> log_alpha("log_alpha", Matrix<double>::Zero(1, 1));
  Adam<double> opt({&log_alpha}, 3e-4);
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    log_alpha.grad(0, 0) = gaussian(rng, 0.5, 2.0);
    opt.step();
    ASSERT_GT(std::exp(log_alpha.value(0, 0)), 0.0);
  }
  EXPECT_LT(log_alpha.value(0, 0), 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> w("w", Matrix<double>::Constant(1, 3, 1.0));
  Adam<double> opt({&w}, 0.1);
  w.grad << 2.0, -0.5, 0.0;
  opt.step();
  EXPECT_NEAR(w.value(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(w.value(0, 1), 1.1, 1e-7);
  EXPECT_EQ(w.value(0, 2), 1.0);
}

TrainingSet random_set(const NetworkConfig& cfg, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  TrainingSet set;
  set.width = cfg.extero_width();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < set.width; ++c) {
      set.extero.push_back(static_cast<float>(uniform(rng, 0, 1)));
      set.next_extero.push_back(static_cast<float>(uniform(rng, 0, 1)));
    }
    for (int c = 0; c < 2; ++c) {
      set.proprio.push_back(static_cast<float>(uniform(rng, 0, 1)));
      set.next_proprio.push_back(static_cast<float>(uniform(rng, 0, 1)));
    }
    // Data actions cluster near (0.5, 0, 0).
    set.action.push_back(static_cast<float>(0.5 + 0.05 * gaussian(rng)));
    set.action.push_back(0.0f);
    set.action.push_back(static_cast<float>(0.05 * gaussian(rng)));
    set.reward.push_back(static_cast<float>(uniform(rng, -1, 1)));
    set.done.push_back(uniform(rng, 0, 1) < 0.05 ? 1 : 0);
  }
  return set;
}

CqlParams small_params() {
  CqlParams p;
  p.batch = 16;
  p.window = 5;
  return p;
}

TEST(Trainer, TargetsTrailOnlineWeights) {
  const NetworkConfig cfg = small_config();
  const TrainingSet set = random_set(cfg, 64, 1);
  Trainer tr(cfg, small_params(), 3);
  for (int k = 0; k < 3; ++k) {
    std::vector<Matrix<float>> before;
    for (auto* p : tr.target(0).parameters()) before.push_back(p->value);
    tr.step(set);
    auto online = tr.critic(0).parameters();
    auto target = tr.target(0).parameters();
    for (std::size_t i = 0; i < online.size(); ++i) {
      const Matrix<double> want =
          0.005 * online[i]->value.cast<double>() + 0.995 * before[i].cast<double>();
      EXPECT_LT((target[i]->value.cast<double>() - want).cwiseAbs().maxCoeff(), 1e-7) << online[i]->name;
    }
  }
}

TEST(Trainer, SameSeedGivesIdenticalLossCurves) {
  const NetworkConfig cfg = small_config();
  const TrainingSet set = random_set(cfg, 64, 2);
  Trainer a(cfg, small_params(), 9), b(cfg, small_params(), 9);
  for (int k = 0; k < 5; ++k) {
    std::ostringstream la, lb;
    write_log_row(la, a.step(set));
    write_log_row(lb, b.step(set));
    EXPECT_EQ(la.str(), lb.str());
  }
}

TEST(Trainer, CheckpointResumesBitwise) {
  const NetworkConfig cfg = small_config();
  const TrainingSet set = random_set(cfg, 64, 3);
  Trainer a(cfg, small_params(), 4);
  for (int k = 0; k < 3; ++k) a.step(set);
  const auto dir = std::filesystem::temp_directory_path() / "vapor_cql_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", a.checkpoint());
  Trainer b(cfg, small_params(), 77);
  b.restore(load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(b.steps(), 3);
  for (int k = 0; k < 3; ++k) {
    const StepLog x = a.step(set), y = b.step(set);
    EXPECT_EQ(x.loss1, y.loss1);
    EXPECT_EQ(x.actor, y.actor);
    EXPECT_EQ(x.alpha, y.alpha);
  }
  save_checkpoint(dir / "a2.ckpt", a.checkpoint());
  save_checkpoint(dir / "b2.ckpt", b.checkpoint());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  EXPECT_EQ(slurp(dir / "a2.ckpt"), slurp(dir / "b2.ckpt"));
}

TEST(Trainer, ZeroStepsCheckpointIsTheInitialization) {
  const NetworkConfig cfg = small_config();
  Trainer tr(cfg, small_params(), 5);
  const Checkpoint ckpt = tr.checkpoint();
  PolicyNetwork<float> pi(cfg, mix_seed(5, 1), "policy");
  QNetwork<float> q2(cfg, mix_seed(5, 3), "q2");
  for (auto* p : pi.parameters()) {
    const Blob& blob = ckpt.find("policy/" + Checkpoint::local_name(p->name));
    EXPECT_TRUE(std::equal(blob.data.begin(), blob.data.end(), p->value.data())) << p->name;
  }
  for (auto* p : q2.parameters()) {
    const Blob& blob = ckpt.find("target2/" + Checkpoint::local_name(p->name));
    EXPECT_TRUE(std::equal(blob.data.begin(), blob.data.end(), p->value.data())) << p->name;
  }
}

TEST(Trainer, QminExportFollowsWindowedLoss) {
  const NetworkConfig cfg = small_config();
  const TrainingSet set = random_set(cfg, 64, 4);
  Trainer tr(cfg, small_params(), 6);
  EXPECT_EQ(tr.qmin_index(), 0);  // empty windows tie
  for (int k = 0; k < 8; ++k) tr.step(set);
  const int pick = tr.qmin_index();
  EXPECT_EQ(pick, tr.window_loss(1) < tr.window_loss(0) ? 1 : 0);

  QNetwork<float> exported = tr.export_qmin();
  const Checkpoint ckpt = qmin_checkpoint(tr);
  QNetwork<float> loaded = load_critic(ckpt, "qmin", cfg);
  std::vector<std::size_t> idx{0, 5, 9, 33};
  const auto s = set.states<float>(idx, false);
  const Matrix<float> a = set.actions<float>(idx);
  Tape<float> t;
  const Matrix<float> want = tr.critic(pick).forward(t, s, t.constant(a), false).value();
  EXPECT_EQ(exported.forward(t, s, t.constant(a), false).value(), want);
  EXPECT_EQ(loaded.forward(t, s, t.constant(a), false).value(), want);
}

TEST(Trainer, RejectsBadParameters) {
  CqlParams p;
  p.gamma = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.uniform_samples = p.policy_samples = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_THROW(Trainer(small_config(), p, 1), std::invalid_argument);
}

TEST(Trainer, PenaltyPushesDataActionsAboveUniform) {
  const NetworkConfig cfg = small_config();
  const TrainingSet set = random_set(cfg, 256, 5);
  CqlParams with = small_params(), without = small_params();
  with.batch = without.batch = 64;
  without.alpha_cql = 0.0;
  Trainer a(cfg, with, 8), b(cfg, without, 8);
  for (int k = 0; k < 300; ++k) {
    a.step(set);
    b.step(set);
  }
  QNetwork<float> qa = a.export_qmin(), qb = b.export_qmin();
  const double gap_a = conservatism_gap(qa, set, 1).gap(), gap_b = conservatism_gap(qb, set, 1).gap();
  EXPECT_GT(gap_a, 0.0);
  EXPECT_GT(gap_a, gap_b);
}

}  // namespace
}  // namespace vapor::rl
