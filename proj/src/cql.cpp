#include "vapor/cql.hpp"

#include <iomanip>
#include <numeric>
#include <sstream>

namespace vapor::rl {

void CqlParams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (!(alpha_cql >= 0.0)) throw std::invalid_argument("alpha_cql must be non-negative");
  if (batch <= 0) throw std::invalid_argument("batch must be positive");
  if (!(lr_actor > 0.0 && lr_critic > 0.0 && lr_alpha > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (uniform_samples < 0 || policy_samples < 0 || samples() == 0) throw std::invalid_argument("need at least one penalty sample");
  if (window <= 0) throw std::invalid_argument("window must be positive");
  if (!(init_alpha > 0.0)) throw std::invalid_argument("initial temperature must be positive");
}

void write_log_header(std::ostream& out) { out << "step,loss1,loss2,actor,alpha,q_data,q_rand\n"; }

void write_log_row(std::ostream& out, const StepLog& r) {
  out << r.step << std::setprecision(9) << ',' << r.loss1 << ',' << r.loss2 << ',' << r.actor << ',' << r.alpha << ','
      << r.q_data << ',' << r.q_rand << '\n';
}

namespace {

Matrix<float> normal(Rng& rng, Eigen::Index rows) {
  Matrix<float> m(rows, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(gaussian(rng));
  return m;
}

Matrix<float> uniform_actions(Rng& rng, Eigen::Index rows, const Action& bound) {
  Matrix<float> m(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = static_cast<float>(uniform(rng, -bound[c], bound[c]));
  }
  return m;
}

bool finite(const Var<float>& v) { return std::isfinite(v.scalar()); }

double mean_of(const std::deque<double>& d) {
  return d.empty() ? 0.0 : std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

void save_adam(Checkpoint& ckpt, const std::string& name, Adam<float>& opt) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    ckpt.add_matrix("adam/" + name + "/m/" + std::to_string(i), opt.first_moments()[i]);
    ckpt.add_matrix("adam/" + name + "/v/" + std::to_string(i), opt.second_moments()[i]);
  }
}

void load_adam(const Checkpoint& ckpt, const std::string& name, Adam<float>& opt, long steps) {
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    ckpt.read_matrix("adam/" + name + "/m/" + std::to_string(i), opt.first_moments()[i]);
    ckpt.read_matrix("adam/" + name + "/v/" + std::to_string(i), opt.second_moments()[i]);
  }
  opt.set_steps(steps);
}

}  // namespace

Trainer::Trainer(const NetworkConfig& network, const CqlParams& params, std::uint64_t seed)
    : network_(network),
      params_(params),
      policy_(network, mix_seed(seed, 1), "policy"),
      q1_(network, mix_seed(seed, 2), "q1"),
      q2_(network, mix_seed(seed, 3), "q2"),
      target1_(q1_),
      target2_(q2_),
      log_alpha_("log_alpha", Matrix<float>::Constant(1, 1, static_cast<float>(std::log(params.init_alpha)))),
      rng_(mix_seed(seed, 4)) {
  params.validate();
  actor_opt_ = Adam<float>(policy_.parameters(), params.lr_actor);
  critic1_opt_ = Adam<float>(q1_.parameters(), params.lr_critic);
  critic2_opt_ = Adam<float>(q2_.parameters(), params.lr_critic);
  alpha_opt_ = Adam<float>({&log_alpha_}, params.lr_alpha);
}

StepLog Trainer::step(const TrainingSet& data) {
  if (data.size() == 0) throw std::invalid_argument("training set is empty");
  const auto batch = static_cast<std::size_t>(params_.batch);
  std::vector<std::size_t> idx(batch);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  for (auto& i : idx) i = pick(rng_);
  const Batch<float> b = make_batch<float>(data, idx);
  const auto rows = static_cast<Eigen::Index>(batch);
  const float alpha = std::exp(log_alpha_.value(0, 0));

  const Matrix<float> next_noise = normal(rng_, rows);
  const Matrix<float> uniform = uniform_actions(rng_, rows * params_.uniform_samples, network_.bound);
  const Matrix<float> penalty_noise = normal(rng_, rows * params_.policy_samples);
  const Matrix<float> actor_noise = normal(rng_, rows);

  const Matrix<float> y =
      bellman_target(policy_, target1_, target2_, b, next_noise, alpha, static_cast<float>(params_.gamma));
  const PenaltySamples<float> samples = penalty_samples(policy_, b.s, uniform, penalty_noise);

  Tape<float> t1, t2;
  const auto c1 = critic_loss(t1, q1_, b, y, samples, static_cast<float>(params_.alpha_cql));
  const auto c2 = critic_loss(t2, q2_, b, y, samples, static_cast<float>(params_.alpha_cql));
  if (!finite(c1.loss) || !finite(c2.loss)) {
    std::ostringstream msg;
    msg << "non-finite critic loss at step " << step_ << ": " << c1.loss.scalar() << ", " << c2.loss.scalar()
        << " (bellman " << c1.bellman.scalar() << ", " << c2.bellman.scalar() << ")";
    throw NonFiniteLoss(msg.str());
  }
  critic1_opt_.zero_grad();
  t1.backward(c1.loss);
  critic1_opt_.step();
  critic2_opt_.zero_grad();
  t2.backward(c2.loss);
  critic2_opt_.step();

  Tape<float> ta;
  const auto a = actor_loss(ta, policy_, q1_, q2_, b.s, actor_noise, alpha);
  if (!finite(a.loss)) {
    throw NonFiniteLoss("non-finite actor loss at step " + std::to_string(step_));
  }
  actor_opt_.zero_grad();
  ta.backward(a.loss);
  actor_opt_.step();

  alpha_opt_.zero_grad();
  log_alpha_.grad(0, 0) = temperature_gradient(a.log_prob, params_.target_entropy);
  alpha_opt_.step();

  polyak(q1_, target1_, params_.tau);
  polyak(q2_, target2_, params_.tau);

  StepLog log;
  log.step = ++step_;
  log.loss1 = c1.loss.scalar();
  log.loss2 = c2.loss.scalar();
  log.actor = a.loss.scalar();
  log.alpha = alpha;
  log.q_data = static_cast<double>(c1.q_data.cwiseMin(c2.q_data).mean());
  const Eigen::Index mu = params_.uniform_samples;
  if (mu > 0) {
    log.q_rand = static_cast<double>(c1.q_scored.leftCols(mu).cwiseMin(c2.q_scored.leftCols(mu)).mean());
  }

  recent1_.push_back(log.loss1);
  recent2_.push_back(log.loss2);
  while (static_cast<int>(recent1_.size()) > params_.window) recent1_.pop_front();
  while (static_cast<int>(recent2_.size()) > params_.window) recent2_.pop_front();
  return log;
}

double Trainer::window_loss(int critic) const { return mean_of(critic == 0 ? recent1_ : recent2_); }

int Trainer::qmin_index() const { return window_loss(1) < window_loss(0) ? 1 : 0; }

QNetwork<float> Trainer::export_qmin() const { return qmin_index() == 0 ? q1_ : q2_; }

Checkpoint Trainer::checkpoint() const {
  auto& self = const_cast<Trainer&>(*this);
  Checkpoint ckpt;
  ckpt.add("policy", self.policy_.parameters());
  ckpt.add("q1", self.q1_.parameters());
  ckpt.add("q2", self.q2_.parameters());
  ckpt.add("target1", self.target1_.parameters());
  ckpt.add("target2", self.target2_.parameters());
  ckpt.add_matrix("log_alpha", log_alpha_.value);
  save_adam(ckpt, "actor", self.actor_opt_);
  save_adam(ckpt, "critic1", self.critic1_opt_);
  save_adam(ckpt, "critic2", self.critic2_opt_);
  save_adam(ckpt, "alpha", self.alpha_opt_);
  std::ostringstream rng;
  rng << rng_;
  ckpt.meta["training"] = {{"step", step_},
                           {"rng", rng.str()},
                           {"recent_loss1", std::vector<double>(recent1_.begin(), recent1_.end())},
                           {"recent_loss2", std::vector<double>(recent2_.begin(), recent2_.end())},
                           {"qmin", qmin_index() == 0 ? "q1" : "q2"}};
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  ckpt.restore("policy", policy_.parameters());
  ckpt.restore("q1", q1_.parameters());
  ckpt.restore("q2", q2_.parameters());
  ckpt.restore("target1", target1_.parameters());
  ckpt.restore("target2", target2_.parameters());
  ckpt.read_matrix("log_alpha", log_alpha_.value);
  const Json& tr = ckpt.meta.at("training");
  step_ = tr.at("step").get<long>();
  load_adam(ckpt, "actor", actor_opt_, step_);
  load_adam(ckpt, "critic1", critic1_opt_, step_);
  load_adam(ckpt, "critic2", critic2_opt_, step_);
  load_adam(ckpt, "alpha", alpha_opt_, step_);
  std::istringstream rng(tr.at("rng").get<std::string>());
  rng >> rng_;
  const auto r1 = tr.at("recent_loss1").get<std::vector<double>>();
  const auto r2 = tr.at("recent_loss2").get<std::vector<double>>();
  recent1_.assign(r1.begin(), r1.end());
  recent2_.assign(r2.begin(), r2.end());
}

QGap conservatism_gap(QNetwork<float>& q, const TrainingSet& data, std::uint64_t seed, int batch) {
  if (data.size() == 0) throw std::invalid_argument("held-out set is empty");
  Rng rng(seed);
  QGap out;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto s = data.states<float>(idx, false);
    const Eigen::Index rows = static_cast<Eigen::Index>(idx.size());
    Matrix<float> actions(2 * rows, 3);
    const Matrix<float> data_actions = data.actions<float>(idx);
    const Matrix<float> random = uniform_actions(rng, rows, q.config().bound);
    for (Eigen::Index r = 0; r < rows; ++r) {
      actions.row(2 * r) = data_actions.row(r);
      actions.row(2 * r + 1) = random.row(r);
    }
    Tape<float> t;
    const Matrix<float> v = q.forward(t, s, t.constant(std::move(actions)), false).value();
    for (Eigen::Index r = 0; r < rows; ++r) {
      out.q_data += v(2 * r, 0);
      out.q_uniform += v(2 * r + 1, 0);
    }
  }
  out.q_data /= static_cast<double>(data.size());
  out.q_uniform /= static_cast<double>(data.size());
  return out;
}

QNetwork<float> load_critic(const Checkpoint& ckpt, const std::string& prefix, const NetworkConfig& network) {
  QNetwork<float> q(network, 0, "qmin");
  ckpt.restore(prefix, q.parameters());
  return q;
}

Checkpoint qmin_checkpoint(const Trainer& trainer) {
  Checkpoint ckpt;
  QNetwork<float> q = trainer.export_qmin();
  ckpt.add("qmin", q.parameters());
  ckpt.meta["qmin"] = {{"source", trainer.qmin_index() == 0 ? "q1" : "q2"},
                       {"window_loss", {trainer.window_loss(0), trainer.window_loss(1)}},
                       {"step", trainer.steps()}};
  return ckpt;
}

}  // namespace vapor::rl
