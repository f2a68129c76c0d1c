#include "vapor/checks.hpp"

#include <chrono>

#include "vapor/networks.hpp"
#include "vapor/oracle.hpp"

namespace vapor::checks {

namespace {

using clock = std::chrono::steady_clock;

double since(clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); }

std::vector<ProprioSample> random_window(Rng& rng, int n) {
  std::vector<ProprioSample> w(static_cast<std::size_t>(n));
  const double mix = uniform(rng, 0.0, 2.0);
  for (auto& s : w) {
    const double common = gaussian(rng);
    for (std::size_t j = 0; j < s.joints.size(); ++j) s.joints[j] = gaussian(rng, 0.3, 0.2) + 0.1 * mix * common * (j % 3);
    for (std::size_t f = 0; f < s.forces.size(); ++f) s.forces[f] = gaussian(rng, 80, 10) + 6 * mix * common * (f + 1);
    s.current = gaussian(rng, 3, 0.5) + 0.2 * mix * common;
  }
  return w;
}

ad::Matrix<double> random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  ad::Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

nn::NetworkConfig reduced(int n, bool attention) {
  nn::NetworkConfig cfg;
  cfg.grid_n = n;
  cfg.pool = 2;
  cfg.ext_hidden = 16;
  cfg.ext_out = 8;
  cfg.fusion = 16;
  cfg.attention = attention;
  cfg.head_scale = 1.0;
  return cfg;
}

}  // namespace

CheckResult cost_maps(std::uint64_t seed, int clouds, int max_points) {
  const auto t0 = clock::now();
  CheckResult r{"cost_maps", true, 0.0, Json::object()};
  PerceptParams p;
  Rng rng(seed);
  int mismatched = 0;
  double goal_err = 0.0;
  long points = 0;
  for (int i = 0; i < clouds; ++i) {
    const PointCloud cloud = oracle::random_cloud(rng, max_points, p.grid);
    points += static_cast<long>(cloud.points.size());
    const Eigen::MatrixXd raw = oracle::brute_intensity_sum(cloud, p);
    const bool ok = intensity_map(cloud, p) == oracle::rescale_intensity(raw, p) &&
                    height_map(cloud, p) == oracle::rescale_height(oracle::brute_height(cloud, p), p) &&
                    raw_intensity_map(cloud, p) == raw;
    mismatched += !ok;
    const Vec2 goal(uniform(rng, -15, 15), uniform(rng, -15, 15));
    const double total = uniform(rng, 0.5, 25);
    goal_err = std::max(goal_err, (goal_map(goal, total, p) - oracle::goal_closed_form(goal, total, p)).cwiseAbs().maxCoeff());
  }
  r.seconds = since(t0);
  r.passed = mismatched == 0 && goal_err <= 1e-9;
  r.detail = {{"clouds", clouds}, {"points", points}, {"mismatched", mismatched}, {"goal_max_error", goal_err}};
  return r;
}

CheckResult pca(std::uint64_t seed, int windows, double tolerance) {
  const auto t0 = clock::now();
  CheckResult r{"pca", true, 0.0, Json::object()};
  Rng rng(seed);
  double worst = 0.0;
  for (int i = 0; i < windows; ++i) {
    const auto w = random_window(rng, std::uniform_int_distribution<int>(16, 64)(rng));
    const StabilityVector s = stability(w);
    const auto ref = oracle::top_two_eigenvalues(oracle::standardized_covariance(w));
    worst = std::max({worst, std::abs(s.pc1 - ref[0]) / std::max(std::abs(ref[0]), 1e-300),
                      std::abs(s.pc2 - ref[1]) / std::max(std::abs(ref[1]), 1e-300)});
  }
  r.seconds = since(t0);
  r.passed = worst <= tolerance;
  r.detail = {{"windows", windows}, {"worst_relative_error", worst}, {"tolerance", tolerance}};
  return r;
}

CheckResult gradients(const std::vector<std::uint64_t>& seeds, int grid_n, double tolerance) {
  const auto t0 = clock::now();
  CheckResult r{"gradients", true, 0.0, Json::object()};
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  int failures = 0;
  auto record = [&](const oracle::GradCheckResult& g, const std::string& label) {
    checked += g.checked;
    if (g.worst > tolerance) ++failures;
    if (g.worst > worst) {
      worst = g.worst;
      worst_name = label + ":" + g.worst_name;
    }
  };
  for (std::uint64_t seed : seeds) {
    for (bool attention : {true, false}) {
      const auto cfg = reduced(grid_n, attention);
      Rng rng(mix_seed(seed, attention));
      nn::StateBatch<double> states;
      states.extero = random_matrix(rng, 4, cfg.extero_width(), 0.0, 1.0);
      states.proprio = random_matrix(rng, 4, 2, 0.0, 2.0);
      const ad::Matrix<double> actions = random_matrix(rng, 8, 3, -1.0, 1.0);
      const ad::Matrix<double> weights = random_matrix(rng, 8, 1, -1.0, 1.0);
      nn::QNetwork<double> q(cfg, seed);
      record(oracle::gradcheck(q.parameters(),
                               [&](ad::Tape<double>& t) {
                                 auto enc = q.encode(t, states);
                                 return ad::sum(q.evaluate(t, enc, t.constant(actions)) * t.constant(weights));
                               }),
             attention ? "critic" : "critic-no-attention");

      nn::PolicyNetwork<double> pi(cfg, seed);
      ad::Matrix<double> noise(4, 3);
      for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = gaussian(rng);
      const ad::Matrix<double> aw = random_matrix(rng, 4, 3, -1.0, 1.0);
      record(oracle::gradcheck(pi.parameters(),
                               [&](ad::Tape<double>& t) {
                                 const auto out = pi.forward(t, states);
                                 const auto s = nn::sample_actions(t, out, noise, cfg.bound);
                                 return ad::mean(s.log_prob) + ad::sum(s.action * t.constant(aw));
                               }),
             attention ? "actor" : "actor-no-attention");
    }
  }
  r.seconds = since(t0);
  r.passed = failures == 0;
  r.detail = {{"seeds", seeds},         {"grid_n", grid_n},   {"entries_checked", checked},
              {"failures", failures},   {"worst", worst},     {"worst_entry", worst_name},
              {"tolerance", tolerance}};
  return r;
}

Json to_json(const CheckResult& r) {
  return {{"check", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail}};
}

}  // namespace vapor::checks
