#pragma once

// Independent reference implementations, shared by the tests and the `oracle` command.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vapor/autodiff.hpp"
#include "vapor/percept.hpp"

namespace vapor::oracle {

inline PointCloud random_cloud(Rng& rng, int max_points, const GridSpec& g) {
  PointCloud cloud;
  const int count = std::uniform_int_distribution<int>(0, max_points)(rng);
  const double half = g.extent() / 2;
  cloud.points.reserve(count);
  for (int i = 0; i < count; ++i) {
    double x = uniform(rng, -half - 1, half + 1);
    double y = uniform(rng, -half - 1, half + 1);
    // A quarter of the points sit exactly on cell edges.
    if (uniform(rng, 0, 1) < 0.25) x = std::round(x / g.beta) * g.beta;
    if (uniform(rng, 0, 1) < 0.25) y = std::round(y / g.beta) * g.beta;
    cloud.points.emplace_back(static_cast<float>(x), static_cast<float>(y),
                              static_cast<float>(uniform(rng, -0.3, 2.5)), static_cast<float>(uniform(rng, 0, 255)));
  }
  return cloud;
}

inline bool in_cell(double v, int idx, const GridSpec& g) {
  const double lo = (idx - g.n / 2) * g.beta;
  return v >= lo && v < lo + g.beta;
}

inline bool kept(const Eigen::Vector4f& p, const PerceptParams& params) {
  return p.z() >= params.ground_floor && p.z() <= params.height_cap;
}

inline Eigen::MatrixXd brute_intensity_sum(const PointCloud& cloud, const PerceptParams& params) {
  const GridSpec& g = params.grid;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.n, g.n);
  for (int l = 0; l < g.n; ++l) {
    for (int m = 0; m < g.n; ++m) {
      double sum = 0.0;
      for (const auto& p : cloud.points) {
        if (kept(p, params) && in_cell(p.x(), l, g) && in_cell(p.y(), m, g)) sum += p.w();
      }
      out(l, m) = sum / (g.beta * g.beta);
    }
  }
  return out;
}

inline Eigen::MatrixXd brute_height(const PointCloud& cloud, const PerceptParams& params) {
  const GridSpec& g = params.grid;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.n, g.n);
  for (int l = 0; l < g.n; ++l) {
    for (int m = 0; m < g.n; ++m) {
      bool any = false;
      double best = 0.0;
      for (const auto& p : cloud.points) {
        if (!kept(p, params) || !in_cell(p.x(), l, g) || !in_cell(p.y(), m, g)) continue;
        best = any ? std::max(best, static_cast<double>(p.z())) : p.z();
        any = true;
      }
      out(l, m) = best;
    }
  }
  return out;
}

inline Eigen::MatrixXd rescale_intensity(const Eigen::MatrixXd& raw, const PerceptParams& params) {
  const double cap = params.max_intensity / (params.grid.beta * params.grid.beta);
  return raw.unaryExpr([cap](double v) { return 100.0 * std::min(v / cap, 1.0); });
}

inline Eigen::MatrixXd rescale_height(const Eigen::MatrixXd& raw, const PerceptParams& params) {
  const double cap = params.height_cap;
  return raw.unaryExpr([cap](double z) { return 100.0 * std::clamp(z, 0.0, cap) / cap; });
}

inline Eigen::MatrixXd goal_closed_form(const Vec2& goal, double total, const PerceptParams& params) {
  const GridSpec& g = params.grid;
  Eigen::MatrixXd out(g.n, g.n);
  for (int l = 0; l < g.n; ++l) {
    for (int m = 0; m < g.n; ++m) {
      const double dx = goal.x() - (l - g.n / 2) * g.beta;
      const double dy = goal.y() - (m - g.n / 2) * g.beta;
      out(l, m) = std::clamp(params.goal_weight * std::sqrt(dx * dx + dy * dy) / total, 0.0, 100.0);
    }
  }
  return out;
}

inline Eigen::MatrixXd standardized_covariance(std::span<const ProprioSample> window) {
  const int n = static_cast<int>(window.size());
  Eigen::MatrixXd z(n, kProprioChannels);
  for (int c = 0; c < kProprioChannels; ++c) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += window[i].vector()[c];
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += std::pow(window[i].vector()[c] - mean, 2);
    const double sd = std::sqrt(ss / (n - 1));
    for (int i = 0; i < n; ++i) {
      z(i, c) = sd <= 1e-12 * std::max(1.0, std::abs(mean)) ? 0.0 : (window[i].vector()[c] - mean) / sd;
    }
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kProprioChannels, kProprioChannels);
  for (int a = 0; a < kProprioChannels; ++a) {
    for (int b = 0; b < kProprioChannels; ++b) {
      for (int i = 0; i < n; ++i) cov(a, b) += z(i, a) * z(i, b);
      cov(a, b) /= n - 1;
    }
  }
  return cov;
}

// Cyclic Jacobi rotations until the off-diagonal mass vanishes.
inline std::array<double, 2> top_two_eigenvalues(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> d(n);
  for (int i = 0; i < n; ++i) d[i] = a(i, i);
  std::sort(d.rbegin(), d.rend());
  return {std::max(d[0], 0.0), std::max(d[1], 0.0)};
}

struct GradCheckResult {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Compares tape gradients of `loss` with central differences over every entry
/// of every parameter. `loss` must rebuild the graph on the tape it is given.
inline GradCheckResult gradcheck(std::vector<ad::Parameter<double>*> params,
                                 const std::function<ad::Var<double>(ad::Tape<double>&)>& loss, double eps = 1e-5,
                                 double floor = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    ad::Tape<double> t;
    t.backward(loss(t));
  }
  auto eval = [&] {
    ad::Tape<double> t;
    return loss(t).scalar();
  };
  GradCheckResult r;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double up = eval();
      x = saved - eps;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), floor});
      ++r.checked;
      if (rel > r.worst) {
        r.worst = rel;
        r.worst_name = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace vapor::oracle
