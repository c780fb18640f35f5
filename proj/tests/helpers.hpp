// Shared test utilities: independent brute-force oracles (grid searches,
// gradient-descent references) and small statistics helpers. Everything here
// deliberately avoids the library's own solver paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dorm/rng.hpp"

namespace testutil {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Max of the penalized mixture log-likelihood over a simplex grid with
// roughly `target_points` points (composition enumeration). Blocked float
// evaluation keeps the cost manageable; float rounding perturbs the mean of
// logs by far less than the tolerances used against it.
inline double simplex_grid_max_objective(const Eigen::MatrixXd& R,
                                         double lambda, double penalty_sign,
                                         long target_points,
                                         Eigen::VectorXd* argmax = nullptr) {
  const int L = static_cast<int>(R.cols());
  // Find a resolution m with C(m+L-1, L-1) >= target_points.
  int m = 1;
  auto count = [&](int mm) {
    double c = 1.0;
    for (int i = 1; i < L; ++i)
      c *= static_cast<double>(mm + i) / static_cast<double>(i);
    return c;
  };
  while (count(m) < static_cast<double>(target_points)) ++m;

  // Enumerate compositions of m into L parts.
  std::vector<Eigen::VectorXd> grid;
  Eigen::VectorXd comp = Eigen::VectorXd::Zero(L);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == L - 1) {
      comp[pos] = left;
      grid.push_back(comp / static_cast<double>(m));
      return;
    }
    for (int v = 0; v <= left; ++v) {
      comp[pos] = v;
      rec(pos + 1, left - v);
    }
  };
  rec(0, m);

  const Eigen::MatrixXf Rf = R.cast<float>();
  const float inv_n = 1.0f / static_cast<float>(R.rows());
  double best = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_rho;
  const std::size_t block = 2048;
  for (std::size_t at = 0; at < grid.size(); at += block) {
    const std::size_t nb = std::min(block, grid.size() - at);
    Eigen::MatrixXf P(L, static_cast<Eigen::Index>(nb));
    for (std::size_t j = 0; j < nb; ++j)
      P.col(static_cast<Eigen::Index>(j)) = grid[at + j].cast<float>();
    const Eigen::MatrixXf mix = Rf * P;  // rows x nb
    for (std::size_t j = 0; j < nb; ++j) {
      const float loglik =
          mix.col(static_cast<Eigen::Index>(j)).array().log().sum() * inv_n;
      const double obj = static_cast<double>(loglik) +
                         penalty_sign * lambda * grid[at + j].squaredNorm();
      if (obj > best) {
        best = obj;
        best_rho = grid[at + j];
      }
    }
  }
  if (argmax) *argmax = best_rho;
  return best;
}

// Min of gamma' G gamma over S(s_max) by staged grid refinement on the L
// free coordinates (g >= 0, sum g <= cap, gamma_{L+1} = 1 - sum g). Each
// stage enumerates about `points_per_stage` grid points, then zooms into a
// box around the incumbent.
inline double capped_simplex_grid_min(const Eigen::MatrixXd& G, double cap,
                                      long points_per_stage, int stages,
                                      Eigen::VectorXd* argmin = nullptr) {
  const int L = static_cast<int>(G.rows()) - 1;
  const auto objective = [&](const Eigen::VectorXd& g) {
    Eigen::VectorXd gamma(L + 1);
    gamma.head(L) = g;
    gamma[L] = 1.0 - g.sum();
    return gamma.dot(G * gamma);
  };

  const int per_axis = std::max(
      2, static_cast<int>(std::floor(std::pow(
             static_cast<double>(points_per_stage), 1.0 / std::max(1, L)))));

  Eigen::VectorXd lo = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(L, cap);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_g = Eigen::VectorXd::Zero(L);

  for (int stage = 0; stage < stages; ++stage) {
    Eigen::VectorXd g(L);
    std::vector<int> idx(static_cast<std::size_t>(L), 0);
    bool done = false;
    while (!done) {
      for (int j = 0; j < L; ++j)
        g[j] = lo[j] + (hi[j] - lo[j]) * static_cast<double>(idx[
                   static_cast<std::size_t>(j)]) /
                   static_cast<double>(per_axis - 1);
      double total = g.sum();
      if (total <= cap + 1e-12) {
        const double obj = objective(g);
        if (obj < best) {
          best = obj;
          best_g = g;
        }
      } else {
        // Also probe the projection of this point onto the cap face so the
        // boundary gets grid coverage.
        Eigen::VectorXd gs = g * (cap / total);
        const double obj = objective(gs);
        if (obj < best) {
          best = obj;
          best_g = gs;
        }
      }
      // odometer increment
      int pos = 0;
      while (pos < L) {
        if (++idx[static_cast<std::size_t>(pos)] < per_axis) break;
        idx[static_cast<std::size_t>(pos)] = 0;
        ++pos;
      }
      done = (pos == L);
    }
    // zoom
    const double width = (hi - lo).maxCoeff() * 2.5 /
                         static_cast<double>(per_axis - 1);
    for (int j = 0; j < L; ++j) {
      lo[j] = std::max(0.0, best_g[j] - width);
      hi[j] = std::min(cap, best_g[j] + width);
    }
  }
  if (argmin) *argmin = best_g;
  return best;
}

// Plain gradient descent with backtracking, used as an independent check of
// convex objectives.
inline Eigen::VectorXd gradient_descent(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
    Eigen::VectorXd x, int iters = 2000) {
  double fx = f(x);
  double step = 1.0;
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd g = grad(x);
    if (g.norm() < 1e-11) break;
    step = std::min(step * 2.0, 1e3);
    bool ok = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd cand = x - step * g;
      const double fc = f(cand);
      if (fc <= fx - 1e-4 * step * g.squaredNorm()) {
        x = cand;
        fx = fc;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) break;
  }
  return x;
}

}  // namespace testutil
