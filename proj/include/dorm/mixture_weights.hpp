// Prior mixture weights on the simplex and posterior source weights.
//
// estimate_rho maximizes the penalized mixture log-likelihood
//   J(rho) = (1/N0) sum_i log( sum_l rho_l R_il )  -/+  lambda ||rho||^2
// over the probability simplex by projected gradient ascent with Armijo
// backtracking (uniform initialization). The default penalty sign is minus:
// the ridge term then stabilizes the solution toward the interior; the plus
// variant is kept behind a flag for comparison.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"

namespace dorm {

namespace detail {

// Euclidean projection onto {v >= 0, sum v = mass} by the sorted-threshold
// rule.
inline Eigen::VectorXd project_simplex(const Eigen::VectorXd& v, double mass) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double acc = 0.0, theta = 0.0;
  int k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    acc += u[static_cast<std::size_t>(j)];
    const double t = (acc - mass) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) {
      theta = t;
      k = static_cast<int>(j + 1);
    }
  }
  (void)k;
  return (v.array() - theta).max(0.0).matrix();
}

}  // namespace detail

struct RhoEstimate {
  Eigen::VectorXd rho;     // on the simplex
  double objective = 0.0;  // penalized log-likelihood at rho
  int iterations = 0;
};

// R holds r_l(x_i) evaluated at the target rows: N_0 x L, strictly positive.
inline RhoEstimate estimate_rho(const Eigen::MatrixXd& R, double lambda,
                                RhoPenaltySign sign = RhoPenaltySign::minus,
                                std::uint64_t seed = 0) {
  (void)seed;  // optimizer is deterministic (uniform start)
  const Eigen::Index n = R.rows(), L = R.cols();
  if (n < 1 || L < 1) throw std::invalid_argument("estimate_rho: empty R");
  if (!R.allFinite() || (R.array() <= 0.0).any())
    throw std::invalid_argument("estimate_rho: ratios must be positive");
  if (lambda < 0.0) throw std::invalid_argument("estimate_rho: lambda < 0");

  const double sgn = (sign == RhoPenaltySign::minus) ? -1.0 : 1.0;
  const double inv_n = 1.0 / static_cast<double>(n);

  const auto objective = [&](const Eigen::VectorXd& rho,
                             Eigen::VectorXd& mix) -> double {
    mix = R * rho;
    return mix.array().log().sum() * inv_n + sgn * lambda * rho.squaredNorm();
  };

  RhoEstimate est;
  est.rho = Eigen::VectorXd::Constant(L, 1.0 / static_cast<double>(L));
  Eigen::VectorXd mix;
  double obj = objective(est.rho, mix);

  double step = 1.0;
  for (int iter = 0; iter < 5000; ++iter) {
    const Eigen::VectorXd grad =
        R.transpose() * mix.cwiseInverse() * inv_n + 2.0 * sgn * lambda * est.rho;

    // Projected-gradient residual at unit step.
    const Eigen::VectorXd probe =
        detail::project_simplex(est.rho + grad, 1.0) - est.rho;
    est.iterations = iter;
    if (probe.norm() < 1e-9) break;

    bool accepted = false;
    step = std::min(step * 2.0, 1e3);
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd cand =
          detail::project_simplex(est.rho + step * grad, 1.0);
      const Eigen::VectorXd dir = cand - est.rho;
      Eigen::VectorXd cand_mix;
      const double cand_obj = objective(cand, cand_mix);
      if (cand_obj >= obj + 1e-4 * grad.dot(dir)) {
        if (cand_obj < obj - 1e-12)
          throw NumericalError("estimate_rho: objective decreased");
        est.rho = cand;
        mix = std::move(cand_mix);
        obj = cand_obj;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }

  // Active-set Newton polish: the backtracking loop stalls once objective
  // improvements fall below double resolution, so finish with guarded
  // equality-constrained Newton steps on the support. This pins the optimum
  // to machine precision (scale invariance, grid-oracle agreement).
  for (int round = 0; round < 50; ++round) {
    const Eigen::VectorXd grad_full =
        R.transpose() * mix.cwiseInverse() * inv_n + 2.0 * sgn * lambda * est.rho;
    std::vector<Eigen::Index> support;
    for (Eigen::Index l = 0; l < L; ++l)
      if (est.rho[l] > 1e-12) support.push_back(l);
    double nu = 0.0;  // simplex multiplier: common partial on the support
    for (Eigen::Index l : support) nu += grad_full[l];
    nu /= static_cast<double>(support.size());
    // Bring in any off-support coordinate whose partial beats the support's.
    bool grew = false;
    for (Eigen::Index l = 0; l < L; ++l)
      if (est.rho[l] <= 1e-12 && grad_full[l] > nu + 1e-12) {
        support.push_back(l);
        grew = true;
      }
    const Eigen::Index ns = static_cast<Eigen::Index>(support.size());
    // Reduced KKT system: [H 1; 1' 0] [d; nu] = [-g; 0].
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(ns + 1, ns + 1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ns + 1);
    const Eigen::ArrayXd inv2 = mix.array().square().inverse();
    for (Eigen::Index a = 0; a < ns; ++a) {
      for (Eigen::Index b = a; b < ns; ++b) {
        const double h = -(R.col(support[static_cast<std::size_t>(a)]).array() *
                           R.col(support[static_cast<std::size_t>(b)]).array() *
                           inv2)
                              .sum() *
                         inv_n +
                         (a == b ? 2.0 * sgn * lambda : 0.0);
        kkt(a, b) = h;
        kkt(b, a) = h;
      }
      kkt(a, ns) = 1.0;
      kkt(ns, a) = 1.0;
      rhs[a] = -grad_full[support[static_cast<std::size_t>(a)]];
    }
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(L);
    for (Eigen::Index a = 0; a < ns; ++a)
      dir[support[static_cast<std::size_t>(a)]] = sol[a];
    if (!dir.allFinite()) break;
    if (dir.lpNorm<Eigen::Infinity>() < 1e-15 && !grew) break;

    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      Eigen::VectorXd cand = (est.rho + t * dir).array().max(0.0);
      cand /= cand.sum();
      Eigen::VectorXd cand_mix;
      const double cand_obj = objective(cand, cand_mix);
      if (cand_obj >= obj) {
        if (cand_obj == obj && t < 1.0) break;
        est.rho = cand;
        mix = std::move(cand_mix);
        obj = cand_obj;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved && !grew) break;
  }

  est.objective = obj;
  return est;
}

// Posterior weight of each source at a point, given prior rho and the ratio
// values r_l(x):  eta_l = rho_l r_l / sum_k rho_k r_k.
inline Eigen::VectorXd posterior_eta(const Eigen::VectorXd& rho,
                                     const Eigen::VectorXd& r_values) {
  if (rho.size() != r_values.size())
    throw std::invalid_argument("posterior_eta: size mismatch");
  if ((r_values.array() <= 0.0).any())
    throw std::invalid_argument("posterior_eta: ratios must be positive");
  const Eigen::VectorXd num = rho.cwiseProduct(r_values);
  return num / num.sum();
}

// Callable bundling rho with a ratio evaluator; read-only and thread-safe.
struct PosteriorWeights {
  Eigen::VectorXd rho;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> ratio_eval;

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    return posterior_eta(rho, ratio_eval(x));
  }
};

}  // namespace dorm
