// Oracle nuisance bundles built from the simulator's known population
// quantities, shared by the DR tests and the acceptance suite. The w and eta
// oracles use the exact Gaussian density ratios (unclipped); m oracles are
// the true site conditional means, optionally perturbed to emulate
// misspecified learners.

#pragma once

#include <functional>

#include "dorm/dr_estimation.hpp"
#include "dorm/simulation.hpp"

namespace testutil {

struct OracleNuisanceOptions {
  // Additive perturbation of the conditional-mean coefficient on one
  // feature: index into x = (a, w), applied to every source.
  int m_perturb_index = -1;
  double m_perturb = 0.0;
  // Blend the oracle w toward the constant 1 (1 = fully wrong flat weights).
  double w_flatten = 0.0;
};

inline dorm::NuisanceBundle oracle_nuisances(
    const dorm::SimParams& params, const OracleNuisanceOptions& opt = {}) {
  const dorm::SimParams sp = params.resolved();
  dorm::NuisanceBundle b;
  b.rho = sp.rho_star;
  for (int l = 0; l < sp.L; ++l) {
    b.m.push_back([sp, l, opt](const Eigen::VectorXd& x) {
      const auto a = x.head(sp.q);
      const auto w = x.tail(sp.p - sp.q);
      double val = dorm::detail::site_mean(sp, l, a, w);
      if (opt.m_perturb_index >= 0) val += opt.m_perturb * x[opt.m_perturb_index];
      return val;
    });
    b.w.push_back([sp, l, opt](const Eigen::VectorXd& x) {
      const double w_true =
          dorm::oracle_w_value(sp, sp.rho_star, l, x.head(sp.q));
      return (1.0 - opt.w_flatten) * w_true + opt.w_flatten * 1.0;
    });
  }
  b.eta = [sp](const Eigen::VectorXd& x) {
    return dorm::oracle_eta(sp, sp.rho_star, x.head(sp.q));
  };
  return b;
}

}  // namespace testutil
