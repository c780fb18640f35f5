// Group-adversarial weighting over the candidate coefficient vectors.
//
// Given the Gram matrix G_{lk} = beta_l' Sigma0 beta_k over the L source
// rows plus the mixture row, the adversarial weights solve
//   min gamma' G gamma   over  S(s_max) = { gamma in simplex_{L+1},
//                                           gamma_{L+1} >= 1 - s_max }.
// The last coordinate is eliminated (gamma_{L+1} = 1 - sum g) and the first
// L coordinates live in the capped simplex {g >= 0, sum g <= s_max}, solved
// by projected gradient descent with an exact Euclidean projection.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dorm/dr_estimation.hpp"
#include "dorm/errors.hpp"
#include "dorm/mixture_weights.hpp"
#include "dorm/rng.hpp"

namespace dorm {

struct GammaMatrix {
  Eigen::MatrixXd G;  // (L+1) x (L+1), symmetric PSD

  Eigen::Index size() const { return G.rows(); }
};

// Exact Gram computation, with symmetry enforced by averaging G and G'.
inline GammaMatrix compute_gamma_matrix(const BetaSet& betas) {
  GammaMatrix gm;
  const Eigen::MatrixXd raw = betas.betas * betas.sigma0 * betas.betas.transpose();
  gm.G = 0.5 * (raw + raw.transpose());
  return gm;
}

// Euclidean projection onto {g : g_l >= 0, sum_l g_l <= cap} via the sorted
// threshold rule: clamp negatives when the positive mass fits, otherwise
// project onto the mass-cap face.
inline Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v,
                                              double cap) {
  if (!(cap >= 0.0 && cap <= 1.0))
    throw std::invalid_argument("project_capped_simplex: cap outside [0,1]");
  const Eigen::VectorXd clamped = v.array().max(0.0).matrix();
  if (clamped.sum() <= cap) return clamped;
  return detail::project_simplex(v, cap);
}

struct AdversarialWeights {
  Eigen::VectorXd gamma;  // length L+1
  double s_max = 0.0;
  double objective = 0.0;  // gamma' G gamma
};

namespace detail {

struct ReducedQuadratic {
  // f(g) = gamma' G gamma with gamma = (g, 1 - sum g).
  const Eigen::MatrixXd& G;
  Eigen::Index L;

  Eigen::VectorXd lift(const Eigen::VectorXd& g) const {
    Eigen::VectorXd gamma(L + 1);
    gamma.head(L) = g;
    gamma[L] = 1.0 - g.sum();
    return gamma;
  }

  double value(const Eigen::VectorXd& g) const {
    const Eigen::VectorXd gamma = lift(g);
    return gamma.dot(G * gamma);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& g) const {
    const Eigen::VectorXd gg = G * lift(g);
    return 2.0 * (gg.head(L).array() - gg[L]).matrix();
  }

  // Hessian of the reduced objective (constant).
  Eigen::MatrixXd hessian() const {
    Eigen::MatrixXd H(L, L);
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = 0; j < L; ++j)
        H(i, j) = 2.0 * (G(i, j) - G(i, L) - G(L, j) + G(L, L));
    return H;
  }
};

inline Eigen::VectorXd pgd_minimize(const ReducedQuadratic& f, double cap,
                                    double step, Eigen::VectorXd g) {
  for (int iter = 0; iter < 20000; ++iter) {
    const Eigen::VectorXd next =
        project_capped_simplex(g - step * f.gradient(g), cap);
    const double residual = (next - g).norm() / step;
    g = next;
    if (residual < 1e-10) break;
  }
  return g;
}

}  // namespace detail

// Solves min_{gamma in S(s_max)} gamma' G gamma. Deterministic: the
// uniform-feasible start is returned whenever it matches the best of 20
// seeded random restarts to 1e-8 in objective.
inline AdversarialWeights solve_weights(const GammaMatrix& gm, double s_max) {
  const Eigen::Index L1 = gm.size();
  if (L1 < 1) throw std::invalid_argument("solve_weights: empty G");
  const Eigen::Index L = L1 - 1;
  const double cap = std::clamp(s_max, 0.0, 1.0);

  AdversarialWeights out;
  out.s_max = s_max;
  if (L == 0 || cap == 0.0) {
    out.gamma = Eigen::VectorXd::Zero(L1);
    out.gamma[L] = 1.0;
    out.objective = gm.G(L, L);
    return out;
  }

  const detail::ReducedQuadratic f{gm.G, L};
  // Step from the reduced Hessian so descent is monotone for any G.
  const Eigen::MatrixXd H = f.hessian();
  double hnorm = 0.0;
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H,
                                                      Eigen::EigenvaluesOnly);
    hnorm = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  const double step = 1.0 / std::max(2.0 * hnorm, 1e-12);

  const Eigen::VectorXd g_uniform = Eigen::VectorXd::Constant(
      L, std::min(cap / static_cast<double>(L),
                  1.0 / static_cast<double>(L + 1)));
  const Eigen::VectorXd g_main = detail::pgd_minimize(f, cap, step, g_uniform);
  const double obj_main = f.value(g_main);

  Eigen::VectorXd g_best = g_main;
  double obj_best = obj_main;
  for (int r = 0; r < 20; ++r) {
    Rng rng = Rng::derive(0x9D0u, static_cast<std::uint64_t>(r));
    Eigen::VectorXd g0 = rng.simplex(static_cast<int>(L)) *
                         (cap * rng.uniform());
    const Eigen::VectorXd g = detail::pgd_minimize(f, cap, step, g0);
    const double obj = f.value(g);
    if (obj < obj_best - 1e-12) {
      obj_best = obj;
      g_best = g;
    } else if (std::abs(obj - obj_best) <= 1e-12 &&
               std::lexicographical_compare(g.data(), g.data() + L,
                                            g_best.data(), g_best.data() + L)) {
      g_best = g;
    }
  }

  const Eigen::VectorXd g_final =
      (obj_main <= obj_best + 1e-8) ? g_main : g_best;
  out.gamma = f.lift(g_final);
  out.objective = f.value(g_final);
  return out;
}

struct ConditionFlags {
  bool gamma_near_singular = false;
  double gamma_min_eigenvalue = 0.0;
  double gamma_trace = 0.0;
};

inline ConditionFlags gamma_condition(const GammaMatrix& gm) {
  ConditionFlags flags;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gm.G,
                                                    Eigen::EigenvaluesOnly);
  flags.gamma_min_eigenvalue = es.eigenvalues().minCoeff();
  flags.gamma_trace = gm.G.trace();
  flags.gamma_near_singular =
      flags.gamma_min_eigenvalue < 1e-10 * flags.gamma_trace;
  return flags;
}

struct FoldFit {
  BetaSet betas;
  AdversarialWeights weights;
};

struct DormModel {
  Eigen::VectorXd coef;
  AdversarialWeights gamma;   // single-fit weights, or fold average
  RhoEstimate rho;
  double s_max = 0.0;
  GammaMatrix gamma_matrix;
  ConditionFlags condition;
  BetaSet betas;              // full-sample or fold-averaged rows
  std::vector<FoldFit> folds; // empty without cross-fitting, else two
};

// Final coefficient from one BetaSet and its solved weights.
inline DormModel assemble(const BetaSet& betas, const AdversarialWeights& w,
                          const RhoEstimate& rho) {
  if (w.gamma.size() != betas.betas.rows())
    throw std::invalid_argument("assemble: weight/beta size mismatch");
  DormModel model;
  model.coef = betas.betas.transpose() * w.gamma;
  model.gamma = w;
  model.rho = rho;
  model.s_max = w.s_max;
  model.gamma_matrix = compute_gamma_matrix(betas);
  model.condition = gamma_condition(model.gamma_matrix);
  model.betas = betas;
  return model;
}

// Cross-fitted assembly: coef = sum_l (gamma^A_l beta^A_l +
// gamma^B_l beta^B_l) / 2, with per-fold weights solved on matching
// BetaSets.
inline DormModel assemble_cross_fit(const BetaSet& fold_a,
                                    const AdversarialWeights& wa,
                                    const BetaSet& fold_b,
                                    const AdversarialWeights& wb,
                                    const BetaSet& averaged,
                                    const RhoEstimate& rho) {
  if (fold_a.fold_tag != FoldTag::fold_a || fold_b.fold_tag != FoldTag::fold_b)
    throw std::invalid_argument("assemble_cross_fit: fold mismatch");
  if (wa.gamma.size() != fold_a.betas.rows() ||
      wb.gamma.size() != fold_b.betas.rows() || wa.s_max != wb.s_max)
    throw std::invalid_argument("assemble_cross_fit: fold mismatch");
  DormModel model;
  model.coef = 0.5 * (fold_a.betas.transpose() * wa.gamma +
                      fold_b.betas.transpose() * wb.gamma);
  model.gamma = wa;
  model.gamma.gamma = 0.5 * (wa.gamma + wb.gamma);
  model.gamma.objective = 0.5 * (wa.objective + wb.objective);
  model.rho = rho;
  model.s_max = wa.s_max;
  model.gamma_matrix = compute_gamma_matrix(averaged);
  model.condition = gamma_condition(model.gamma_matrix);
  model.betas = averaged;
  model.folds = {FoldFit{fold_a, wa}, FoldFit{fold_b, wb}};
  return model;
}

struct Baselines {
  Eigen::VectorXd simple_ave;
  Eigen::VectorXd rho_ave;
  Eigen::VectorXd maximin;
};

// Benchmark aggregations of the same candidate rows: the plain average, the
// rho-weighted average, and pure maximin (s_max = 1).
inline Baselines baselines(const BetaSet& betas, const Eigen::VectorXd& rho) {
  const Eigen::Index L = betas.n_sources();
  if (rho.size() != L) throw std::invalid_argument("baselines: rho size");
  Baselines out;
  out.simple_ave =
      betas.betas.topRows(L).colwise().mean().transpose();
  out.rho_ave = betas.betas.topRows(L).transpose() * rho;
  const GammaMatrix gm = compute_gamma_matrix(betas);
  const AdversarialWeights w1 = solve_weights(gm, 1.0);
  out.maximin = betas.betas.transpose() * w1.gamma;
  return out;
}

}  // namespace dorm
