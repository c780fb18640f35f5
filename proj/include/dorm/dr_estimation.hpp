// Plug-in and doubly robust coefficient estimators.
//
// With Sigma0 = (1/N0) sum_i A_i A_i' on the target and nuisance models
// m_l (conditional mean of Y given X on source l), w_l (target/source
// density ratio) and eta_l (posterior source weights), the estimators are
//
//   plugin:   b_l   = Sigma0^{-1} (1/N0) sum_i m_l(X_i^0) A_i^0
//   DR:       bh_l  = b_l + Sigma0^{-1} (1/n_l) sum_i w_l(X_i^l)
//                             (Y_i - m_l(X_i^l)) A_i^l
// and the mixture rows use eta_l-weighted versions summed over sources.
// cross_fit partitions every source in half, refits all nuisances per fold,
// and evaluates each fold's labeled moments with the other fold's nuisances.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dorm/data.hpp"
#include "dorm/density_ratio.hpp"
#include "dorm/errors.hpp"
#include "dorm/mixture_weights.hpp"
#include "dorm/regressors.hpp"
#include "dorm/rng.hpp"

namespace dorm {

// Nuisance models as plain callables so that fitted models and analytic
// oracles share one interface.
struct NuisanceBundle {
  std::vector<std::function<double(const Eigen::VectorXd&)>> m;  // size L
  std::vector<std::function<double(const Eigen::VectorXd&)>> w;  // size L
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> eta;    // length-L
  Eigen::VectorXd rho;

  std::size_t n_sources() const { return m.size(); }
};

enum class FoldTag { full, fold_a, fold_b, averaged };

struct BetaSet {
  // Rows 0..L-1 are the per-source coefficients, row L is the mixture row.
  Eigen::MatrixXd betas;        // (L+1) x q
  Eigen::MatrixXd sigma0;       // q x q, jittered target second moment
  FoldTag fold_tag = FoldTag::full;
  // Per-source contributions whose column sums reproduce the mixture row.
  Eigen::MatrixXd mix_contrib;  // L x q

  Eigen::Index n_sources() const { return betas.rows() - 1; }
  Eigen::VectorXd mix_row() const { return betas.row(betas.rows() - 1); }
};

namespace detail {

// Target second moment with a relative ridge jitter on the diagonal.
inline Eigen::MatrixXd jittered_sigma0(const TargetDataset& target) {
  const double n0 = static_cast<double>(target.n_rows());
  Eigen::MatrixXd S = target.A.transpose() * target.A / n0;
  const double jitter = 1e-8 * S.trace() / static_cast<double>(S.cols());
  S.diagonal().array() += jitter;
  return S;
}

struct Sigma0Solver {
  Eigen::MatrixXd sigma0;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;

  explicit Sigma0Solver(const TargetDataset& target)
      : sigma0(jittered_sigma0(target)), ldlt(sigma0) {
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("singular target second moment");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = ldlt.solve(v);
    if (!out.allFinite())
      throw NumericalError("singular target second moment");
    return out;
  }
};

}  // namespace detail

// Plug-in rows: beta_l from the target moment of m_l(X) A, and the mixture
// row from the eta-weighted sum.
inline BetaSet plugin_betas(const TargetDataset& target,
                            const NuisanceBundle& nuis) {
  const Eigen::Index L = static_cast<Eigen::Index>(nuis.n_sources());
  const Eigen::Index q = target.A.cols();
  const Eigen::Index n0 = target.n_rows();
  const detail::Sigma0Solver solver(target);

  Eigen::MatrixXd moments = Eigen::MatrixXd::Zero(L, q);
  Eigen::MatrixXd mix_moments = Eigen::MatrixXd::Zero(L, q);
  for (Eigen::Index i = 0; i < n0; ++i) {
    const Eigen::VectorXd x = target.x_row(i);
    const auto a = target.A.row(i);
    const Eigen::VectorXd eta = nuis.eta(x);
    for (Eigen::Index l = 0; l < L; ++l) {
      const double ml = nuis.m[static_cast<std::size_t>(l)](x);
      moments.row(l) += ml * a;
      mix_moments.row(l) += eta[l] * ml * a;
    }
  }
  moments /= static_cast<double>(n0);
  mix_moments /= static_cast<double>(n0);

  BetaSet out;
  out.sigma0 = solver.sigma0;
  out.fold_tag = FoldTag::full;
  out.betas.resize(L + 1, q);
  out.mix_contrib.resize(L, q);
  for (Eigen::Index l = 0; l < L; ++l) {
    out.betas.row(l) = solver.solve(moments.row(l).transpose()).transpose();
    out.mix_contrib.row(l) =
        solver.solve(mix_moments.row(l).transpose()).transpose();
  }
  out.betas.row(L) = out.mix_contrib.colwise().sum();
  return out;
}

namespace detail {

// Labeled-sample correction moments, optionally restricted to a subset of
// labeled rows (used by cross-fitting).
struct CorrectionMoments {
  Eigen::MatrixXd per_source;  // L x q: w_l (Y - m_l) A
  Eigen::MatrixXd mixture;     // L x q: eta_l w_l (Y - m_l) A
};

inline CorrectionMoments correction_moments(
    const std::vector<SourceDataset>& sources, const NuisanceBundle& nuis,
    const std::vector<std::vector<int>>* labeled_subsets) {
  const Eigen::Index L = static_cast<Eigen::Index>(sources.size());
  const Eigen::Index q = sources.front().A.cols();
  CorrectionMoments cm;
  cm.per_source = Eigen::MatrixXd::Zero(L, q);
  cm.mixture = Eigen::MatrixXd::Zero(L, q);

  for (Eigen::Index l = 0; l < L; ++l) {
    const auto& src = sources[static_cast<std::size_t>(l)];
    std::vector<int> all_rows;
    const std::vector<int>* rows;
    if (labeled_subsets) {
      rows = &(*labeled_subsets)[static_cast<std::size_t>(l)];
    } else {
      all_rows.resize(static_cast<std::size_t>(src.n_labeled()));
      std::iota(all_rows.begin(), all_rows.end(), 0);
      rows = &all_rows;
    }
    if (rows->empty()) throw ValidationError("empty labeled fold");

    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(q);
    Eigen::RowVectorXd acc_mix = Eigen::RowVectorXd::Zero(q);
    for (int i : *rows) {
      const Eigen::VectorXd x = src.x_row(i);
      const auto a = src.A.row(i);
      const double resid =
          src.y[i] - nuis.m[static_cast<std::size_t>(l)](x);
      const double wl = nuis.w[static_cast<std::size_t>(l)](x);
      acc += wl * resid * a;
      acc_mix += nuis.eta(x)[l] * wl * resid * a;
    }
    const double inv = 1.0 / static_cast<double>(rows->size());
    cm.per_source.row(l) = acc * inv;
    cm.mixture.row(l) = acc_mix * inv;
  }
  return cm;
}

inline BetaSet dr_betas_impl(const TargetDataset& target,
                             const std::vector<SourceDataset>& sources,
                             const NuisanceBundle& nuis,
                             const std::vector<std::vector<int>>* subsets,
                             FoldTag tag) {
  BetaSet out = plugin_betas(target, nuis);
  const CorrectionMoments cm = correction_moments(sources, nuis, subsets);
  const detail::Sigma0Solver solver(target);
  const Eigen::Index L = out.n_sources();
  for (Eigen::Index l = 0; l < L; ++l) {
    out.betas.row(l) +=
        solver.solve(cm.per_source.row(l).transpose()).transpose();
    out.mix_contrib.row(l) +=
        solver.solve(cm.mixture.row(l).transpose()).transpose();
  }
  out.betas.row(L) = out.mix_contrib.colwise().sum();
  out.fold_tag = tag;
  return out;
}

}  // namespace detail

// Doubly robust rows: plug-in plus the labeled-sample bias correction.
inline BetaSet dr_betas(const TargetDataset& target,
                        const std::vector<SourceDataset>& sources,
                        const NuisanceBundle& nuis) {
  for (const auto& s : sources)
    if (s.n_labeled() < 1) throw ValidationError("empty labeled set");
  return detail::dr_betas_impl(target, sources, nuis, nullptr, FoldTag::full);
}

// Penalized variant: each row minimizes
//   (1/2) b' Sigma0 b - b' g_l + pen(b)
// where g_l is the DR-corrected cross-moment (the quantity whose unpenalized
// minimizer is the dr_betas row). The intercept coordinate is unpenalized.
// A single lambda is selected for all rows: by prediction error on the
// labeled tuning sample when present, otherwise by the one-standard-error
// rule over a K-fold target split of the plug-in objective.
inline BetaSet regularized_betas(const TargetDataset& target,
                                 const std::vector<SourceDataset>& sources,
                                 const NuisanceBundle& nuis, PenaltyKind penalty,
                                 std::vector<double> lambda_grid,
                                 std::uint64_t seed = 0) {
  if (penalty == PenaltyKind::none || lambda_grid.empty())
    return dr_betas(target, sources, nuis);

  const Eigen::Index L = static_cast<Eigen::Index>(nuis.n_sources());
  const Eigen::Index q = target.A.cols();
  const Eigen::Index n0 = target.n_rows();
  const detail::Sigma0Solver solver(target);

  // DR cross-moments g_l (rows 0..L-1) and the mixture moment (row L),
  // plus per-row plug-in moments retained for the selection criterion.
  Eigen::MatrixXd plug_mix = Eigen::MatrixXd::Zero(n0, q);  // row-wise terms
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(L + 1, q);
  {
    for (Eigen::Index i = 0; i < n0; ++i) {
      const Eigen::VectorXd x = target.x_row(i);
      const auto a = target.A.row(i);
      const Eigen::VectorXd eta = nuis.eta(x);
      double mixval = 0.0;
      for (Eigen::Index l = 0; l < L; ++l) {
        const double ml = nuis.m[static_cast<std::size_t>(l)](x);
        g.row(l) += ml * a / static_cast<double>(n0);
        mixval += eta[l] * ml;
      }
      plug_mix.row(i) = mixval * a;
      g.row(L) += mixval * a / static_cast<double>(n0);
    }
    const detail::CorrectionMoments cm =
        detail::correction_moments(sources, nuis, nullptr);
    g.topRows(L) += cm.per_source;
    g.row(L) += cm.mixture.colwise().sum();
  }

  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<double>());

  // Coordinate descent on the quadratic objective.
  const auto solve_row = [&](const Eigen::MatrixXd& S, const Eigen::VectorXd& gl,
                             double lambda, Eigen::VectorXd beta) {
    const Eigen::Index d = gl.size();
    Eigen::VectorXd sb = S * beta;
    for (int sweep = 0; sweep < 10000; ++sweep) {
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double old = beta[j];
        const double zj = gl[j] - sb[j] + S(j, j) * old;
        const bool penalized = (j != 0);
        double next;
        if (penalty == PenaltyKind::lasso)
          next = penalized ? detail::soft_threshold(zj, lambda) / S(j, j)
                           : zj / S(j, j);
        else
          next = zj / (S(j, j) + (penalized ? lambda : 0.0));
        if (next != old) {
          sb += S.col(j) * (next - old);
          beta[j] = next;
          max_change = std::max(max_change, std::abs(next - old));
        }
      }
      if (max_change < 1e-8) break;
    }
    return beta;
  };

  // Select one lambda on the mixture row.
  double chosen = lambda_grid.front();
  if (lambda_grid.size() > 1) {
    const Eigen::Index nl = static_cast<Eigen::Index>(lambda_grid.size());
    if (target.tuning && target.tuning->y) {
      const auto& tun = *target.tuning;
      Eigen::VectorXd warm = Eigen::VectorXd::Zero(q);
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < nl; ++k) {
        warm = solve_row(solver.sigma0, g.row(L).transpose(),
                         lambda_grid[static_cast<std::size_t>(k)], warm);
        const double mse = (*tun.y - tun.A * warm).squaredNorm() /
                           static_cast<double>(tun.size());
        if (mse < best - 1e-15) {
          best = mse;
          chosen = lambda_grid[static_cast<std::size_t>(k)];
        }
      }
    } else {
      // K-fold split of target rows; validation score is the plug-in
      // objective (1/2) b' Sv b - b' gv on the held-out moments.
      const int K = 5;
      Rng rng = Rng::derive(seed, 0x31);
      const std::vector<int> assign = detail::fold_assignment(n0, K, rng);
      Eigen::MatrixXd scores(K, nl);
      for (int f = 0; f < K; ++f) {
        Eigen::MatrixXd Sv = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd gv = Eigen::VectorXd::Zero(q);
        Eigen::MatrixXd St = Eigen::MatrixXd::Zero(q, q);
        Eigen::VectorXd gt = Eigen::VectorXd::Zero(q);
        Eigen::Index nv = 0, nt = 0;
        for (Eigen::Index i = 0; i < n0; ++i) {
          const Eigen::VectorXd a = target.A.row(i).transpose();
          if (assign[static_cast<std::size_t>(i)] == f) {
            Sv += a * a.transpose();
            gv += plug_mix.row(i).transpose();
            ++nv;
          } else {
            St += a * a.transpose();
            gt += plug_mix.row(i).transpose();
            ++nt;
          }
        }
        Sv /= std::max<double>(1.0, static_cast<double>(nv));
        gv /= std::max<double>(1.0, static_cast<double>(nv));
        St /= std::max<double>(1.0, static_cast<double>(nt));
        gt /= std::max<double>(1.0, static_cast<double>(nt));
        St.diagonal().array() += 1e-8 * St.trace() / static_cast<double>(q);
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(q);
        for (Eigen::Index k = 0; k < nl; ++k) {
          warm = solve_row(St, gt, lambda_grid[static_cast<std::size_t>(k)],
                           warm);
          scores(f, k) = 0.5 * warm.dot(Sv * warm) - warm.dot(gv);
        }
      }
      const Eigen::VectorXd mean = scores.colwise().mean();
      Eigen::Index best_k = 0;
      mean.minCoeff(&best_k);
      const double se =
          std::sqrt((scores.col(best_k).array() - mean[best_k]).square().sum() /
                    static_cast<double>(K - 1)) /
          std::sqrt(static_cast<double>(K));
      chosen = lambda_grid[static_cast<std::size_t>(best_k)];
      for (Eigen::Index k = 0; k < nl; ++k) {
        if (mean[k] <= mean[best_k] + se) {
          chosen = lambda_grid[static_cast<std::size_t>(k)];
          break;  // grid is descending: first qualifying = largest lambda
        }
      }
    }
  }

  BetaSet out;
  out.sigma0 = solver.sigma0;
  out.fold_tag = FoldTag::full;
  out.betas.resize(L + 1, q);
  out.mix_contrib = Eigen::MatrixXd::Zero(L, q);
  for (Eigen::Index l = 0; l <= L; ++l)
    out.betas.row(l) = solve_row(solver.sigma0, g.row(l).transpose(), chosen,
                                 Eigen::VectorXd::Zero(q))
                           .transpose();
  // Penalized rows are not additive in the per-source pieces; keep the
  // unpenalized decomposition for diagnostics.
  for (Eigen::Index l = 0; l < L; ++l)
    out.mix_contrib.row(l) = out.betas.row(L) / static_cast<double>(L);
  return out;
}

// ---------------------------------------------------------------------------
// Nuisance fitting and cross-fitting orchestration.
// ---------------------------------------------------------------------------

struct NuisanceFit {
  ReferenceSplit split;
  std::shared_ptr<std::vector<RatioModel>> ratios;
  RhoEstimate rho;
  std::vector<WModel> w_models;
  std::vector<LinearModel> m_models;

  NuisanceBundle bundle() const {
    NuisanceBundle b;
    const std::size_t L = ratios->size();
    b.rho = rho.rho;
    for (std::size_t l = 0; l < L; ++l) {
      const LinearModel& m = m_models[l];
      b.m.push_back([m](const Eigen::VectorXd& x) { return m.predict(x); });
      const WModel& w = w_models[l];
      b.w.push_back([w](const Eigen::VectorXd& x) { return w.evaluate(x); });
    }
    auto ratios_ptr = ratios;
    Eigen::VectorXd rho_vec = rho.rho;
    b.eta = [ratios_ptr, rho_vec](const Eigen::VectorXd& x) {
      Eigen::VectorXd r(static_cast<Eigen::Index>(ratios_ptr->size()));
      for (std::size_t k = 0; k < ratios_ptr->size(); ++k)
        r[static_cast<Eigen::Index>(k)] = (*ratios_ptr)[k].evaluate(x);
      return posterior_eta(rho_vec, r);
    };
    return b;
  }
};

// Fits the full nuisance set (reference split, ratio classifiers, rho, w
// models, conditional means) on the given source rows against the full
// target sample.
inline NuisanceFit fit_nuisances(const std::vector<SourceDataset>& sources,
                                 const TargetDataset& target,
                                 const FitConfig& config, std::uint64_t seed) {
  NuisanceFit fit;
  fit.split = build_reference(sources, config.reference_strategy,
                              config.pooled_fraction, seed);
  fit.ratios = std::make_shared<std::vector<RatioModel>>(
      fit_source_ratios(sources, fit.split, config, seed));

  const Eigen::Index n0 = target.n_rows();
  const std::size_t L = sources.size();
  Eigen::MatrixXd R(n0, static_cast<Eigen::Index>(L));
  {
    const Eigen::MatrixXd X0 = detail::covariate_matrix(target.A, target.W);
    for (std::size_t l = 0; l < L; ++l)
      R.col(static_cast<Eigen::Index>(l)) = (*fit.ratios)[l].evaluate_rows(X0);
  }
  fit.rho = estimate_rho(R, config.rho_lambda_for(n0), config.rho_penalty_sign,
                         seed);

  fit.w_models = fit_w(target, sources, fit.ratios,
                       std::optional<Eigen::VectorXd>(fit.rho.rho), fit.split,
                       config, seed);

  for (std::size_t l = 0; l < L; ++l) {
    const auto& src = sources[l];
    const Eigen::Index nl = src.n_labeled();
    Eigen::MatrixXd X(nl, src.A.cols() + src.W.cols());
    X.leftCols(src.A.cols()) = src.A.topRows(nl);
    X.rightCols(src.W.cols()) = src.W.topRows(nl);
    const PenaltyKind pk = config.nuisance_learner == LearnerKind::ols
                               ? PenaltyKind::none
                               : (config.nuisance_learner == LearnerKind::ridge
                                      ? PenaltyKind::ridge
                                      : PenaltyKind::lasso);
    std::vector<double> grid = config.nuisance_lambda_grid;
    if (grid.empty() && pk != PenaltyKind::none)
      grid = nuisance_lambda_grid(X, src.y);
    fit.m_models.push_back(
        fit_linear(X, src.y, pk, grid, config.cv_folds, seed + 0x4100 + l));
  }
  return fit;
}

struct CrossFitResult {
  BetaSet averaged;            // fold_tag = averaged
  BetaSet fold_a, fold_b;      // moments on the tagged fold, nuisances from
                               // the opposite fold
  RhoEstimate rho_a, rho_b;
  Eigen::VectorXd rho_mean;    // reported prior weights
};

// Seeded stratified halves of every source (labeled and unlabeled rows are
// split separately so both folds keep labeled data).
inline std::vector<std::array<std::vector<int>, 2>> cross_fit_partitions(
    const std::vector<SourceDataset>& sources, std::uint64_t seed) {
  std::vector<std::array<std::vector<int>, 2>> parts(sources.size());
  for (std::size_t l = 0; l < sources.size(); ++l) {
    const auto& src = sources[l];
    Rng rng = Rng::derive(seed, 0x50, l);
    const int nl = static_cast<int>(src.n_labeled());
    const int nu = static_cast<int>(src.n_total() - src.n_labeled());
    const std::vector<int> perm_l = rng.permutation(nl);
    const std::vector<int> perm_u = rng.permutation(nu);
    for (int i = 0; i < nl; ++i)
      parts[l][static_cast<std::size_t>(i % 2)].push_back(perm_l[
          static_cast<std::size_t>(i)]);
    for (int i = 0; i < nu; ++i)
      parts[l][static_cast<std::size_t>(i % 2)].push_back(
          nl + perm_u[static_cast<std::size_t>(i)]);
    for (auto& fold : parts[l]) std::sort(fold.begin(), fold.end());
  }
  return parts;
}

namespace detail {

inline SourceDataset subset_source(const SourceDataset& src,
                                   const std::vector<int>& rows) {
  SourceDataset out;
  out.site_id = src.site_id;
  std::vector<int> labeled, unlabeled;
  for (int r : rows)
    (r < src.n_labeled() ? labeled : unlabeled).push_back(r);
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  out.A.resize(n, src.A.cols());
  out.W.resize(n, src.W.cols());
  out.y.resize(static_cast<Eigen::Index>(labeled.size()));
  Eigen::Index at = 0;
  for (int r : labeled) {
    out.A.row(at) = src.A.row(r);
    out.W.row(at) = src.W.row(r);
    out.y[at] = src.y[r];
    ++at;
  }
  for (int r : unlabeled) {
    out.A.row(at) = src.A.row(r);
    out.W.row(at) = src.W.row(r);
    ++at;
  }
  return out;
}

}  // namespace detail

// Cross-fitted DR estimation with externally supplied fold assignments
// (row indices per source, two folds). The fold-A BetaSet evaluates fold-A
// labeled moments with nuisances trained on fold B, and vice versa; the
// whole target sample serves both folds.
inline CrossFitResult cross_fit_with_folds(
    const std::vector<SourceDataset>& sources, const TargetDataset& target,
    const FitConfig& config,
    const std::vector<std::array<std::vector<int>, 2>>& parts) {
  const std::size_t L = sources.size();
  for (const auto& s : sources)
    if (s.n_labeled() < 4)
      throw ValidationError("cross_fit requires at least 4 labeled rows");

  std::vector<SourceDataset> fold_sources[2];
  for (int f = 0; f < 2; ++f) {
    fold_sources[f].reserve(L);
    for (std::size_t l = 0; l < L; ++l)
      fold_sources[f].push_back(
          detail::subset_source(sources[l], parts[l][static_cast<std::size_t>(f)]));
  }

  // Both folds use one substream: identical fold data then fits identical
  // nuisances.
  NuisanceFit nuis[2];
  for (int f = 0; f < 2; ++f)
    nuis[f] = fit_nuisances(fold_sources[f], target, config, config.seed + 0x60);

  // Fold-tagged moments with opposite-fold nuisances.
  const NuisanceBundle bundle_a = nuis[1].bundle();  // used on fold-A moments
  const NuisanceBundle bundle_b = nuis[0].bundle();

  CrossFitResult out;
  out.fold_a = detail::dr_betas_impl(target, fold_sources[0], bundle_a,
                                     nullptr, FoldTag::fold_a);
  out.fold_b = detail::dr_betas_impl(target, fold_sources[1], bundle_b,
                                     nullptr, FoldTag::fold_b);
  out.rho_a = nuis[0].rho;
  out.rho_b = nuis[1].rho;
  out.rho_mean = 0.5 * (nuis[0].rho.rho + nuis[1].rho.rho);

  out.averaged = out.fold_a;
  out.averaged.betas = 0.5 * (out.fold_a.betas + out.fold_b.betas);
  out.averaged.mix_contrib =
      0.5 * (out.fold_a.mix_contrib + out.fold_b.mix_contrib);
  out.averaged.fold_tag = FoldTag::averaged;
  return out;
}

inline CrossFitResult cross_fit(const std::vector<SourceDataset>& sources,
                                const TargetDataset& target,
                                const FitConfig& config) {
  return cross_fit_with_folds(sources, target, config,
                              cross_fit_partitions(sources, config.seed));
}

}  // namespace dorm
