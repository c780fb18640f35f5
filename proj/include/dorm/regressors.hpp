// Self-contained supervised learners used as nuisance estimators:
// penalized least squares (ridge/lasso via coordinate descent) and
// ridge-penalized logistic regression (IRLS), each with K-fold selection
// of the penalty strength.
//
// Penalized objectives (n = sample size):
//   linear:    (1/2n) ||y - X b||^2 + lambda * P(b)
//   logistic:  (1/n) sum log(1 + exp(z_i)) - g_i z_i + (lambda/2) ||b_slope||^2
// Features are standardized internally (population mean/variance) before
// penalized fitting and coefficients are mapped back; the intercept is
// never penalized. Zero-variance columns are dropped from the fit; the first
// constant column, when present, absorbs the linear model's intercept.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"
#include "dorm/rng.hpp"

namespace dorm {

struct LinearModel {
  Eigen::VectorXd coef;  // length d; predict(x) = coef' x
  PenaltyKind penalty = PenaltyKind::none;
  double lambda = 0.0;

  double predict(const Eigen::VectorXd& x) const { return coef.dot(x); }
  Eigen::VectorXd predict_rows(const Eigen::MatrixXd& X) const {
    return X * coef;
  }
};

struct ClassifierModel {
  Eigen::VectorXd coef;  // length d+1, intercept first
  double lambda = 0.0;

  double logit(const Eigen::VectorXd& x) const {
    return coef[0] + coef.tail(coef.size() - 1).dot(x);
  }
  // Probabilities kept strictly inside (0,1).
  double proba(const Eigen::VectorXd& x) const {
    const double z = std::clamp(logit(x), -35.0, 35.0);
    return 1.0 / (1.0 + std::exp(-z));
  }
  Eigen::VectorXd logit_rows(const Eigen::MatrixXd& X) const {
    return (X * coef.tail(coef.size() - 1)).array() + coef[0];
  }
};

namespace detail {

struct Standardized {
  Eigen::MatrixXd X;            // active columns, centered/scaled
  Eigen::VectorXd mean, scale;  // per original column
  std::vector<int> active;      // original indices of retained columns
  int intercept_col = -1;       // first constant column, if any
  bool centered = true;
};

// Population-moment standardization. When no constant column exists the
// columns are only scaled (by root mean square) so that predict(x) = coef'x
// remains exact for the no-intercept objective.
inline Standardized standardize(const Eigen::MatrixXd& X) {
  const Eigen::Index n = X.rows(), d = X.cols();
  Standardized s;
  s.mean = X.colwise().mean();
  Eigen::VectorXd var(d);
  for (Eigen::Index j = 0; j < d; ++j)
    var[j] = (X.col(j).array() - s.mean[j]).square().sum() /
             static_cast<double>(n);
  s.scale = var.array().sqrt();

  for (Eigen::Index j = 0; j < d; ++j) {
    if (s.scale[j] < 1e-12) {
      if (s.intercept_col < 0 && std::abs(s.mean[j]) > 1e-12)
        s.intercept_col = static_cast<int>(j);
    } else {
      s.active.push_back(static_cast<int>(j));
    }
  }
  s.centered = (s.intercept_col >= 0);

  s.X.resize(n, static_cast<Eigen::Index>(s.active.size()));
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const int j = s.active[k];
    if (s.centered) {
      s.X.col(static_cast<Eigen::Index>(k)) =
          (X.col(j).array() - s.mean[j]) / s.scale[j];
    } else {
      const double rms = std::sqrt(var[j] + s.mean[j] * s.mean[j]);
      s.X.col(static_cast<Eigen::Index>(k)) = X.col(j) / rms;
      s.scale[j] = rms;
    }
  }
  return s;
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Coordinate descent for (1/2n)||y - Xb||^2 + penalty, on standardized
// columns (unit population variance). Stops when the largest coefficient
// change falls below 1e-8 or after 10000 sweeps.
inline Eigen::VectorXd coordinate_descent(const Eigen::MatrixXd& X,
                                          const Eigen::VectorXd& y,
                                          PenaltyKind penalty, double lambda,
                                          Eigen::VectorXd beta) {
  const Eigen::Index n = X.rows(), d = X.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j)
    col_sq[j] = X.col(j).squaredNorm() * inv_n;
  Eigen::VectorXd r = y - X * beta;

  for (int sweep = 0; sweep < 10000; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq[j] <= 0.0) continue;
      const double old = beta[j];
      const double z = X.col(j).dot(r) * inv_n + col_sq[j] * old;
      double next;
      if (penalty == PenaltyKind::lasso)
        next = soft_threshold(z, lambda) / col_sq[j];
      else
        next = z / (col_sq[j] + lambda);
      if (next != old) {
        r += X.col(j) * (old - next);
        beta[j] = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (max_change < 1e-8) break;
  }
  return beta;
}

inline std::vector<int> fold_assignment(Eigen::Index n, int folds, Rng& rng) {
  std::vector<int> assign(static_cast<std::size_t>(n));
  const std::vector<int> perm = rng.permutation(static_cast<int>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    assign[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
        static_cast<int>(i % folds);
  return assign;
}

inline std::vector<double> default_lambda_grid(double lambda_max) {
  std::vector<double> grid(50);
  const double lo = std::log(1e-4 * lambda_max), hi = std::log(1e2 * lambda_max);
  for (int i = 0; i < 50; ++i)
    grid[static_cast<std::size_t>(i)] =
        std::exp(hi + (lo - hi) * static_cast<double>(i) / 49.0);
  return grid;
}

}  // namespace detail

// Short data-scaled grid for nuisance fitting: 16 values on
// [1e-2, 1] * lambda_max of the standardized instance. The floor keeps
// lasso paths off the dense n < p end, where coordinate descent is slow and
// those solutions never win validation anyway.
inline std::vector<double> nuisance_lambda_grid(const Eigen::MatrixXd& X,
                                                const Eigen::VectorXd& y) {
  const detail::Standardized s = detail::standardize(X);
  const Eigen::VectorXd yc =
      s.centered ? Eigen::VectorXd(y.array() - y.mean()) : y;
  double lambda_max = 1e-12;
  for (Eigen::Index j = 0; j < s.X.cols(); ++j)
    lambda_max = std::max(lambda_max, std::abs(s.X.col(j).dot(yc)) /
                                          static_cast<double>(X.rows()));
  std::vector<double> grid(16);
  const double hi = std::log(lambda_max), lo = std::log(1e-2 * lambda_max);
  for (int i = 0; i < 16; ++i)
    grid[static_cast<std::size_t>(i)] =
        std::exp(hi + (lo - hi) * static_cast<double>(i) / 15.0);
  return grid;
}

// Least-squares / ridge / lasso regression. penalty=none returns the
// minimal-l2-norm least-squares solution; ridge and lasso return the
// coordinate-descent solution at the cross-validated lambda (single-value
// grids skip cross-validation). Deterministic given the seed.
inline LinearModel fit_linear(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, PenaltyKind penalty,
                              std::vector<double> lambda_grid = {},
                              int folds = 5, std::uint64_t seed = 0) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2 || d < 1 || y.size() != n)
    throw std::invalid_argument("fit_linear: bad dimensions");
  if (!X.allFinite() || !y.allFinite())
    throw std::invalid_argument("fit_linear: non-finite input");

  LinearModel model;
  model.penalty = penalty;
  if (penalty == PenaltyKind::none) {
    model.coef = X.completeOrthogonalDecomposition().solve(y);
    return model;
  }

  const detail::Standardized s = detail::standardize(X);
  const double ybar = s.centered ? y.mean() : 0.0;
  const Eigen::VectorXd yc = y.array() - ybar;
  const Eigen::Index da = s.X.cols();

  if (lambda_grid.empty()) {
    double lambda_max = 1e-12;
    for (Eigen::Index j = 0; j < da; ++j)
      lambda_max = std::max(lambda_max, std::abs(s.X.col(j).dot(yc)) /
                                            static_cast<double>(n));
    lambda_grid = detail::default_lambda_grid(lambda_max);
  }
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<double>());

  // The ridge optimum is the coordinate-descent fixed point, solved here in
  // closed form; one eigendecomposition of the fold Gram amortizes the whole
  // lambda grid.
  const bool direct_ridge = (penalty == PenaltyKind::ridge);

  double chosen = lambda_grid.front();
  if (lambda_grid.size() > 1) {
    Rng rng = Rng::derive(seed, 0x11);
    const std::vector<int> assign = detail::fold_assignment(n, folds, rng);
    Eigen::VectorXd cv_mse = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(lambda_grid.size()));
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index i = 0; i < n; ++i)
        (assign[static_cast<std::size_t>(i)] == f ? va : tr).push_back(i);
      if (va.empty() || tr.size() < 2) continue;
      Eigen::MatrixXd Xt(static_cast<Eigen::Index>(tr.size()), da);
      Eigen::VectorXd yt(static_cast<Eigen::Index>(tr.size()));
      for (std::size_t i = 0; i < tr.size(); ++i) {
        Xt.row(static_cast<Eigen::Index>(i)) = s.X.row(tr[i]);
        yt[static_cast<Eigen::Index>(i)] = yc[tr[i]];
      }
      const double ybar_t = s.centered ? yt.mean() : 0.0;
      yt.array() -= ybar_t;

      if (direct_ridge) {
        const double nt = static_cast<double>(tr.size());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            Xt.transpose() * Xt / nt);
        const Eigen::VectorXd cproj =
            eig.eigenvectors().transpose() * (Xt.transpose() * yt / nt);
        for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
          const Eigen::VectorXd beta =
              eig.eigenvectors() *
              (cproj.array() /
               (eig.eigenvalues().array().max(0.0) + lambda_grid[k]))
                  .matrix();
          double sse = 0.0;
          for (Eigen::Index i : va) {
            const double pred = s.X.row(i).dot(beta) + ybar_t;
            sse += (yc[i] - pred) * (yc[i] - pred);
          }
          cv_mse[static_cast<Eigen::Index>(k)] +=
              sse / static_cast<double>(va.size());
        }
      } else {
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(da);
        for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
          warm = detail::coordinate_descent(Xt, yt, penalty, lambda_grid[k],
                                            warm);
          double sse = 0.0;
          for (Eigen::Index i : va) {
            const double pred = s.X.row(i).dot(warm) + ybar_t;
            sse += (yc[i] - pred) * (yc[i] - pred);
          }
          cv_mse[static_cast<Eigen::Index>(k)] +=
              sse / static_cast<double>(va.size());
        }
      }
    }
    Eigen::Index best = 0;
    cv_mse.minCoeff(&best);
    chosen = lambda_grid[static_cast<std::size_t>(best)];
  }

  Eigen::VectorXd b_std;
  if (direct_ridge) {
    const double nd = static_cast<double>(n);
    Eigen::MatrixXd G = s.X.transpose() * s.X / nd;
    G.diagonal().array() += chosen;
    b_std = G.ldlt().solve(s.X.transpose() * yc / nd);
  } else {
    b_std = detail::coordinate_descent(s.X, yc, penalty, chosen,
                                       Eigen::VectorXd::Zero(da));
  }

  model.lambda = chosen;
  model.coef = Eigen::VectorXd::Zero(d);
  double b0 = ybar;
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const int j = s.active[k];
    model.coef[j] = b_std[static_cast<Eigen::Index>(k)] / s.scale[j];
    if (s.centered) b0 -= model.coef[j] * s.mean[j];
  }
  if (s.intercept_col >= 0)
    model.coef[s.intercept_col] = b0 / s.mean[s.intercept_col];
  return model;
}

namespace detail {

// Penalized negative log-likelihood on the standardized design (intercept
// unpenalized), averaged over rows.
inline double logistic_objective(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& g, double b0,
                                 const Eigen::VectorXd& w, double lambda) {
  const Eigen::ArrayXd z = ((X * w).array() + b0).min(35.0).max(-35.0);
  const double nll =
      ((1.0 + z.exp()).log() - g.array() * z).mean();
  return nll + 0.5 * lambda * w.squaredNorm();
}

struct LogisticFit {
  double b0 = 0.0;
  Eigen::VectorXd w;
};

// Damped IRLS (Newton with step halving on the penalized deviance).
inline LogisticFit logistic_irls(const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& g, double lambda,
                                 LogisticFit start) {
  const Eigen::Index n = X.rows(), d = X.cols();
  LogisticFit fit = std::move(start);
  if (fit.w.size() != d) {
    fit.w = Eigen::VectorXd::Zero(d);
    fit.b0 = 0.0;
  }
  double obj = logistic_objective(X, g, fit.b0, fit.w, lambda);

  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::ArrayXd z = ((X * fit.w).array() + fit.b0).min(35.0).max(-35.0);
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-z).exp());
    const Eigen::ArrayXd wt = (p * (1.0 - p)).max(1e-10);
    const Eigen::VectorXd resid = (p - g.array()).matrix();

    Eigen::VectorXd grad(d + 1);
    grad[0] = resid.mean();
    grad.tail(d) =
        X.transpose() * resid / static_cast<double>(n) + lambda * fit.w;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;

    Eigen::MatrixXd H(d + 1, d + 1);
    const Eigen::MatrixXd Xw = (X.array().colwise() * wt).matrix();
    H(0, 0) = wt.mean();
    H.block(0, 1, 1, d) = Xw.colwise().mean();
    H.block(1, 0, d, 1) = H.block(0, 1, 1, d).transpose();
    H.block(1, 1, d, d) = X.transpose() * Xw / static_cast<double>(n);
    H.block(1, 1, d, d).diagonal().array() += lambda + 1e-12;

    const Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) break;

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      const double cand_b0 = fit.b0 - t * step[0];
      const Eigen::VectorXd cand_w = fit.w - t * step.tail(d);
      const double cand = logistic_objective(X, g, cand_b0, cand_w, lambda);
      if (cand <= obj + 1e-14) {
        const double delta =
            std::max(std::abs(t * step[0]),
                     (t * step.tail(d)).lpNorm<Eigen::Infinity>());
        fit.b0 = cand_b0;
        fit.w = cand_w;
        const bool converged = (obj - cand < 1e-12 && delta < 1e-8);
        obj = cand;
        accepted = true;
        if (converged) return fit;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return fit;
}

}  // namespace detail

// Ridge-penalized logistic regression of a binary response on X. Lambda is
// chosen by stratified K-fold validation deviance when a multi-value grid is
// supplied. Throws on single-class input.
inline ClassifierModel fit_logistic(const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& g,
                                    std::vector<double> lambda_grid = {1e-3},
                                    int folds = 5, std::uint64_t seed = 0) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (n < 2 || g.size() != n)
    throw std::invalid_argument("fit_logistic: bad dimensions");
  if (!X.allFinite() || !g.allFinite())
    throw std::invalid_argument("fit_logistic: non-finite input");
  const double gsum = g.sum();
  if (gsum <= 0.0 || gsum >= static_cast<double>(n))
    throw std::invalid_argument("degenerate classification: single class");
  if (lambda_grid.empty()) lambda_grid = {1e-3};
  std::sort(lambda_grid.begin(), lambda_grid.end(), std::greater<double>());

  const detail::Standardized s = detail::standardize(X);
  const Eigen::Index da = s.X.cols();

  double chosen = lambda_grid.front();
  const Eigen::Index n1 = static_cast<Eigen::Index>(gsum);
  const Eigen::Index n0 = n - n1;
  if (lambda_grid.size() > 1 && std::min(n0, n1) >= folds) {
    // Stratified folds so every fold sees both classes.
    Rng rng = Rng::derive(seed, 0x12);
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < n; ++i)
        if (static_cast<int>(g[i]) == cls) rows.push_back(i);
      const std::vector<int> perm =
          rng.permutation(static_cast<int>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i)
        assign[static_cast<std::size_t>(rows[static_cast<std::size_t>(
            perm[i])])] = static_cast<int>(i % static_cast<std::size_t>(folds));
    }
    Eigen::VectorXd cv = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(lambda_grid.size()));
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index i = 0; i < n; ++i)
        (assign[static_cast<std::size_t>(i)] == f ? va : tr).push_back(i);
      Eigen::MatrixXd Xt(static_cast<Eigen::Index>(tr.size()), da);
      Eigen::VectorXd gt(static_cast<Eigen::Index>(tr.size()));
      for (std::size_t i = 0; i < tr.size(); ++i) {
        Xt.row(static_cast<Eigen::Index>(i)) = s.X.row(tr[i]);
        gt[static_cast<Eigen::Index>(i)] = g[tr[i]];
      }
      detail::LogisticFit warm;
      for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
        warm = detail::logistic_irls(Xt, gt, lambda_grid[k], warm);
        double dev = 0.0;
        for (Eigen::Index i : va) {
          const double z = std::clamp(s.X.row(i).dot(warm.w) + warm.b0,
                                      -35.0, 35.0);
          dev += std::log1p(std::exp(z)) - g[i] * z;
        }
        cv[static_cast<Eigen::Index>(k)] += dev / static_cast<double>(va.size());
      }
    }
    Eigen::Index best = 0;
    cv.minCoeff(&best);
    chosen = lambda_grid[static_cast<std::size_t>(best)];
  }

  const detail::LogisticFit fit =
      detail::logistic_irls(s.X, g, chosen, detail::LogisticFit{});

  ClassifierModel model;
  model.lambda = chosen;
  model.coef = Eigen::VectorXd::Zero(d + 1);
  model.coef[0] = fit.b0;
  for (std::size_t k = 0; k < s.active.size(); ++k) {
    const int j = s.active[k];
    model.coef[j + 1] = fit.w[static_cast<Eigen::Index>(k)] / s.scale[j];
    if (s.centered) model.coef[0] -= model.coef[j + 1] * s.mean[j];
  }
  return model;
}

}  // namespace dorm
