// Classification-based density ratio estimation.
//
// Each source-vs-reference ratio r_l(x) = dP_X^(l)/dP_X^(ref) is recovered
// from the class-1 odds of a logistic classifier trained on source rows
// (label 1) against reference rows (label 0), rescaled by the training
// class-size ratio and clipped to [1/C_w, C_w]. Target-vs-source ratios
// w_l(x) are formed either directly (r_0 / r_l, with r_0 fitted the same
// way on target rows) or through the fitted mixture sum rho' r(x) / r_l(x).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"
#include "dorm/regressors.hpp"
#include "dorm/rng.hpp"

namespace dorm {

namespace detail {

inline Eigen::MatrixXd covariate_rows(const SourceDataset& s,
                                      const std::vector<int>& rows) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    s.A.cols() + s.W.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)).head(s.A.cols()) = s.A.row(rows[i]);
    X.row(static_cast<Eigen::Index>(i)).tail(s.W.cols()) = s.W.row(rows[i]);
  }
  return X;
}

inline Eigen::MatrixXd covariate_matrix(const Eigen::MatrixXd& A,
                                        const Eigen::MatrixXd& W) {
  Eigen::MatrixXd X(A.rows(), A.cols() + W.cols());
  X.leftCols(A.cols()) = A;
  X.rightCols(W.cols()) = W;
  return X;
}

}  // namespace detail

struct ReferenceSplit {
  Eigen::MatrixXd reference;               // pooled covariate rows
  std::vector<Eigen::MatrixXd> remainders; // per-source training rows
  std::vector<std::vector<int>> reference_rows;  // source row indices pooled
  std::vector<std::vector<int>> remainder_rows;  // source row indices retained
};

// Builds the reference sample. largest_source takes every covariate row of
// the biggest site (ties broken toward the first site); pooled_split draws a
// seeded fraction of each site into the pool and keeps the rest as that
// site's classification positives.
inline ReferenceSplit build_reference(const std::vector<SourceDataset>& sources,
                                      ReferenceStrategy strategy,
                                      double fraction, std::uint64_t seed) {
  if (sources.empty())
    throw std::invalid_argument("build_reference: no sources");
  const std::size_t L = sources.size();
  ReferenceSplit split;
  split.reference_rows.resize(L);
  split.remainder_rows.resize(L);
  split.remainders.resize(L);

  if (strategy == ReferenceStrategy::largest_source) {
    std::size_t big = 0;
    for (std::size_t l = 1; l < L; ++l)
      if (sources[l].n_total() > sources[big].n_total()) big = l;
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<int> all(static_cast<std::size_t>(sources[l].n_total()));
      std::iota(all.begin(), all.end(), 0);
      if (l == big) split.reference_rows[l] = all;
      split.remainder_rows[l] = all;
      split.remainders[l] = detail::covariate_rows(sources[l], all);
    }
    split.reference = split.remainders[big];
    return split;
  }

  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("build_reference: fraction outside (0,1)");

  Eigen::Index ref_total = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::Index n = sources[l].n_total();
    const Eigen::Index take =
        static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n)));
    Rng rng = Rng::derive(seed, 0x20, l);
    const std::vector<int> perm = rng.permutation(static_cast<int>(n));
    std::vector<int> ref(perm.begin(), perm.begin() + take);
    std::vector<int> rem(perm.begin() + take, perm.end());
    std::sort(ref.begin(), ref.end());
    std::sort(rem.begin(), rem.end());
    if (rem.empty())
      throw std::invalid_argument("build_reference: empty remainder");
    split.reference_rows[l] = std::move(ref);
    split.remainder_rows[l] = std::move(rem);
    split.remainders[l] =
        detail::covariate_rows(sources[l], split.remainder_rows[l]);
    ref_total += take;
  }
  if (ref_total == 0)
    throw std::invalid_argument("build_reference: empty reference pool");

  const Eigen::Index p = sources.front().A.cols() + sources.front().W.cols();
  split.reference.resize(ref_total, p);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::MatrixXd rows =
        detail::covariate_rows(sources[l], split.reference_rows[l]);
    split.reference.middleRows(at, rows.rows()) = rows;
    at += rows.rows();
  }
  return split;
}

struct RatioModel {
  ClassifierModel classifier;
  double prior_ratio = 1.0;  // n_ref / n_src (effective training counts)
  double clip = 50.0;

  double evaluate(const Eigen::VectorXd& x) const {
    const double p = classifier.proba(x);
    const double r = prior_ratio * p / (1.0 - p);
    return std::clamp(r, 1.0 / clip, clip);
  }

  Eigen::VectorXd evaluate_rows(const Eigen::MatrixXd& X) const {
    const Eigen::ArrayXd z =
        classifier.logit_rows(X).array().min(35.0).max(-35.0);
    return (prior_ratio * z.exp()).min(clip).max(1.0 / clip).matrix();
  }
};

namespace detail {

inline RatioModel fit_ratio_classifier(const Eigen::MatrixXd& positives,
                                       const Eigen::MatrixXd& reference,
                                       const FitConfig& config,
                                       std::uint64_t seed) {
  const Eigen::Index n1 = positives.rows(), n0 = reference.rows();
  if (n1 == 0 || n0 == 0)
    throw std::invalid_argument("fit_ratio_classifier: empty class");
  Eigen::MatrixXd X(n1 + n0, positives.cols());
  X.topRows(n1) = positives;
  X.bottomRows(n0) = reference;
  Eigen::VectorXd g(n1 + n0);
  g.head(n1).setOnes();
  g.tail(n0).setZero();
  RatioModel model;
  model.classifier =
      fit_logistic(X, g, config.classifier_penalty, config.cv_folds, seed);
  model.prior_ratio = static_cast<double>(n0) / static_cast<double>(n1);
  model.clip = config.ratio_clip;
  return model;
}

}  // namespace detail

// One ratio model per source: classifier of the source's retained rows
// against the reference pool, over the full covariate vector x = (a, w).
inline std::vector<RatioModel> fit_source_ratios(
    const std::vector<SourceDataset>& sources, const ReferenceSplit& split,
    const FitConfig& config, std::uint64_t seed) {
  std::vector<RatioModel> models;
  models.reserve(sources.size());
  for (std::size_t l = 0; l < sources.size(); ++l)
    models.push_back(detail::fit_ratio_classifier(
        split.remainders[l], split.reference, config, seed + 0x2100 + l));
  return models;
}

struct WModel {
  WOption option = WOption::mixture_ratio;
  int source_index = 0;
  std::shared_ptr<const std::vector<RatioModel>> source_ratios;
  std::optional<RatioModel> target_ratio;  // direct_ratio only
  Eigen::VectorXd rho;                     // mixture_ratio only
  double clip = 50.0;

  double evaluate(const Eigen::VectorXd& x) const {
    const double rl = (*source_ratios)[static_cast<std::size_t>(source_index)]
                          .evaluate(x);
    double numer;
    if (option == WOption::direct_ratio) {
      numer = target_ratio->evaluate(x);
    } else {
      numer = 0.0;
      for (Eigen::Index k = 0; k < rho.size(); ++k)
        numer += rho[k] *
                 (*source_ratios)[static_cast<std::size_t>(k)].evaluate(x);
    }
    const double bound = clip * clip;
    return std::clamp(numer / rl, 1.0 / bound, bound);
  }
};

// Target-vs-source density ratios under the configured option.
inline std::vector<WModel> fit_w(
    const TargetDataset& target, const std::vector<SourceDataset>& sources,
    std::shared_ptr<const std::vector<RatioModel>> source_ratios,
    const std::optional<Eigen::VectorXd>& rho_hat, const ReferenceSplit& split,
    const FitConfig& config, std::uint64_t seed) {
  (void)sources;
  const std::size_t L = source_ratios->size();
  std::vector<WModel> ws(L);

  std::optional<RatioModel> r0;
  if (config.w_option == WOption::direct_ratio) {
    if (target.n_rows() < 20)
      throw ValidationError(
          "fit_w: target too small for direct_ratio classification; "
          "use mixture_ratio");
    const Eigen::MatrixXd X0 = detail::covariate_matrix(target.A, target.W);
    r0 = detail::fit_ratio_classifier(X0, split.reference, config,
                                      seed + 0x2300);
  } else {
    if (!rho_hat)
      throw std::invalid_argument("fit_w: mixture_ratio requires rho");
  }

  for (std::size_t l = 0; l < L; ++l) {
    WModel& w = ws[l];
    w.option = config.w_option;
    w.source_index = static_cast<int>(l);
    w.source_ratios = source_ratios;
    w.clip = config.ratio_clip;
    if (config.w_option == WOption::direct_ratio)
      w.target_ratio = r0;
    else
      w.rho = *rho_hat;
  }
  return ws;
}

}  // namespace dorm
