// Semantic containers for multi-site data and fit configuration.
//
// Covariates are split as X = (A, W): A holds the q predictors entering the
// risk model Y ~ A (first column identically 1), W holds auxiliary covariates
// that inform the distributional shift but are excluded from the final model.
// All containers are immutable after construction and safe to share across
// threads.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dorm/errors.hpp"

namespace dorm {

struct SourceDataset {
  int site_id = 0;
  Eigen::MatrixXd A;   // N_l x q, first column constant 1
  Eigen::MatrixXd W;   // N_l x (p - q)
  Eigen::VectorXd y;   // labeled prefix, length n_l

  Eigen::Index n_labeled() const { return y.size(); }
  Eigen::Index n_total() const { return A.rows(); }

  // Row of the full covariate vector x = (a, w).
  Eigen::VectorXd x_row(Eigen::Index i) const {
    Eigen::VectorXd x(A.cols() + W.cols());
    x.head(A.cols()) = A.row(i).transpose();
    x.tail(W.cols()) = W.row(i).transpose();
    return x;
  }
};

struct TuningSample {
  Eigen::MatrixXd A;                         // n_dagger x q
  std::optional<Eigen::VectorXd> y;          // true labels
  std::optional<Eigen::VectorXd> surrogate;  // surrogate outcomes

  Eigen::Index size() const { return A.rows(); }
};

struct TargetDataset {
  Eigen::MatrixXd A;   // N_0 x q
  Eigen::MatrixXd W;   // N_0 x (p - q)
  std::optional<TuningSample> tuning;

  Eigen::Index n_rows() const { return A.rows(); }

  Eigen::VectorXd x_row(Eigen::Index i) const {
    Eigen::VectorXd x(A.cols() + W.cols());
    x.head(A.cols()) = A.row(i).transpose();
    x.tail(W.cols()) = W.row(i).transpose();
    return x;
  }
};

enum class ReferenceStrategy { largest_source, pooled_split };
enum class WOption { direct_ratio, mixture_ratio };
enum class LearnerKind { ols, ridge, lasso };
enum class PenaltyKind { none, ridge, lasso };
enum class RhoPenaltySign { minus, plus };

struct FitConfig {
  std::vector<double> s_max{0.1};       // single value or candidate grid
  double ridge_lambda_rho = -1.0;       // < 0 means auto: N_0^{-1/2}
  ReferenceStrategy reference_strategy = ReferenceStrategy::pooled_split;
  double pooled_fraction = 0.5;
  WOption w_option = WOption::mixture_ratio;
  LearnerKind nuisance_learner = LearnerKind::lasso;
  std::vector<double> nuisance_lambda_grid;  // empty: instance-derived default
  std::vector<double> classifier_penalty{1e-6};
  double ratio_clip = 50.0;
  bool cross_fit = false;
  std::uint64_t seed = 1;
  PenaltyKind outcome_penalty = PenaltyKind::none;
  std::vector<double> outcome_lambda_grid;
  RhoPenaltySign rho_penalty_sign = RhoPenaltySign::minus;
  int cv_folds = 5;

  // Auto scale 0.25 * N0^{-1/2}: large enough to pin flat directions, small
  // enough that vertex and sparse priors are recovered within the advertised
  // bands.
  double rho_lambda_for(Eigen::Index n0) const {
    return ridge_lambda_rho >= 0.0
               ? ridge_lambda_rho
               : 0.25 / std::sqrt(static_cast<double>(n0));
  }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> errors;
  std::vector<std::string> notes;

  void fail(const std::string& msg) {
    ok = false;
    errors.push_back(msg);
  }

  std::string summary() const {
    std::ostringstream out;
    for (const auto& e : errors) out << e << "; ";
    return out.str();
  }
};

namespace detail {

inline bool all_finite(const Eigen::MatrixXd& m) {
  return m.allFinite();
}

inline bool has_unit_first_column(const Eigen::MatrixXd& a) {
  if (a.cols() == 0) return false;
  return (a.col(0).array() == 1.0).all();
}

}  // namespace detail

// Structural checks shared by the whole pipeline. Pure: identical inputs
// yield identical reports.
inline ValidationReport validate(const std::vector<SourceDataset>& sources,
                                 const TargetDataset& target,
                                 const FitConfig& config) {
  ValidationReport report;
  if (sources.empty()) {
    report.fail("no source datasets");
    return report;
  }

  const Eigen::Index q = sources.front().A.cols();
  const Eigen::Index pw = sources.front().W.cols();

  for (std::size_t l = 0; l < sources.size(); ++l) {
    const auto& s = sources[l];
    const std::string tag = "source " + std::to_string(s.site_id);
    if (s.A.cols() != q || s.W.cols() != pw)
      report.fail(tag + ": dimension mismatch across sites");
    if (s.A.rows() != s.W.rows())
      report.fail(tag + ": dimension mismatch between A and W rows");
    if (s.n_labeled() < 1)
      report.fail(tag + ": empty labeled set");
    if (s.n_labeled() > s.n_total())
      report.fail(tag + ": labeled count exceeds total rows");
    if (!detail::has_unit_first_column(s.A))
      report.fail(tag + ": missing intercept column");
    if (!detail::all_finite(s.A) || !detail::all_finite(s.W) ||
        !s.y.allFinite())
      report.fail(tag + ": non-finite entries");
    report.notes.push_back(tag + ": N=" + std::to_string(s.n_total()) +
                           " labeled=" + std::to_string(s.n_labeled()));
  }

  if (target.A.cols() != q || target.W.cols() != pw)
    report.fail("target: dimension mismatch with sources");
  if (target.A.rows() != target.W.rows())
    report.fail("target: dimension mismatch between A and W rows");
  if (target.n_rows() < 1) report.fail("target: no rows");
  if (!detail::has_unit_first_column(target.A))
    report.fail("target: missing intercept column");
  if (!detail::all_finite(target.A) || !detail::all_finite(target.W))
    report.fail("target: non-finite entries");

  if (target.tuning) {
    const auto& t = *target.tuning;
    const bool has_y = t.y.has_value();
    const bool has_s = t.surrogate.has_value();
    if (has_y == has_s)
      report.fail("tuning sample: exactly one of labels/surrogate required");
    if (t.size() < 2) report.fail("tuning sample: fewer than 2 rows");
    if (t.A.cols() != q) report.fail("tuning sample: dimension mismatch");
    if (has_y && (t.y->size() != t.size() || !t.y->allFinite()))
      report.fail("tuning sample: bad label vector");
    if (has_s && (t.surrogate->size() != t.size() || !t.surrogate->allFinite()))
      report.fail("tuning sample: bad surrogate vector");
  }

  if (config.s_max.empty()) report.fail("config: empty s_max grid");
  for (double s : config.s_max)
    if (!(s >= 0.0 && s <= 1.0)) report.fail("config: s_max outside [0,1]");
  if (config.classifier_penalty.empty())
    report.fail("config: empty classifier penalty grid");
  for (double v : config.classifier_penalty)
    if (!(v > 0.0)) report.fail("config: classifier penalty must be positive");
  for (double v : config.nuisance_lambda_grid)
    if (!(v > 0.0)) report.fail("config: nuisance lambda must be positive");
  if (!(config.ratio_clip > 1.0)) report.fail("config: ratio_clip must exceed 1");
  if (config.reference_strategy == ReferenceStrategy::pooled_split &&
      !(config.pooled_fraction > 0.0 && config.pooled_fraction < 1.0))
    report.fail("config: pooled fraction outside (0,1)");
  if (config.cv_folds < 2) report.fail("config: cv_folds must be at least 2");
  if (config.cross_fit && config.outcome_penalty != PenaltyKind::none)
    report.fail(
        "config: outcome_penalty is a single-fit construction; set "
        "cross_fit=false");

  return report;
}

inline void require_valid(const std::vector<SourceDataset>& sources,
                          const TargetDataset& target,
                          const FitConfig& config) {
  const ValidationReport report = validate(sources, target, config);
  if (!report.ok) throw ValidationError(report.summary());
}

}  // namespace dorm
