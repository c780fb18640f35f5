// Selection of s_max from a candidate grid using a small labeled tuning
// sample (mean squared prediction error) or a surrogate outcome (absolute
// empirical correlation). Ties break toward the smallest candidate.

#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"
#include "dorm/group_dro.hpp"

namespace dorm {

enum class TuneCriterion { mse, surrogate_correlation };

struct TuningResult {
  double s_hat = 0.0;
  std::vector<std::pair<double, double>> scores;  // candidate -> score
  TuneCriterion criterion = TuneCriterion::mse;
  bool uninformative = false;  // warning: all surrogate correlations tiny
};

// score(s) = (1/n) sum_i (y_i - coef(s)' a_i)^2, minimized.
inline TuningResult tune_mse(const std::map<double, DormModel>& models,
                             const TuningSample& tuning) {
  if (models.empty()) throw std::invalid_argument("tune_mse: empty grid");
  if (!tuning.y) throw std::invalid_argument("tune_mse: labels required");
  const Eigen::VectorXd& y = *tuning.y;

  TuningResult result;
  result.criterion = TuneCriterion::mse;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [s, model] : models) {
    const Eigen::VectorXd pred = tuning.A * model.coef;
    const double mse =
        (y - pred).squaredNorm() / static_cast<double>(tuning.size());
    result.scores.emplace_back(s, mse);
    if (mse < best - 1e-15) {  // strict improvement: ties keep smaller s
      best = mse;
      result.s_hat = s;
    }
  }
  return result;
}

// score(s) = |cor(surrogate, coef(s)' a)|, maximized. Candidates whose
// predictions have zero variance score zero; if every candidate does, the
// surrogate cannot rank them.
inline TuningResult tune_surrogate(const std::map<double, DormModel>& models,
                                   const TuningSample& tuning) {
  if (models.empty()) throw std::invalid_argument("tune_surrogate: empty grid");
  if (!tuning.surrogate)
    throw std::invalid_argument("tune_surrogate: surrogate required");
  const Eigen::VectorXd& s_out = *tuning.surrogate;
  const double n = static_cast<double>(tuning.size());
  const Eigen::VectorXd sc = s_out.array() - s_out.mean();
  const double s_sd = std::sqrt(sc.squaredNorm() / n);
  if (s_sd < 1e-12) throw ValidationError("uninformative surrogate");

  TuningResult result;
  result.criterion = TuneCriterion::surrogate_correlation;
  double best = -1.0;
  int usable = 0;
  for (const auto& [s, model] : models) {
    const Eigen::VectorXd pred = tuning.A * model.coef;
    const Eigen::VectorXd pc = pred.array() - pred.mean();
    const double p_sd = std::sqrt(pc.squaredNorm() / n);
    double score = 0.0;
    if (p_sd > 1e-12) {
      score = std::abs(sc.dot(pc) / (n * s_sd * p_sd));
      ++usable;
    }
    result.scores.emplace_back(s, score);
    if (score > best + 1e-15) {
      best = score;
      result.s_hat = s;
    }
  }
  if (usable == 0) throw ValidationError("uninformative surrogate");
  if (best < 0.05) result.uninformative = true;
  return result;
}

}  // namespace dorm
