// End-to-end fitting: nuisances -> rho/eta -> DR betas (optionally
// cross-fitted) -> adversarial weighting per s_max candidate -> optional
// tuning on the target's side information. One BetaSet (or fold pair) is
// reused across the whole candidate grid; only the quadratic program reruns
// per candidate.

#pragma once

#include <map>
#include <optional>
#include <vector>

#include "dorm/data.hpp"
#include "dorm/dr_estimation.hpp"
#include "dorm/group_dro.hpp"
#include "dorm/tuning.hpp"

namespace dorm {

struct FitResult {
  DormModel model;                        // at selected (or single) s_max
  std::map<double, DormModel> candidates; // one model per grid value
  std::optional<TuningResult> tuning;
  Baselines bench;                        // SimpleAve / RhoAve / Maximin
  Eigen::VectorXd rho;                    // reported prior weights
};

namespace detail {

struct FittedBetas {
  BetaSet full;                       // full-sample or averaged rows
  std::optional<CrossFitResult> cf;
  RhoEstimate rho;
  GammaMatrix gram_full;
  std::optional<GammaMatrix> gram_a, gram_b;
};

inline FittedBetas fit_betas(const std::vector<SourceDataset>& sources,
                             const TargetDataset& target,
                             const FitConfig& config) {
  FittedBetas out;
  if (config.cross_fit) {
    CrossFitResult cf = cross_fit(sources, target, config);
    out.rho.rho = cf.rho_mean;
    out.rho.objective = 0.5 * (cf.rho_a.objective + cf.rho_b.objective);
    out.rho.iterations = std::max(cf.rho_a.iterations, cf.rho_b.iterations);
    out.gram_a = compute_gamma_matrix(cf.fold_a);
    out.gram_b = compute_gamma_matrix(cf.fold_b);
    out.full = cf.averaged;
    out.cf = std::move(cf);
  } else {
    const NuisanceFit nuis = fit_nuisances(sources, target, config, config.seed);
    const NuisanceBundle bundle = nuis.bundle();
    out.rho = nuis.rho;
    if (config.outcome_penalty == PenaltyKind::none)
      out.full = dr_betas(target, sources, bundle);
    else
      out.full = regularized_betas(target, sources, bundle,
                                   config.outcome_penalty,
                                   config.outcome_lambda_grid, config.seed);
  }
  out.gram_full = compute_gamma_matrix(out.full);
  return out;
}

inline DormModel model_at(const FittedBetas& fb, double s) {
  if (fb.cf) {
    AdversarialWeights wa = solve_weights(*fb.gram_a, s);
    AdversarialWeights wb = solve_weights(*fb.gram_b, s);
    return assemble_cross_fit(fb.cf->fold_a, wa, fb.cf->fold_b, wb, fb.full,
                              fb.rho);
  }
  return assemble(fb.full, solve_weights(fb.gram_full, s), fb.rho);
}

}  // namespace detail

// Fits the model over config.s_max; with a multi-value grid the final model
// is selected on the tuning sample (labels preferred, surrogate otherwise;
// without side information the smallest candidate is kept).
inline FitResult fit_pipeline(const std::vector<SourceDataset>& sources,
                              const TargetDataset& target,
                              const FitConfig& config) {
  require_valid(sources, target, config);
  const detail::FittedBetas fb = detail::fit_betas(sources, target, config);

  FitResult result;
  result.rho = fb.rho.rho;
  for (double s : config.s_max)
    result.candidates.emplace(s, detail::model_at(fb, s));

  double selected = config.s_max.front();
  if (config.s_max.size() > 1 && target.tuning) {
    if (target.tuning->y)
      result.tuning = tune_mse(result.candidates, *target.tuning);
    else
      result.tuning = tune_surrogate(result.candidates, *target.tuning);
    selected = result.tuning->s_hat;
  } else if (config.s_max.size() > 1) {
    selected = *std::min_element(config.s_max.begin(), config.s_max.end());
  }
  result.model = result.candidates.at(selected);

  // Benchmarks share the fitted rows; maximin is the s_max = 1 endpoint of
  // the same (per-fold when cross-fitted) assembly path.
  result.bench.simple_ave = fb.full.betas.topRows(fb.full.n_sources())
                                .colwise()
                                .mean()
                                .transpose();
  result.bench.rho_ave =
      fb.full.betas.topRows(fb.full.n_sources()).transpose() * fb.rho.rho;
  result.bench.maximin = detail::model_at(fb, 1.0).coef;
  return result;
}

// Default candidate grid {0, 0.05, ..., 0.5}.
inline std::vector<double> default_smax_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(0.05 * i);
  return grid;
}

}  // namespace dorm
