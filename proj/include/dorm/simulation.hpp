// Synthetic multi-source generator, oracle quantities, and evaluation.
//
// Sources: A ~ N(mu_l, sigma_A^2 I) with the first element forced to 1,
// structural W columns W1 = k(A1-A3), W2 = k(A2-A4), W3 = kA3, W4 = W5 = kA4
// (remaining columns 0), independent N(0, noise_w^2) added to every W entry,
// and Y = alpha_l'A + gamma_l'W + N(0, noise_y^2) on the labeled prefix.
//
// Target: X from the rho*-mixture of source covariate laws via a latent site
// draw; hidden Y from the uncertainty-set conditional
//   (1 - s*) sum_l eta_l(X; rho*) P^l_{Y|X}  +  s* sum_l delta*_l P^l_{Y|X},
// with optional contamination replacing the second block by an epsilon model
// (conditional variant) or contaminating the joint draw (joint variant).
// Since the W|A mechanism is shared across sites, every oracle density ratio
// reduces to Gaussian ratios in the non-intercept A coordinates.

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"
#include "dorm/rng.hpp"
#include "dorm/sim_defaults.hpp"

namespace dorm {

enum class Contamination { none, conditional_mix, joint_epsilon };

// Parameters of the arbitrary contamination conditional: a sign-flipped site
// template plus a quadratic in one A coordinate, which no convex combination
// of the linear source conditionals can reproduce.
struct EpsilonSpec {
  int base_site = 0;
  int quad_coord = 1;        // index into A (1..q-1)
  double quad_scale = 1.0;
  double x_shift = 1.0;      // joint variant: mean shift of the epsilon X law
};

struct SimParams {
  int L = 5;
  Eigen::Index N_l = 2000;
  Eigen::Index n_l = 500;
  Eigen::Index N0 = 2000;
  Eigen::Index n_dagger = 20;
  int p = 200;
  int q = 5;
  double k = 0.3;
  double noise_y = 0.5;
  double noise_w = 0.1;
  double sigma_a = 1.0;
  Eigen::MatrixXd mu;       // L x q (intercept column ignored)
  Eigen::MatrixXd alpha;    // L x q
  Eigen::MatrixXd gamma_w;  // L x (p - q)
  Eigen::VectorXd rho_star;
  double s_star = 0.0;
  Eigen::VectorXd delta_star;  // empty: drawn once from the seeded stream
  Contamination contamination = Contamination::none;
  EpsilonSpec epsilon;
  std::uint64_t seed = 1;

  // Fills empty tables with the documented defaults.
  SimParams resolved() const {
    SimParams r = *this;
    if (r.p < r.q) throw std::invalid_argument("SimParams: p < q");
    if (r.p > r.q && r.q < 4)
      throw std::invalid_argument("SimParams: structural W needs q >= 4");
    if (r.mu.rows() != r.L) r.mu = sim_defaults::default_mu(r.L, r.q);
    if (r.alpha.rows() != r.L) r.alpha = sim_defaults::default_alpha(r.L, r.q);
    if (r.gamma_w.rows() != r.L)
      r.gamma_w = sim_defaults::default_gamma_w(r.L, r.p - r.q);
    if (r.rho_star.size() != r.L) {
      r.rho_star = Eigen::VectorXd::Zero(r.L);
      r.rho_star[0] = 0.5;
      r.rho_star[std::min(2, r.L - 1)] += 0.5;
    }
    return r;
  }
};

namespace detail {

// Structural W columns as a linear map of A (before noise).
inline Eigen::MatrixXd structural_w(const Eigen::MatrixXd& A, double k,
                                    Eigen::Index pw) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, pw);
  if (pw > 0) W.col(0) = k * (A.col(0) - A.col(2));
  if (pw > 1) W.col(1) = k * (A.col(1) - A.col(3));
  if (pw > 2) W.col(2) = k * A.col(2);
  if (pw > 3) W.col(3) = k * A.col(3);
  if (pw > 4) W.col(4) = k * A.col(3);
  return W;
}

// Single-row variant.
inline Eigen::VectorXd structural_w_row(const Eigen::VectorXd& a, double k,
                                        Eigen::Index pw) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(pw);
  if (pw > 0) w[0] = k * (a[0] - a[2]);
  if (pw > 1) w[1] = k * (a[1] - a[3]);
  if (pw > 2) w[2] = k * a[2];
  if (pw > 3) w[3] = k * a[3];
  if (pw > 4) w[4] = k * a[3];
  return w;
}

inline Eigen::MatrixXd draw_a(const SimParams& sp, Eigen::Index n, int site,
                              Rng& rng) {
  Eigen::MatrixXd A(n, sp.q);
  A.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 1; j < sp.q; ++j)
      A(i, j) = sp.mu(site, j) + sp.sigma_a * rng.normal();
  return A;
}

inline Eigen::MatrixXd draw_w_given_a(const SimParams& sp,
                                      const Eigen::MatrixXd& A, Rng& rng) {
  const Eigen::Index pw = sp.p - sp.q;
  Eigen::MatrixXd W = structural_w(A, sp.k, pw);
  for (Eigen::Index i = 0; i < W.rows(); ++i)
    for (Eigen::Index j = 0; j < pw; ++j) W(i, j) += sp.noise_w * rng.normal();
  return W;
}

template <class VA, class VW>
inline double site_mean(const SimParams& sp, int site,
                        const Eigen::MatrixBase<VA>& a,
                        const Eigen::MatrixBase<VW>& w) {
  return sp.alpha.row(site).dot(a) + sp.gamma_w.row(site).dot(w);
}

template <class VA, class VW>
inline double epsilon_mean(const SimParams& sp, const EpsilonSpec& eps,
                           const Eigen::MatrixBase<VA>& a,
                           const Eigen::MatrixBase<VW>& w) {
  const double base = site_mean(sp, eps.base_site, a, w);
  const int c = std::clamp(eps.quad_coord, 1, sp.q - 1);
  return -base + eps.quad_scale * a(c) * a(c);
}

// Log density of the non-intercept A block under site l, up to a shared
// constant.
template <class VA>
inline double log_phi(const SimParams& sp, int site,
                      const Eigen::MatrixBase<VA>& a) {
  double ss = 0.0;
  for (int j = 1; j < sp.q; ++j) {
    const double d = a(j) - sp.mu(site, j);
    ss += d * d;
  }
  return -0.5 * ss / (sp.sigma_a * sp.sigma_a);
}

}  // namespace detail

// Oracle posterior weights eta_l(x; rho) from the known Gaussian means.
template <class VA>
inline Eigen::VectorXd oracle_eta(const SimParams& sp,
                                  const Eigen::VectorXd& rho,
                                  const Eigen::MatrixBase<VA>& a) {
  Eigen::VectorXd logw(sp.L);
  for (int l = 0; l < sp.L; ++l)
    logw[l] = rho[l] > 0.0
                  ? std::log(rho[l]) + detail::log_phi(sp, l, a)
                  : -std::numeric_limits<double>::infinity();
  const double m = logw.maxCoeff();
  Eigen::VectorXd out = (logw.array() - m).exp();
  return out / out.sum();
}

// Oracle target/source ratio w_l(x) = sum_k rho_k phi_k(a) / phi_l(a).
template <class VA>
inline double oracle_w_value(const SimParams& sp, const Eigen::VectorXd& rho,
                             int site, const Eigen::MatrixBase<VA>& a) {
  const double ref = detail::log_phi(sp, site, a);
  double s = 0.0;
  for (int l = 0; l < sp.L; ++l)
    if (rho[l] > 0.0)
      s += rho[l] * std::exp(detail::log_phi(sp, l, a) - ref);
  return s;
}

// Oracle source-vs-reference ratios with the uniform source mixture as the
// reference law; optionally clipped like the fitted models.
inline Eigen::MatrixXd oracle_r_matrix(const SimParams& sp,
                                       const Eigen::MatrixXd& A,
                                       double clip = 0.0) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd R(n, sp.L);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd a = A.row(i).transpose();
    Eigen::VectorXd logphi(sp.L);
    for (int l = 0; l < sp.L; ++l) logphi[l] = detail::log_phi(sp, l, a);
    const double m = logphi.maxCoeff();
    const Eigen::VectorXd phi = (logphi.array() - m).exp();
    const double ref = phi.mean();
    for (int l = 0; l < sp.L; ++l) {
      double r = phi[l] / ref;
      if (clip > 1.0) r = std::clamp(r, 1.0 / clip, clip);
      R(i, l) = r;
    }
  }
  return R;
}

inline std::vector<SourceDataset> generate_sources(const SimParams& params) {
  const SimParams sp = params.resolved();
  std::vector<SourceDataset> sources;
  sources.reserve(static_cast<std::size_t>(sp.L));
  for (int l = 0; l < sp.L; ++l) {
    Rng rng = Rng::derive(sp.seed, 0x100, static_cast<std::uint64_t>(l));
    SourceDataset src;
    src.site_id = l + 1;
    src.A = detail::draw_a(sp, sp.N_l, l, rng);
    src.W = detail::draw_w_given_a(sp, src.A, rng);
    src.y.resize(sp.n_l);
    for (Eigen::Index i = 0; i < sp.n_l; ++i)
      src.y[i] = detail::site_mean(sp, l, src.A.row(i), src.W.row(i)) +
                 sp.noise_y * rng.normal();
    sources.push_back(std::move(src));
  }
  return sources;
}

struct TargetBundle {
  TargetDataset data;            // covariates plus the labeled tuning sample
  Eigen::VectorXd hidden_y;      // unobserved outcomes for scoring
  Eigen::MatrixXd eta;           // N0 x L oracle posterior weights
  Eigen::MatrixXd cond_means;    // N0 x L source conditional means at X_i
  std::vector<int> latent;       // latent covariate site per row
  std::vector<char> joint_contaminated;  // joint variant row flags
  Eigen::VectorXd delta_used;    // delta* behind hidden_y
};

namespace detail {

template <class VE, class VM>
inline double draw_hidden_y(const SimParams& sp,
                            const Eigen::MatrixBase<VE>& eta_row,
                            const Eigen::MatrixBase<VM>& means_row,
                            double contam_mean, const Eigen::VectorXd& delta,
                            Rng& rng) {
  const double u = rng.uniform();
  if (u >= 1.0 - sp.s_star) {
    if (sp.contamination == Contamination::conditional_mix)
      return contam_mean + sp.noise_y * rng.normal();
    const int comp = rng.categorical(delta);
    return means_row(comp) + sp.noise_y * rng.normal();
  }
  const int comp = rng.categorical(eta_row);
  return means_row(comp) + sp.noise_y * rng.normal();
}

}  // namespace detail

inline TargetBundle generate_target(const SimParams& params,
                                    const std::vector<SourceDataset>& sources) {
  (void)sources;  // generation only needs the population parameters
  const SimParams sp = params.resolved();
  TargetBundle bundle;

  Rng rng = Rng::derive(sp.seed, 0x200);
  Eigen::VectorXd delta = sp.delta_star.size() == sp.L
                              ? sp.delta_star
                              : Rng::derive(sp.seed, 0x201).simplex(sp.L);
  bundle.delta_used = delta;

  const Eigen::Index pw = sp.p - sp.q;
  bundle.data.A.resize(sp.N0, sp.q);
  bundle.data.W.resize(sp.N0, pw);
  bundle.eta.resize(sp.N0, sp.L);
  bundle.cond_means.resize(sp.N0, sp.L);
  bundle.hidden_y.resize(sp.N0);
  bundle.latent.resize(static_cast<std::size_t>(sp.N0));
  bundle.joint_contaminated.assign(static_cast<std::size_t>(sp.N0), 0);

  for (Eigen::Index i = 0; i < sp.N0; ++i) {
    bool contaminated_row = false;
    int site;
    if (sp.contamination == Contamination::joint_epsilon &&
        rng.uniform() < sp.s_star) {
      contaminated_row = true;
      site = sp.epsilon.base_site;
    } else {
      site = rng.categorical(sp.rho_star);
    }
    bundle.latent[static_cast<std::size_t>(i)] = site;
    bundle.joint_contaminated[static_cast<std::size_t>(i)] =
        contaminated_row ? 1 : 0;

    Eigen::VectorXd a(sp.q);
    a[0] = 1.0;
    for (int j = 1; j < sp.q; ++j) {
      const double mean = contaminated_row ? sp.epsilon.x_shift
                                           : sp.mu(site, j);
      a[j] = mean + sp.sigma_a * rng.normal();
    }
    Eigen::VectorXd w = detail::structural_w_row(a, sp.k, pw);
    for (Eigen::Index j = 0; j < pw; ++j) w[j] += sp.noise_w * rng.normal();
    bundle.data.A.row(i) = a.transpose();
    bundle.data.W.row(i) = w.transpose();
    bundle.eta.row(i) = oracle_eta(sp, sp.rho_star, a).transpose();
    for (int l = 0; l < sp.L; ++l)
      bundle.cond_means(i, l) = detail::site_mean(sp, l, a, w);

    if (contaminated_row) {
      bundle.hidden_y[i] = detail::epsilon_mean(sp, sp.epsilon, a, w) +
                           sp.noise_y * rng.normal();
    } else if (sp.contamination == Contamination::joint_epsilon) {
      // Faithful joint part: Y from the latent site's conditional.
      bundle.hidden_y[i] =
          bundle.cond_means(i, site) + sp.noise_y * rng.normal();
    } else {
      const double contam_mean =
          sp.contamination == Contamination::conditional_mix
              ? detail::epsilon_mean(sp, sp.epsilon, a, w)
              : 0.0;
      bundle.hidden_y[i] = detail::draw_hidden_y(
          sp, bundle.eta.row(i), bundle.cond_means.row(i), contam_mean, delta,
          rng);
    }
  }

  if (sp.n_dagger > 0) {
    Rng trng = Rng::derive(sp.seed, 0x202);
    TuningSample tun;
    tun.A.resize(sp.n_dagger, sp.q);
    Eigen::VectorXd ty(sp.n_dagger);
    for (Eigen::Index i = 0; i < sp.n_dagger; ++i) {
      const int site = trng.categorical(sp.rho_star);
      Eigen::VectorXd a(sp.q);
      a[0] = 1.0;
      for (int j = 1; j < sp.q; ++j)
        a[j] = sp.mu(site, j) + sp.sigma_a * trng.normal();
      Eigen::VectorXd w = detail::structural_w_row(a, sp.k, pw);
      for (Eigen::Index j = 0; j < pw; ++j)
        w[j] += sp.noise_w * trng.normal();
      Eigen::VectorXd means(sp.L);
      for (int l = 0; l < sp.L; ++l)
        means[l] = detail::site_mean(sp, l, a, w);
      const double contam_mean =
          sp.contamination != Contamination::none
              ? detail::epsilon_mean(sp, sp.epsilon, a, w)
              : 0.0;
      tun.A.row(i) = a.transpose();
      if (sp.contamination == Contamination::joint_epsilon &&
          trng.uniform() < sp.s_star) {
        ty[i] = contam_mean + sp.noise_y * trng.normal();
      } else {
        ty[i] = detail::draw_hidden_y(sp, oracle_eta(sp, sp.rho_star, a),
                                      means, contam_mean, delta, trng);
      }
    }
    tun.y = ty;
    bundle.data.tuning = tun;
  }
  return bundle;
}

struct EvalReport {
  double std_mse_mean = 0.0;
  double std_mse_worst = 0.0;
  Eigen::VectorXd per_draw;
  Eigen::VectorXd oracle_beta_star;
  double coef_error = 0.0;
};

struct OraclePopulation {
  enum class Kind {
    source_joint,                   // (P_X^l, P^l_{Y|X})
    source_conditional_on_target,   // (P_X^0, P^l_{Y|X})
    mixture_conditional_on_target,  // (P_X^0, eta-mixture conditional)
    target_law                      // full uncertainty-set conditional
  };
  Kind kind = Kind::target_law;
  int site = 0;
  std::optional<Eigen::VectorXd> delta;  // target_law only
};

// Monte Carlo least squares of Y ~ A on a large labeled draw from the
// requested population. Deterministic given the seed; streams in blocks.
inline Eigen::VectorXd oracle_beta(const SimParams& params,
                                   const OraclePopulation& pop,
                                   Eigen::Index n_oracle = 100000,
                                   std::uint64_t seed = 0x0BAC1E) {
  const SimParams sp = params.resolved();
  Rng rng = Rng::derive(seed, 0x300);
  const Eigen::VectorXd delta =
      pop.delta ? *pop.delta
                : (sp.delta_star.size() == sp.L
                       ? sp.delta_star
                       : Rng::derive(sp.seed, 0x201).simplex(sp.L));

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(sp.q, sp.q);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(sp.q);
  const Eigen::Index pw = sp.p - sp.q;

  for (Eigen::Index done = 0; done < n_oracle;) {
    const Eigen::Index block = std::min<Eigen::Index>(8192, n_oracle - done);
    for (Eigen::Index i = 0; i < block; ++i) {
      const int xsite = pop.kind == OraclePopulation::Kind::source_joint
                            ? pop.site
                            : rng.categorical(sp.rho_star);
      Eigen::VectorXd a(sp.q);
      a[0] = 1.0;
      for (int j = 1; j < sp.q; ++j)
        a[j] = sp.mu(xsite, j) + sp.sigma_a * rng.normal();
      Eigen::VectorXd w = detail::structural_w_row(a, sp.k, pw);
      for (Eigen::Index j = 0; j < pw; ++j) w[j] += sp.noise_w * rng.normal();

      double y;
      switch (pop.kind) {
        case OraclePopulation::Kind::source_joint:
        case OraclePopulation::Kind::source_conditional_on_target:
          y = detail::site_mean(sp, pop.site, a, w) + sp.noise_y * rng.normal();
          break;
        case OraclePopulation::Kind::mixture_conditional_on_target: {
          const int comp = rng.categorical(oracle_eta(sp, sp.rho_star, a));
          y = detail::site_mean(sp, comp, a, w) + sp.noise_y * rng.normal();
          break;
        }
        case OraclePopulation::Kind::target_law:
        default: {
          Eigen::VectorXd means(sp.L);
          for (int l = 0; l < sp.L; ++l)
            means[l] = detail::site_mean(sp, l, a, w);
          const double contam_mean =
              sp.contamination != Contamination::none
                  ? detail::epsilon_mean(sp, sp.epsilon, a, w)
                  : 0.0;
          y = detail::draw_hidden_y(sp, oracle_eta(sp, sp.rho_star, a), means,
                                    contam_mean, delta, rng);
          break;
        }
      }
      S += a * a.transpose();
      v += y * a;
    }
    done += block;
  }
  S /= static_cast<double>(n_oracle);
  v /= static_cast<double>(n_oracle);
  return S.ldlt().solve(v);
}

// Scores coefficient vectors over n_draws adversarial outcome draws. Draw b
// resamples delta^(b) uniformly on the simplex (and, under contamination, a
// fresh epsilon model), regenerates the hidden outcomes on the fixed target
// covariates, and standardizes each MSE by the average outcome variance
// across draws.
inline std::vector<EvalReport> evaluate(
    const std::vector<Eigen::VectorXd>& coefs, const SimParams& params,
    const TargetBundle& bundle, int n_draws = 100,
    std::uint64_t seed = 0xE7A1) {
  const SimParams sp = params.resolved();
  const Eigen::Index n0 = bundle.data.n_rows();
  const std::size_t M = coefs.size();

  std::vector<Eigen::VectorXd> preds(M);
  for (std::size_t m = 0; m < M; ++m) {
    if (coefs[m].size() != sp.q)
      throw std::invalid_argument("evaluate: coefficient length mismatch");
    preds[m] = bundle.data.A * coefs[m];
  }

  Eigen::MatrixXd mse(n_draws, static_cast<Eigen::Index>(M));
  Eigen::VectorXd var(n_draws);
  Eigen::VectorXd y(n0);

  for (int b = 0; b < n_draws; ++b) {
    Rng rng = Rng::derive(seed, 0x400, static_cast<std::uint64_t>(b));
    const Eigen::VectorXd delta = rng.simplex(sp.L);
    EpsilonSpec eps = sp.epsilon;
    if (sp.contamination != Contamination::none) {
      eps.base_site = static_cast<int>(rng.uniform_int(
          static_cast<std::uint64_t>(sp.L)));
      eps.quad_coord = 1 + static_cast<int>(rng.uniform_int(
                               static_cast<std::uint64_t>(sp.q - 1)));
    }
    for (Eigen::Index i = 0; i < n0; ++i) {
      if (bundle.joint_contaminated[static_cast<std::size_t>(i)]) {
        y[i] = detail::epsilon_mean(sp, eps, bundle.data.A.row(i),
                                    bundle.data.W.row(i)) +
               sp.noise_y * rng.normal();
        continue;
      }
      const double contam_mean =
          sp.contamination == Contamination::conditional_mix
              ? detail::epsilon_mean(sp, eps, bundle.data.A.row(i),
                                     bundle.data.W.row(i))
              : 0.0;
      y[i] = detail::draw_hidden_y(sp, bundle.eta.row(i),
                                   bundle.cond_means.row(i), contam_mean,
                                   delta, rng);
    }
    const double ybar = y.mean();
    var[b] = (y.array() - ybar).square().mean();
    for (std::size_t m = 0; m < M; ++m)
      mse(b, static_cast<Eigen::Index>(m)) =
          (y - preds[m]).squaredNorm() / static_cast<double>(n0);
  }

  const double avg_var = var.mean();
  OraclePopulation pop;
  pop.kind = OraclePopulation::Kind::target_law;
  pop.delta = bundle.delta_used;
  const Eigen::VectorXd beta_star = oracle_beta(sp, pop, 100000, seed);

  std::vector<EvalReport> reports(M);
  for (std::size_t m = 0; m < M; ++m) {
    EvalReport& r = reports[m];
    r.per_draw = mse.col(static_cast<Eigen::Index>(m)) / avg_var;
    r.std_mse_mean = r.per_draw.mean();
    r.std_mse_worst = r.per_draw.maxCoeff();
    r.oracle_beta_star = beta_star;
    r.coef_error = (coefs[m] - beta_star).norm();
  }
  return reports;
}

}  // namespace dorm
