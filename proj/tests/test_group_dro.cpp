#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "dorm/group_dro.hpp"
#include "dorm/rng.hpp"
#include "helpers.hpp"

using namespace dorm;

namespace {

BetaSet make_betas(const Eigen::MatrixXd& B, const Eigen::MatrixXd& sigma) {
  BetaSet bs;
  bs.betas = B;
  bs.sigma0 = sigma;
  bs.fold_tag = FoldTag::full;
  bs.mix_contrib = Eigen::MatrixXd::Zero(B.rows() - 1, B.cols());
  return bs;
}

RhoEstimate uniform_rho(int L) {
  RhoEstimate r;
  r.rho = Eigen::VectorXd::Constant(L, 1.0 / L);
  return r;
}

}  // namespace

TEST_CASE("gamma matrix: zeros, identity, and hand-computed Gram") {
  // all-zero rows
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 2);
  CHECK(compute_gamma_matrix(make_betas(Z, Eigen::MatrixXd::Identity(2, 2)))
            .G.isZero(0.0));

  // single candidate, unit vector, identity second moment
  Eigen::MatrixXd B1(1, 2);
  B1 << 1, 0;
  const GammaMatrix g1 =
      compute_gamma_matrix(make_betas(B1, Eigen::MatrixXd::Identity(2, 2)));
  CHECK(g1.G.rows() == 1);
  CHECK(g1.G(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  // beta1=(1,0), beta2=(1,1), Sigma=diag(2,1) -> G=[[2,2],[2,3]]
  Eigen::MatrixXd B2(2, 2);
  B2 << 1, 0, 1, 1;
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(2, 2);
  S2(0, 0) = 2.0;
  S2(1, 1) = 1.0;
  const GammaMatrix g2 = compute_gamma_matrix(make_betas(B2, S2));
  CHECK(g2.G(0, 0) == doctest::Approx(2.0));
  CHECK(g2.G(0, 1) == doctest::Approx(2.0));
  CHECK(g2.G(1, 0) == doctest::Approx(2.0));
  CHECK(g2.G(1, 1) == doctest::Approx(3.0));
  CHECK((g2.G - g2.G.transpose()).norm() == 0.0);
}

TEST_CASE("capped simplex projection: feasible, boundary, and KKT oracle") {
  Eigen::VectorXd v(2);
  v << 0.1, 0.1;
  CHECK((project_capped_simplex(v, 1.0) - v).norm() == 0.0);

  v << 2.0, 0.0;
  Eigen::VectorXd expect(2);
  expect << 1.0, 0.0;
  CHECK((project_capped_simplex(v, 1.0) - expect).norm() <= 1e-14);

  v << 0.8, 0.6;
  expect << 0.6, 0.4;
  CHECK((project_capped_simplex(v, 1.0) - expect).norm() <= 1e-12);

  // Grid oracle: minimize ||g - v||^2 over the feasible triangle.
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_g(2);
  const int n = 100;  // 10^4 grid points
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      Eigen::VectorXd g(2);
      g << static_cast<double>(i) / n, static_cast<double>(j) / n;
      if (g.sum() > 1.0 + 1e-12) continue;
      const double d = (g - v).squaredNorm();
      if (d < best) {
        best = d;
        best_g = g;
      }
    }
  }
  const Eigen::VectorXd proj = project_capped_simplex(v, 1.0);
  CHECK((proj - best_g).lpNorm<Eigen::Infinity>() <= 1.0 / n + 1e-12);
  CHECK((proj - v).squaredNorm() <= best + 1e-12);

  // negatives clamp to zero
  v << -0.5, 0.3;
  const Eigen::VectorXd p = project_capped_simplex(v, 0.5);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == doctest::Approx(0.3));

  CHECK_THROWS_AS(project_capped_simplex(v, 1.5), std::invalid_argument);
}

TEST_CASE("solve_weights: forced vertex at s_max = 0") {
  Rng rng(61);
  const Eigen::MatrixXd B = rng.normal_matrix(4, 3);
  const GammaMatrix G =
      compute_gamma_matrix(make_betas(B, Eigen::MatrixXd::Identity(3, 3)));
  const AdversarialWeights w = solve_weights(G, 0.0);
  for (int l = 0; l < 3; ++l) CHECK(w.gamma[l] == 0.0);
  CHECK(w.gamma[3] == 1.0);
}

TEST_CASE("solve_weights: 1-D quadratic against the grid oracle") {
  GammaMatrix G;
  G.G.resize(2, 2);
  G.G << 1, -1, -1, 1;  // (gamma_1 - gamma_2)^2
  const AdversarialWeights w = solve_weights(G, 0.3);
  CHECK(w.gamma[0] == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(w.gamma[1] == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(w.objective == doctest::Approx(0.16).epsilon(1e-9));

  const double grid = testutil::capped_simplex_grid_min(G.G, 0.3, 2000, 3);
  CHECK(std::abs(w.objective - grid) <= 1e-8);
}

TEST_CASE("solve_weights: orthonormal candidates spread the allowed mass") {
  GammaMatrix G;
  G.G = Eigen::MatrixXd::Identity(6, 6);  // L = 5
  const AdversarialWeights w = solve_weights(G, 0.3);
  for (int l = 0; l < 5; ++l)
    CHECK(w.gamma[l] == doctest::Approx(0.06).epsilon(1e-7));
  CHECK(w.gamma[5] == doctest::Approx(0.7).epsilon(1e-7));

  const double grid = testutil::capped_simplex_grid_min(G.G, 0.3, 100000, 3);
  CHECK(std::abs(w.objective - grid) <= 1e-7);
}

TEST_CASE("solve_weights matches staged grid search on random instances") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(100 + seed);
    const int L = 3, q = 4;
    const Eigen::MatrixXd B = rng.normal_matrix(L + 1, q);
    const Eigen::MatrixXd C = rng.normal_matrix(q, q);
    const Eigen::MatrixXd Sigma =
        C * C.transpose() / q + 0.5 * Eigen::MatrixXd::Identity(q, q);
    const GammaMatrix G = compute_gamma_matrix(make_betas(B, Sigma));
    const double cap = 0.1 + 0.2 * static_cast<double>(seed % 3);
    const AdversarialWeights w = solve_weights(G, cap);
    const double grid = testutil::capped_simplex_grid_min(G.G, cap, 300000, 3);
    CHECK(w.objective <= grid + 1e-8);
    CHECK(std::abs(w.objective - grid) <= 1e-6);
  }
}

TEST_CASE("objective is non-increasing in s_max") {
  Rng rng(62);
  const Eigen::MatrixXd B = rng.normal_matrix(5, 4);
  const Eigen::MatrixXd C = rng.normal_matrix(4, 4);
  const GammaMatrix G = compute_gamma_matrix(
      make_betas(B, C * C.transpose() / 4 + Eigen::MatrixXd::Identity(4, 4)));
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 10; ++i) {
    const AdversarialWeights w = solve_weights(G, 0.1 * i);
    CHECK(w.objective <= prev + 1e-10);
    prev = w.objective;
  }
}

TEST_CASE("solve_weights is bitwise deterministic") {
  Rng rng(63);
  const Eigen::MatrixXd B = rng.normal_matrix(4, 3);
  const GammaMatrix G = compute_gamma_matrix(
      make_betas(B, Eigen::MatrixXd::Identity(3, 3)));
  const AdversarialWeights a = solve_weights(G, 0.4);
  const AdversarialWeights b = solve_weights(G, 0.4);
  CHECK(std::memcmp(a.gamma.data(), b.gamma.data(),
                    sizeof(double) * static_cast<std::size_t>(a.gamma.size())) ==
        0);
}

TEST_CASE("assemble reproduces convex combinations and endpoint identities") {
  Eigen::MatrixXd B(3, 2);
  B << 1, 0, 0, 1, 0.5, 0.5;  // beta_1, beta_2, beta_mix
  const BetaSet bs = make_betas(B, Eigen::MatrixXd::Identity(2, 2));

  // gamma = e_{L+1} -> coef = beta_mix
  AdversarialWeights w;
  w.gamma = Eigen::VectorXd::Zero(3);
  w.gamma[2] = 1.0;
  w.s_max = 0.0;
  DormModel m = assemble(bs, w, uniform_rho(2));
  CHECK((m.coef - B.row(2).transpose()).norm() == 0.0);

  // gamma = (0.5, 0.5, 0) -> coef = (0.5, 0.5)
  w.gamma << 0.5, 0.5, 0.0;
  w.s_max = 1.0;
  m = assemble(bs, w, uniform_rho(2));
  CHECK(m.coef[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.coef[1] == doctest::Approx(0.5).epsilon(1e-15));

  // coef reproducible from stored parts
  CHECK((m.coef - m.betas.betas.transpose() * m.gamma.gamma).norm() <= 1e-12);

  // fold mismatch raises
  AdversarialWeights bad = w;
  bad.gamma = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(assemble(bs, bad, uniform_rho(2)), std::invalid_argument);
}

TEST_CASE("identical folds make the cross-fit assembly match single-fold") {
  Rng rng(64);
  Eigen::MatrixXd B = rng.normal_matrix(4, 3);
  BetaSet a = make_betas(B, Eigen::MatrixXd::Identity(3, 3));
  a.fold_tag = FoldTag::fold_a;
  BetaSet b = a;
  b.fold_tag = FoldTag::fold_b;
  BetaSet avg = a;
  avg.fold_tag = FoldTag::averaged;

  const GammaMatrix G = compute_gamma_matrix(a);
  const AdversarialWeights w = solve_weights(G, 0.25);
  const DormModel single = assemble(make_betas(B, a.sigma0), w, uniform_rho(3));
  const DormModel cf = assemble_cross_fit(a, w, b, w, avg, uniform_rho(3));
  CHECK((single.coef - cf.coef).norm() <= 1e-15);
  // per-fold reproduction
  Eigen::VectorXd recon = Eigen::VectorXd::Zero(3);
  for (const auto& fold : cf.folds)
    recon += 0.5 * fold.betas.betas.transpose() * fold.weights.gamma;
  CHECK((cf.coef - recon).norm() <= 1e-12);
}

TEST_CASE("baselines: averages, degenerate rho, and the maximin endpoint") {
  Eigen::MatrixXd B(3, 2);
  B << 1, 0, 0, 1, 0.25, 0.25;
  const BetaSet bs = make_betas(B, Eigen::MatrixXd::Identity(2, 2));

  Eigen::VectorXd rho(2);
  rho << 1.0, 0.0;
  const Baselines base = baselines(bs, rho);
  CHECK(base.simple_ave[0] == doctest::Approx(0.5));
  CHECK(base.simple_ave[1] == doctest::Approx(0.5));
  CHECK((base.rho_ave - B.row(0).transpose()).norm() <= 1e-14);

  // beta_1 = -beta_2 with Sigma = I: the hull contains the origin, so the
  // maximin coefficient collapses to zero.
  Eigen::MatrixXd B2(3, 2);
  B2 << 1, 0, -1, 0, 0.3, 0.0;
  const BetaSet bs2 = make_betas(B2, Eigen::MatrixXd::Identity(2, 2));
  const Baselines base2 = baselines(bs2, Eigen::VectorXd::Constant(2, 0.5));
  CHECK(base2.maximin.norm() <= 1e-6);

  // grid oracle confirms the s_max = 1 objective
  const GammaMatrix G2 = compute_gamma_matrix(bs2);
  const AdversarialWeights w1 = solve_weights(G2, 1.0);
  const double grid = testutil::capped_simplex_grid_min(G2.G, 1.0, 100000, 3);
  CHECK(std::abs(w1.objective - grid) <= 1e-7);
}

TEST_CASE("near-singular Gram matrices are flagged") {
  Eigen::MatrixXd B(3, 2);
  B << 1, 0, 1, 0, 1, 0;  // perfectly collinear candidates
  const BetaSet bs = make_betas(B, Eigen::MatrixXd::Identity(2, 2));
  const ConditionFlags flags = gamma_condition(compute_gamma_matrix(bs));
  CHECK(flags.gamma_near_singular);
}

TEST_CASE("theorem-1 saddle on a small instance (reward grid)") {
  // One seeded instance (the acceptance suite sweeps 20): the assembled
  // DORM coefficient attains the max-min reward over a beta grid spanned by
  // the candidates, with the inner min over a gridded S(s_max).
  Rng rng(65);
  const int L = 3, q = 4;
  const Eigen::MatrixXd B = rng.normal_matrix(L + 1, q);
  const Eigen::MatrixXd C = rng.normal_matrix(q, q);
  const Eigen::MatrixXd Sigma =
      C * C.transpose() / q + 0.5 * Eigen::MatrixXd::Identity(q, q);
  const double s_max = 0.3;
  const GammaMatrix G = compute_gamma_matrix(make_betas(B, Sigma));
  const AdversarialWeights w = solve_weights(G, s_max);
  const Eigen::VectorXd beta_dorm = B.transpose() * w.gamma;

  // Distribution grid over (s, delta): reward R(beta; s, delta) =
  // 2 beta' Sigma (B' gamma(s, delta)) - beta' Sigma beta.
  std::vector<Eigen::VectorXd> dist_moment;
  for (int si = 0; si < 10; ++si) {
    const double s = s_max * si / 9.0;
    for (int d1 = 0; d1 <= 9; ++d1)
      for (int d2 = 0; d2 + d1 <= 9; ++d2) {
        Eigen::VectorXd gamma(L + 1);
        gamma << s * d1 / 9.0, s * d2 / 9.0,
            s * (9.0 - d1 - d2) / 9.0, 1.0 - s;
        dist_moment.push_back(Sigma * (B.transpose() * gamma));
      }
  }
  const auto worst_reward = [&](const Eigen::VectorXd& beta) {
    const double quad = beta.dot(Sigma * beta);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& u : dist_moment)
      worst = std::min(worst, 2.0 * beta.dot(u) - quad);
    return worst;
  };

  // Beta grid over the candidate hull (~10^4 points).
  double best = -std::numeric_limits<double>::infinity();
  const int m = 22;
  for (int i = 0; i <= m; ++i)
    for (int j = 0; i + j <= m; ++j)
      for (int k = 0; i + j + k <= m; ++k) {
        Eigen::VectorXd gamma(4);
        gamma << static_cast<double>(i) / m, static_cast<double>(j) / m,
            static_cast<double>(k) / m,
            static_cast<double>(m - i - j - k) / m;
        best = std::max(best, worst_reward(B.transpose() * gamma));
      }
  CHECK(worst_reward(beta_dorm) >= best - 1e-3);
}
