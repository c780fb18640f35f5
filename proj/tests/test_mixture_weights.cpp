#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dorm/mixture_weights.hpp"
#include "dorm/rng.hpp"
#include "dorm/simulation.hpp"
#include "helpers.hpp"

using namespace dorm;

TEST_CASE("identical ratio columns give the uniform prior") {
  Rng rng(21);
  Eigen::MatrixXd R(200, 2);
  R.col(0) = (rng.normal_vector(200).array() * 0.3).exp();
  R.col(1) = R.col(0);
  const RhoEstimate est = estimate_rho(R, 0.05);
  CHECK(est.rho[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(est.rho[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(est.rho.sum() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("estimate_rho rejects nonpositive ratios") {
  Eigen::MatrixXd R = Eigen::MatrixXd::Ones(5, 2);
  R(3, 1) = 0.0;
  CHECK_THROWS_AS(estimate_rho(R, 0.01), std::invalid_argument);
}

TEST_CASE("pure source-1 target recovers the first vertex (grid oracle)") {
  SimParams sp;
  sp.p = sp.q = 5;  // no W needed for ratio columns
  sp.L = 5;
  sp.N0 = 2000;
  sp.rho_star = Eigen::VectorXd::Zero(5);
  sp.rho_star[0] = 1.0;
  sp.seed = 22;

  // Oracle ratio columns at target rows drawn purely from source 1.
  const SimParams rsp = sp.resolved();
  Rng rng(23);
  Eigen::MatrixXd A(sp.N0, sp.q);
  A.col(0).setOnes();
  for (Eigen::Index i = 0; i < sp.N0; ++i)
    for (int j = 1; j < sp.q; ++j)
      A(i, j) = rsp.mu(0, j) + rng.normal();
  const Eigen::MatrixXd R = oracle_r_matrix(rsp, A, 50.0);

  const double lambda = FitConfig{}.rho_lambda_for(sp.N0);
  const RhoEstimate est = estimate_rho(R, lambda);

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(5);
  e1[0] = 1.0;
  CHECK((est.rho - e1).lpNorm<1>() <= 0.05);

  const double grid_best =
      testutil::simplex_grid_max_objective(R, lambda, -1.0, 1000000);
  CHECK(std::abs(est.objective - grid_best) <= 1e-4);
  CHECK(est.objective >= grid_best - 1e-6);
}

TEST_CASE("two-source mixture recovery at rho* = (0.3, 0.7) (grid oracle)") {
  // Two 1-D Gaussian sources; oracle ratio columns from the exact densities.
  const int n = 2000;
  Rng rng(24);
  const double mu1 = 0.0, mu2 = 1.5;
  Eigen::MatrixXd R(n, 2);
  for (int i = 0; i < n; ++i) {
    const double x = (rng.uniform() < 0.3 ? mu1 : mu2) + rng.normal();
    const double l1 = -0.5 * (x - mu1) * (x - mu1);
    const double l2 = -0.5 * (x - mu2) * (x - mu2);
    const double ref = 0.5 * std::exp(l1) + 0.5 * std::exp(l2);
    R(i, 0) = std::exp(l1) / ref;
    R(i, 1) = std::exp(l2) / ref;
  }
  const double lambda = FitConfig{}.rho_lambda_for(n);
  const RhoEstimate est = estimate_rho(R, lambda);
  Eigen::VectorXd truth(2);
  truth << 0.3, 0.7;
  CHECK((est.rho - truth).lpNorm<1>() <= 0.1);

  const double grid_best =
      testutil::simplex_grid_max_objective(R, lambda, -1.0, 1000000);
  CHECK(std::abs(est.objective - grid_best) <= 1e-4);
}

TEST_CASE("objective is monotone across iterations and reaches a valid point") {
  Rng rng(25);
  Eigen::MatrixXd R(300, 4);
  for (int j = 0; j < 4; ++j)
    R.col(j) = (rng.normal_vector(300).array() * 0.5 + 0.2 * j).exp();
  const RhoEstimate est = estimate_rho(R, 0.02);  // throws on any decrease
  CHECK(est.rho.minCoeff() >= 0.0);
  CHECK(est.rho.sum() == doctest::Approx(1.0).epsilon(1e-10));

  // Final objective at least matches the uniform start.
  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(4, 0.25);
  const double start_obj =
      (R * uniform).array().log().mean() - 0.02 * uniform.squaredNorm();
  CHECK(est.objective >= start_obj - 1e-12);
}

TEST_CASE("rho is invariant to common positive rescaling of the columns") {
  Rng rng(26);
  Eigen::MatrixXd R(400, 3);
  for (int j = 0; j < 3; ++j)
    R.col(j) = (rng.normal_vector(400).array() * 0.4 + 0.1 * j).exp();
  const RhoEstimate a = estimate_rho(R, 0.01);
  const RhoEstimate b = estimate_rho(3.7 * R, 0.01);
  CHECK((a.rho - b.rho).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("posterior weights") {
  Eigen::VectorXd rho(3), r(3);
  rho << 0.2, 0.5, 0.3;

  // equal ratios cancel
  r.setConstant(2.5);
  CHECK((posterior_eta(rho, r) - rho).norm() <= 1e-14);

  // degenerate prior stays degenerate
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(3);
  e1[0] = 1.0;
  r << 0.7, 1.3, 2.2;
  CHECK((posterior_eta(e1, r) - e1).norm() <= 1e-14);

  // direct arithmetic
  Eigen::VectorXd rho2(2), r2(2);
  rho2 << 0.5, 0.5;
  r2 << 2.0, 1.0;
  const Eigen::VectorXd eta = posterior_eta(rho2, r2);
  CHECK(eta[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(eta[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  // sums to one at arbitrary points
  Rng rng(27);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd rr = (rng.normal_vector(3).array()).exp();
    const Eigen::VectorXd e = posterior_eta(rho, rr);
    CHECK(e.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(e.minCoeff() >= 0.0);
  }
}
