#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "dorm/rng.hpp"
#include "dorm/tuning.hpp"

using namespace dorm;

namespace {

DormModel model_with_coef(const Eigen::VectorXd& coef, double s) {
  DormModel m;
  m.coef = coef;
  m.s_max = s;
  return m;
}

TuningSample labeled_sample(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  TuningSample t;
  t.A = A;
  t.y = y;
  return t;
}

}  // namespace

TEST_CASE("tune_mse breaks ties toward the smaller candidate") {
  Rng rng(71);
  const Eigen::MatrixXd A = rng.normal_matrix(10, 3);
  Eigen::VectorXd coef(3);
  coef << 1.0, -0.5, 0.2;
  std::map<double, DormModel> models;
  models[0.1] = model_with_coef(coef, 0.1);
  models[0.3] = model_with_coef(coef, 0.3);  // identical model
  const TuningResult r =
      tune_mse(models, labeled_sample(A, rng.normal_vector(10)));
  CHECK(r.s_hat == 0.1);
  CHECK(r.scores.size() == 2);
  CHECK(r.scores[0].second == doctest::Approx(r.scores[1].second));
}

TEST_CASE("noiseless data from the s=0 model selects s_hat = 0") {
  Rng rng(72);
  const Eigen::MatrixXd A = rng.normal_matrix(15, 3);
  Eigen::VectorXd mix_coef(3);
  mix_coef << 0.5, 1.0, -1.0;
  const Eigen::VectorXd y = A * mix_coef;

  std::map<double, DormModel> models;
  models[0.0] = model_with_coef(mix_coef, 0.0);
  Eigen::VectorXd other = mix_coef;
  other[1] += 0.4;
  models[0.2] = model_with_coef(other, 0.2);
  other[1] += 0.4;
  models[0.4] = model_with_coef(other, 0.4);

  const TuningResult r = tune_mse(models, labeled_sample(A, y));
  CHECK(r.s_hat == 0.0);
}

TEST_CASE("tune_mse is invariant to row shuffles") {
  Rng rng(73);
  const Eigen::MatrixXd A = rng.normal_matrix(12, 2);
  const Eigen::VectorXd y = rng.normal_vector(12);
  std::map<double, DormModel> models;
  Eigen::VectorXd c1(2), c2(2);
  c1 << 0.3, 0.4;
  c2 << -0.1, 0.9;
  models[0.0] = model_with_coef(c1, 0.0);
  models[0.5] = model_with_coef(c2, 0.5);

  const TuningResult base = tune_mse(models, labeled_sample(A, y));

  const std::vector<int> perm = Rng(74).permutation(12);
  Eigen::MatrixXd As(12, 2);
  Eigen::VectorXd ys(12);
  for (int i = 0; i < 12; ++i) {
    As.row(i) = A.row(perm[static_cast<std::size_t>(i)]);
    ys[i] = y[perm[static_cast<std::size_t>(i)]];
  }
  const TuningResult shuffled = tune_mse(models, labeled_sample(As, ys));
  CHECK(base.s_hat == shuffled.s_hat);
  for (std::size_t k = 0; k < base.scores.size(); ++k)
    CHECK(base.scores[k].second ==
          doctest::Approx(shuffled.scores[k].second).epsilon(1e-12));
}

TEST_CASE("adding a dominated candidate never changes the selection") {
  Rng rng(75);
  const Eigen::MatrixXd A = rng.normal_matrix(14, 2);
  Eigen::VectorXd good(2), bad(2);
  good << 1.0, -1.0;
  bad << 25.0, 13.0;  // wildly wrong: strictly dominated on the criterion
  const Eigen::VectorXd y = A * good + 0.1 * rng.normal_vector(14);

  std::map<double, DormModel> models;
  models[0.1] = model_with_coef(good, 0.1);
  models[0.3] = model_with_coef(good * 0.9, 0.3);
  const TuningResult before = tune_mse(models, labeled_sample(A, y));
  models[0.5] = model_with_coef(bad, 0.5);
  const TuningResult after = tune_mse(models, labeled_sample(A, y));
  CHECK(before.s_hat == after.s_hat);
}

TEST_CASE("perfect surrogate reproduces the mse selection on noiseless data") {
  Rng rng(76);
  const Eigen::MatrixXd A = rng.normal_matrix(20, 3);
  Eigen::VectorXd mix_coef(3);
  mix_coef << 0.2, 0.7, -0.4;
  const Eigen::VectorXd y = A * mix_coef;

  std::map<double, DormModel> models;
  models[0.0] = model_with_coef(mix_coef, 0.0);
  Eigen::VectorXd other = mix_coef;
  other[2] = 0.9;
  models[0.25] = model_with_coef(other, 0.25);

  TuningSample lab = labeled_sample(A, y);
  const TuningResult mse = tune_mse(models, lab);

  TuningSample sur;
  sur.A = A;
  sur.surrogate = y;
  const TuningResult cor = tune_surrogate(models, sur);
  CHECK(mse.s_hat == cor.s_hat);
}

TEST_CASE("surrogate selection is invariant to affine rescaling") {
  Rng rng(77);
  const Eigen::MatrixXd A = rng.normal_matrix(16, 2);
  Eigen::VectorXd c1(2), c2(2);
  c1 << 1.0, 0.3;
  c2 << -0.2, 1.1;
  std::map<double, DormModel> models;
  models[0.0] = model_with_coef(c1, 0.0);
  models[0.3] = model_with_coef(c2, 0.3);

  TuningSample sur;
  sur.A = A;
  sur.surrogate = (A * c2).array() + 0.3 * rng.normal_vector(16).array();
  const TuningResult base = tune_surrogate(models, sur);

  TuningSample scaled = sur;
  scaled.surrogate = (3.0 * sur.surrogate->array() + 7.0).matrix();
  const TuningResult after = tune_surrogate(models, scaled);
  CHECK(base.s_hat == after.s_hat);
  for (std::size_t k = 0; k < base.scores.size(); ++k)
    CHECK(base.scores[k].second ==
          doctest::Approx(after.scores[k].second).epsilon(1e-10));
}

TEST_CASE("pure-noise surrogate trips the uninformative warning") {
  Rng rng(78);
  const Eigen::MatrixXd A = rng.normal_matrix(20, 2);
  std::map<double, DormModel> models;
  Eigen::VectorXd c(2);
  c << 0.5, -0.5;
  models[0.0] = model_with_coef(c, 0.0);
  models[0.2] = model_with_coef(1.7 * c, 0.2);

  // Search over independent noise surrogates until all correlations are
  // small; 20 rows make that frequent.
  bool warned = false;
  for (std::uint64_t seed = 0; seed < 50 && !warned; ++seed) {
    TuningSample sur;
    sur.A = A;
    sur.surrogate = Rng(200 + seed).normal_vector(20);
    const TuningResult r = tune_surrogate(models, sur);
    warned = r.uninformative;
  }
  CHECK(warned);

  // Zero-variance surrogate is an error.
  TuningSample flat;
  flat.A = A;
  flat.surrogate = Eigen::VectorXd::Constant(20, 3.0);
  CHECK_THROWS_WITH_AS(tune_surrogate(models, flat),
                       doctest::Contains("uninformative surrogate"),
                       ValidationError);

  // Zero-variance predictions at every candidate are an error too.
  std::map<double, DormModel> degenerate;
  degenerate[0.0] = model_with_coef(Eigen::VectorXd::Zero(2), 0.0);
  TuningSample sur;
  sur.A = A;
  sur.surrogate = Rng(300).normal_vector(20);
  CHECK_THROWS_WITH_AS(tune_surrogate(degenerate, sur),
                       doctest::Contains("uninformative surrogate"),
                       ValidationError);
}

TEST_CASE("empty candidate grids are rejected") {
  std::map<double, DormModel> empty;
  TuningSample t;
  t.A = Eigen::MatrixXd::Ones(3, 1);
  t.y = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(tune_mse(empty, t), std::invalid_argument);
}
