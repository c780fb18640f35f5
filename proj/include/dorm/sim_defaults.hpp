// Default site parameters for the synthetic multi-source generator.
//
// Everything here is a replaceable constant: site covariate means mu_l
// (unit radius around 0), outcome coefficients alpha_l (shared base plus a
// per-site perturbation of magnitude 0.5) and gamma_l (supported on the
// structural W columns with per-site sign flips). The tables below cover the
// canonical q = 5 layout for up to 10 sites; other shapes fall back to a
// seeded deterministic construction with the same magnitudes.

#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "dorm/rng.hpp"

namespace dorm::sim_defaults {

constexpr double kMuRadius = 1.0;
constexpr double kAlphaPerturbation = 0.5;
constexpr double kGammaMagnitude = 0.6;
constexpr int kStructuralColumns = 5;
constexpr std::uint64_t kFallbackSeed = 0x51add1e5ull;

// Non-intercept covariate mean directions, unit norm, q = 5 (4 free
// coordinates). Sites 1 and 3 (the default target support) sit at squared
// distance 1.5, balancing prior-weight identification against the density
// ratio tails; later sites spread over the remaining axes.
inline Eigen::MatrixXd mu_table_q5(int L) {
  Eigen::MatrixXd base(10, 4);
  base << 1.0, 0.0, 0.0, 0.0,              // site 1
      -0.5, -0.866025403784439, 0.0, 0.0,  // site 2
      0.25, 0.968245836551854, 0.0, 0.0,   // site 3
      0.0, 0.0, 1.0, 0.0,                  // site 4
      0.0, 0.0, 0.0, 1.0,                  // site 5
      0.8, 0.0, 0.6, 0.0,                  // site 6
      -0.4, -0.693, 0.0, 0.6,              // site 7
      0.4, 0.693, 0.6, 0.0,                // site 8
      0.0, 0.6, 0.8, 0.0,                  // site 9
      0.0, 0.0, 0.6, 0.8;                  // site 10
  return kMuRadius * base.topRows(L);
}

// Shared base for the A-coefficients (intercept first).
inline Eigen::VectorXd alpha_base_q5() {
  Eigen::VectorXd base(5);
  base << 0.1, 0.05, -0.05, 0.05, -0.05;
  return base;
}

// Unit perturbation directions in the non-intercept coordinates. The
// configuration straddles the origin: the default target-support sites
// (1 and 3) sit on one side, the remaining sites oppose them, and the five
// directions nearly cancel. The mixture coefficient then points away from
// the candidate centroid, and both typical mixture violations and the
// adversarial reweighting shrink it toward the same interior point.
inline Eigen::MatrixXd alpha_directions_q5(int L) {
  Eigen::MatrixXd dirs(10, 5);
  dirs << 0.0, 0.5, -0.5, 0.5, -0.5,                              // site 1
      0.0, 0.1, 0.7, 0.1, 0.7,                                    // site 2
      0.0, 0.7, -0.1, 0.1, -0.7,                                  // site 3
      0.0, -0.15358983848622, -0.24641016151378, -0.84641016151378,
      0.44641016151378,                                           // site 4
      0.0, -0.84641016151378, 0.44641016151378, -0.15358983848622,
      -0.24641016151378,                                          // site 5
      0.0, -0.70710678118655, -0.70710678118655, 0.0, 0.0,        // site 6
      0.0, 0.0, 0.70710678118655, -0.70710678118655, 0.0,         // site 7
      0.0, 1.0, 0.0, 0.0, 0.0,                                    // site 8
      0.0, 0.0, 0.0, -1.0, 0.0,                                   // site 9
      0.0, 0.0, 0.0, 0.70710678118655, 0.70710678118655;          // site 10
  return dirs.topRows(L);
}

// Per-site signs for the structural W coefficients: the support sites share
// one pattern, the remaining sites flip it.
inline Eigen::MatrixXd gamma_signs(int L) {
  Eigen::MatrixXd s(10, 5);
  s << 1, -1, 1, -1, 1,   // site 1
      -1, 1, -1, 1, -1,   // site 2
      1, -1, 1, -1, 1,    // site 3
      -1, 1, 1, -1, -1,   // site 4
      -1, -1, -1, 1, 1,   // site 5
      -1, 1, -1, -1, 1,   // site 6
      1, 1, 1, -1, -1,    // site 7
      -1, -1, -1, 1, -1,  // site 8
      1, -1, 1, 1, -1,    // site 9
      -1, 1, 1, 1, 1;     // site 10
  return s.topRows(L);
}

// Seeded unit vectors for layouts outside the tables.
inline Eigen::MatrixXd seeded_unit_rows(int L, int dim, std::uint64_t stream) {
  Eigen::MatrixXd out(L, dim);
  for (int l = 0; l < L; ++l) {
    Rng rng = Rng::derive(kFallbackSeed, stream, static_cast<std::uint64_t>(l));
    Eigen::VectorXd v = rng.normal_vector(dim);
    out.row(l) = v / std::max(v.norm(), 1e-12);
  }
  return out;
}

inline Eigen::MatrixXd default_mu(int L, int q) {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(L, q);  // column 0 = intercept
  if (q == 5 && L <= 10) {
    mu.rightCols(4) = mu_table_q5(L);
  } else {
    mu.rightCols(q - 1) = kMuRadius * seeded_unit_rows(L, q - 1, 1);
  }
  return mu;
}

inline Eigen::MatrixXd default_alpha(int L, int q) {
  Eigen::MatrixXd alpha(L, q);
  if (q == 5 && L <= 10) {
    const Eigen::VectorXd base = alpha_base_q5();
    const Eigen::MatrixXd dirs = alpha_directions_q5(L);
    for (int l = 0; l < L; ++l)
      alpha.row(l) = base.transpose() + kAlphaPerturbation * dirs.row(l);
  } else {
    Eigen::VectorXd base = Eigen::VectorXd::Zero(q);
    base[0] = 0.15;
    for (int j = 1; j < q; ++j) base[j] = (j % 2 == 1 ? 0.3 : -0.3);
    const Eigen::MatrixXd dirs = seeded_unit_rows(L, q, 2);
    for (int l = 0; l < L; ++l)
      alpha.row(l) = base.transpose() + kAlphaPerturbation * dirs.row(l);
  }
  return alpha;
}

inline Eigen::MatrixXd default_gamma_w(int L, int pw) {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(L, pw);
  const int cols = std::min(kStructuralColumns, pw);
  if (L <= 10) {
    const Eigen::MatrixXd s = gamma_signs(L);
    for (int l = 0; l < L; ++l)
      for (int j = 0; j < cols; ++j)
        gamma(l, j) = kGammaMagnitude * s(l, j);
  } else {
    for (int l = 0; l < L; ++l) {
      Rng rng = Rng::derive(kFallbackSeed, 3, static_cast<std::uint64_t>(l));
      for (int j = 0; j < cols; ++j)
        gamma(l, j) = kGammaMagnitude * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
  }
  return gamma;
}

}  // namespace dorm::sim_defaults
