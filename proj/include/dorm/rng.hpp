// Deterministic random number generation with named substreams.
//
// All randomness in the library flows through this wrapper so that a single
// 64-bit seed reproduces every draw bit-for-bit, independent of platform
// standard-library distribution implementations and of how work is split
// across threads (each unit of work derives its own substream).

#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>
#include <numeric>
#include <stdexcept>

#include <Eigen/Core>

namespace dorm {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Substream addressed by up to three indices (site, fold, draw, ...).
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
    std::uint64_t s = seed;
    splitmix64(s);
    s ^= 0xd1b54a32d192ed03ull * (a + 1);
    splitmix64(s);
    s ^= 0x8cb92ba72f3d8dd7ull * (b + 1);
    splitmix64(s);
    s ^= 0xaef17502108ef2d9ull * (c + 1);
    return Rng(splitmix64(s));
  }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1].
  double uniform_open() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller (trig form, cached spare).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double exponential() { return -std::log(uniform_open()); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    return gen_() % n;
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const auto j = uniform_int(static_cast<std::uint64_t>(i) + 1);
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    return idx;
  }

  // Uniform draw from the probability simplex via exponential spacings.
  Eigen::VectorXd simplex(int dim) {
    Eigen::VectorXd e(dim);
    for (int i = 0; i < dim; ++i) e[i] = exponential();
    return e / e.sum();
  }

  // Index sampled from a probability vector (need not be exactly normalized).
  template <class Derived>
  int categorical(const Eigen::DenseBase<Derived>& probs) {
    const double u = uniform() * probs.sum();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      acc += probs(i);
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dorm
