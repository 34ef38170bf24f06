#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace shellflow {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Malformed specs, configs, or dimension mismatches. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values, CFL violations, blown-up runs. CLI exit code 3.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An exact identity violated beyond tolerance. CLI exit code 4.
struct CheckError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Eigen::Ref<const VectorXd>& v) {
  return v.allFinite();
}

inline double relative_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale == 0.0) return 0.0;
  return std::abs(a - b) / scale;
}

/// Deterministic generator for a (seed, salt) pair. Salts keep independent
/// random streams (teacher vs. student vs. data) from colliding.
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  return std::mt19937_64(seed ^ (salt * 0x9E3779B97F4A7C15ull + (salt << 1)));
}

/// Empirical L2 inner product on the sample set: <f,g> = sum_i w_i f_i g_i.
inline double weighted_inner(const VectorXd& f, const VectorXd& g, const VectorXd& w) {
  if (f.size() != g.size() || f.size() != w.size())
    throw ConfigError("weighted_inner: size mismatch");
  return (w.array() * f.array() * g.array()).sum();
}

inline double weighted_norm_sq(const VectorXd& f, const VectorXd& w) {
  return weighted_inner(f, f, w);
}

}  // namespace shellflow
