// Unit-hypersphere primitives: norms, normalization, cosine similarity, angles,
// and the small row-major matrix type used for classifier centers and layers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "vareid/error.hpp"

namespace vareid {

using Vec = std::vector<double>;

/// Below this norm a vector has no usable direction.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Tolerance for inputs that are required to lie on the unit sphere.
inline constexpr double kUnitNormTolerance = 1e-6;

/// Dense row-major matrix. Rows are the natural unit here: one row per class
/// center or per output neuron.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::LengthMismatch, "dot of vectors with different dimension");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double checked_norm(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > kZeroNormThreshold)) {
    throw Error(ErrorKind::ZeroVector, "vector norm " + std::to_string(n) + " is below threshold");
  }
  return n;
}

inline Vec normalize(std::span<const double> v) {
  const double n = checked_norm(v);
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

inline void normalize_in_place(std::span<double> v) {
  const double n = checked_norm(v);
  for (double& x : v) x /= n;
}

inline void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows; ++i) normalize_in_place(m.row(i));
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = checked_norm(a);
  const double nb = checked_norm(b);
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline double angle(std::span<const double> a, std::span<const double> b) {
  return std::acos(cosine(a, b));
}

inline void require_unit(std::span<const double> v, const char* what) {
  const double n = norm(v);
  if (!(std::abs(n - 1.0) <= kUnitNormTolerance)) {
    throw Error(ErrorKind::NotUnitNorm, std::string(what) + " has norm " + std::to_string(n));
  }
}

}  // namespace vareid
