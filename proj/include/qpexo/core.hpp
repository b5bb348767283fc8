#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qpexo {

/// Bivariate (left, right) hip quantity.
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Progress grid used by every motion model and human reference.
inline constexpr std::size_t kGridSize = 101;
inline constexpr double kGridStep = 0.01;

inline constexpr double kPi = std::numbers::pi;

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV row, JSON document).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or schema violation.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Progress value of grid index n on a grid of `size` points.
inline double grid_progress(std::size_t n, std::size_t size = kGridSize) {
  return size > 1 ? static_cast<double>(n) / static_cast<double>(size - 1) : 0.0;
}

inline bool is_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

}  // namespace qpexo
