#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace sgdlab {

/// Snaps v to the nearest integer when within rounding noise, so that
/// s * T or d * x computed in floating point lands on the intended grid index.
inline double snap_to_integer(double v) {
  const double r = std::round(v);
  return std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v)) ? r : v;
}

/// floor(s * T) with grid snapping.
inline std::size_t time_index(double s, double T) {
  return static_cast<std::size_t>(std::floor(snap_to_integer(s * T)));
}

}  // namespace sgdlab
