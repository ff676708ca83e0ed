#pragma once

#include <algorithm>
#include <cmath>

namespace quasigraph {

inline constexpr double kPi = 3.14159265358979323846;

/// Fractional part of the golden ratio; used to offset sampling grids away
/// from rationals with small denominators.
inline constexpr double kGoldenOffset = 0.61803398874989484820;

/// Maps any real to its representative in [0, 1).
inline double wrap01(double x) noexcept {
  double r = x - std::floor(x);
  if (r >= 1.0) r -= 1.0;
  return r;
}

/// Distance on the circle R/Z.
inline double circle_distance(double x, double y) noexcept {
  const double d = std::fabs(wrap01(x) - wrap01(y));
  return std::min(d, 1.0 - d);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double width() const noexcept { return hi - lo; }
  [[nodiscard]] double mid() const noexcept { return 0.5 * (lo + hi); }
  [[nodiscard]] bool contains(double x, double slack = 0.0) const noexcept {
    return x >= lo - slack && x <= hi + slack;
  }
  friend bool operator==(const Interval&, const Interval&) = default;
};

}  // namespace quasigraph
