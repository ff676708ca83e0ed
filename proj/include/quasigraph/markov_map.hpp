#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "circle.hpp"
#include "error.hpp"

namespace quasigraph {

/// One monotone C^1 branch of a Markov circle map. `eval` is the lifted branch
/// (continuous real values on [lo, hi], not reduced mod 1). `inverse`, when
/// present, takes a lifted image value back to [lo, hi].
struct BranchSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;
  std::function<double(double)> inverse;
};

class MarkovMap {
 public:
  static constexpr double kTolerance = 1e-9;

  /// x -> b x mod 1.
  static MarkovMap bary(unsigned b) {
    if (b < 2) throw Error(ErrorCode::InvalidArgument, "b-ary map needs b >= 2");
    std::vector<BranchSpec> specs;
    const double bd = static_cast<double>(b);
    for (unsigned j = 0; j < b; ++j) {
      BranchSpec s;
      s.lo = static_cast<double>(j) / bd;
      s.hi = static_cast<double>(j + 1) / bd;
      s.eval = [bd](double x) { return bd * x; };
      s.deriv = [bd](double) { return bd; };
      s.inverse = [bd](double y) { return y / bd; };
      specs.push_back(std::move(s));
    }
    return build(b == 2 ? "doubling" : "bary" + std::to_string(b), std::move(specs), 1.0 / bd, b);
  }

  static MarkovMap doubling() { return bary(2); }

  /// Registration hook for user-defined maps. Endpoints must start at 0 and
  /// end at 1; branches must be listed in order.
  static MarkovMap from_branches(std::string name, std::vector<BranchSpec> specs,
                                 std::optional<double> theta = std::nullopt) {
    return build(std::move(name), std::move(specs), theta, std::nullopt);
  }

 private:
  static MarkovMap build(std::string name, std::vector<BranchSpec> specs, std::optional<double> theta,
                         std::optional<unsigned> linear_degree) {
    if (specs.empty()) throw Error(ErrorCode::InvalidArgument, "map needs at least one branch");
    auto impl = std::make_shared<Impl>();
    impl->name = std::move(name);
    impl->endpoints.push_back(specs.front().lo);
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto& s = specs[j];
      if (!s.eval || !s.deriv) throw Error(ErrorCode::InvalidArgument, "branch needs eval and deriv");
      if (!(s.hi > s.lo)) throw Error(ErrorCode::InvalidArgument, "empty branch interval");
      if (std::fabs(s.lo - impl->endpoints.back()) > kTolerance)
        throw Error(ErrorCode::InvalidArgument, "branches must be contiguous");
      impl->endpoints.push_back(s.hi);
    }
    if (std::fabs(impl->endpoints.front()) > kTolerance || std::fabs(impl->endpoints.back() - 1.0) > kTolerance)
      throw Error(ErrorCode::InvalidArgument, "branch endpoints must span [0,1]");
    impl->endpoints.front() = 0.0;
    impl->endpoints.back() = 1.0;
    impl->branches = std::move(specs);

    double min_deriv = INFINITY;
    double max_deriv = 0.0;
    for (std::size_t j = 0; j < impl->branches.size(); ++j) {
      const auto& s = impl->branches[j];
      constexpr int kSamples = 256;
      int sign = 0;
      for (int i = 0; i <= kSamples; ++i) {
        const double x = s.lo + (s.hi - s.lo) * (i + 0.5) / (kSamples + 1);
        const double d = s.deriv(x);
        const int sg = d > 0 ? 1 : (d < 0 ? -1 : 0);
        if (sg == 0 || (sign != 0 && sg != sign))
          throw Error(ErrorCode::InvalidArgument, "branch derivative must keep a strict sign");
        sign = sg;
        min_deriv = std::min(min_deriv, std::fabs(d));
        max_deriv = std::max(max_deriv, std::fabs(d));
      }
      for (double x : {s.lo, s.hi}) {
        const double d = std::fabs(s.deriv(x));
        min_deriv = std::min(min_deriv, d);
        max_deriv = std::max(max_deriv, d);
      }
      const double a = s.eval(s.lo);
      const double b = s.eval(s.hi);
      Interval img{std::min(a, b), std::max(a, b)};
      if (img.width() > 1.0 + kTolerance) throw Error(ErrorCode::InvalidArgument, "branch wraps more than once");
      impl->images.push_back(img);
      impl->increasing.push_back(sign > 0);
    }
    if (!(min_deriv > 1.0)) throw Error(ErrorCode::InvalidArgument, "map is not expanding");
    impl->theta = theta.value_or(1.0 / min_deriv);
    if (!(impl->theta > 0.0 && impl->theta < 1.0) || min_deriv * impl->theta < 1.0 - 1e-12)
      throw Error(ErrorCode::InvalidArgument, "theta must satisfy |T'| >= 1/theta > 1");
    impl->max_deriv = max_deriv;

    const std::size_t b = impl->branches.size();
    for (std::size_t j = 0; j < b; ++j) {
      const double right = impl->branches[j].eval(impl->branches[j].hi);
      const auto& next = impl->branches[(j + 1) % b];
      const double left = next.eval(next.lo);
      if (circle_distance(right, left) > kTolerance)
        throw Error(ErrorCode::InvalidArgument, "map is discontinuous at a branch endpoint");
    }

    impl->full = true;
    impl->successors.resize(b);
    for (std::size_t j = 0; j < b; ++j) {
      const Interval img = impl->images[j];
      for (std::size_t k = 0; k < b; ++k) {
        const Interval xk{impl->endpoints[k], impl->endpoints[k + 1]};
        if (shift_into(img, xk).has_value()) impl->successors[j].push_back(static_cast<unsigned>(k));
      }
      double covered = 0.0;
      for (unsigned k : impl->successors[j]) covered += impl->endpoints[k + 1] - impl->endpoints[k];
      if (std::fabs(covered - img.width()) > 1e-7)
        throw Error(ErrorCode::InvalidArgument, "branch image is not a union of partition intervals");
      if (impl->successors[j].size() != b) impl->full = false;
    }
    impl->linear_degree = linear_degree;
    MarkovMap m;
    m.impl_ = std::move(impl);
    return m;
  }

 public:

  [[nodiscard]] const std::string& name() const noexcept { return impl_->name; }
  [[nodiscard]] std::size_t branch_count() const noexcept { return impl_->branches.size(); }
  [[nodiscard]] const std::vector<double>& endpoints() const noexcept { return impl_->endpoints; }
  [[nodiscard]] double theta() const noexcept { return impl_->theta; }
  [[nodiscard]] double max_derivative() const noexcept { return impl_->max_deriv; }
  [[nodiscard]] bool full_branched() const noexcept { return impl_->full; }
  /// Set for x -> b x mod 1; enables exact rational orbits.
  [[nodiscard]] std::optional<unsigned> linear_degree() const noexcept { return impl_->linear_degree; }
  [[nodiscard]] const BranchSpec& branch(unsigned j) const { return impl_->branches.at(j); }
  [[nodiscard]] Interval image(unsigned j) const { return impl_->images.at(j); }
  [[nodiscard]] bool increasing(unsigned j) const { return impl_->increasing.at(j); }
  [[nodiscard]] Interval partition_interval(unsigned j) const {
    return {impl_->endpoints.at(j), impl_->endpoints.at(j + 1)};
  }
  [[nodiscard]] const std::vector<unsigned>& successors(unsigned j) const { return impl_->successors.at(j); }
  [[nodiscard]] bool admissible(unsigned j, unsigned k) const {
    const auto& s = successors(j);
    return std::find(s.begin(), s.end(), k) != s.end();
  }

  /// Left-closed branch lookup.
  [[nodiscard]] unsigned branch_of(double x) const noexcept {
    const auto& e = impl_->endpoints;
    const auto it = std::upper_bound(e.begin(), e.end(), x);
    const auto idx = static_cast<long>(it - e.begin()) - 1;
    return static_cast<unsigned>(std::clamp<long>(idx, 0, static_cast<long>(branch_count()) - 1));
  }

  [[nodiscard]] double evaluate(double x) const {
    const double y = wrap01(x);
    return wrap01(branch_eval(branch_of(y), y));
  }

  [[nodiscard]] double branch_eval(unsigned j, double x) const { return impl_->branches[j].eval(x); }
  [[nodiscard]] double branch_deriv(unsigned j, double x) const { return impl_->branches[j].deriv(x); }

  /// Moves the point x by an integer so that it lies in X_k, if possible.
  [[nodiscard]] double representative_in(unsigned k, double x) const {
    const Interval xk = partition_interval(k);
    const double shift = std::floor(x - xk.lo + 1e-12);
    double y = x - shift;
    if (y > xk.hi + 1e-12) y -= 1.0;
    if (y < xk.lo - 1e-12) y += 1.0;
    return std::clamp(y, xk.lo, xk.hi);
  }

  /// Inverse branch on a lifted image value (no reduction mod 1).
  [[nodiscard]] double inverse_lifted(unsigned j, double y) const {
    const auto& s = impl_->branches[j];
    const Interval img = impl_->images[j];
    y = std::clamp(y, img.lo, img.hi);
    if (s.inverse) return std::clamp(s.inverse(y), s.lo, s.hi);
    double a = s.lo;
    double b = s.hi;
    const bool inc = impl_->increasing[j];
    while (b - a > 1e-14 * std::max(1.0, std::fabs(a))) {
      const double m = 0.5 * (a + b);
      if (m <= a || m >= b) break;
      const bool below = s.eval(m) < y;
      if (below == inc) a = m; else b = m;
    }
    return 0.5 * (a + b);
  }

  /// omega_j(y) for a circle point y in T(X_j).
  [[nodiscard]] double inverse_branch(unsigned j, double y) const {
    if (j >= branch_count()) throw Error(ErrorCode::InvalidArgument, "branch index out of range");
    const Interval img = impl_->images[j];
    const double w = wrap01(y);
    double lifted = img.lo + wrap01(w - img.lo);
    if (lifted > img.hi + kTolerance) {
      if (std::fabs(lifted - 1.0 - img.lo) <= kTolerance) {
        lifted = img.lo;
      } else {
        throw Error(ErrorCode::OutOfImage, "point " + std::to_string(y) + " is not in the image of branch " +
                                               std::to_string(j));
      }
    }
    return inverse_lifted(j, lifted);
  }

  /// Applies omega_j to an interval that lies (mod 1) inside T(X_j).
  [[nodiscard]] Interval inverse_interval(unsigned j, Interval iv) const {
    const auto shifted = shift_into(impl_->images.at(j), iv);
    if (!shifted) throw Error(ErrorCode::Inadmissible, "interval not contained in branch image");
    const double a = inverse_lifted(j, shifted->lo);
    const double b = inverse_lifted(j, shifted->hi);
    return {std::min(a, b), std::max(a, b)};
  }

 private:
  struct Impl {
    std::string name;
    std::vector<BranchSpec> branches;
    std::vector<double> endpoints;
    std::vector<Interval> images;
    std::vector<bool> increasing;
    std::vector<std::vector<unsigned>> successors;
    double theta = 0.5;
    double max_deriv = 2.0;
    bool full = true;
    std::optional<unsigned> linear_degree;
  };

  static std::optional<Interval> shift_into(Interval img, Interval iv) {
    const double m = std::ceil(img.lo - 1e-9 - iv.lo);
    const Interval s{iv.lo + m, iv.hi + m};
    if (s.lo >= img.lo - 1e-9 && s.hi <= img.hi + 1e-9) return s;
    return std::nullopt;
  }

  std::shared_ptr<const Impl> impl_;
};

/// A large safe prime q = 2p + 1. Orbits of x -> b x mod 1 are carried on the
/// rationals a/q, where multiplication by b has order at least p, so floating
/// point orbits never collapse onto dyadic rationals.
inline constexpr std::uint64_t kOrbitModulus = 2305843009213691579ULL;

inline std::uint64_t lift_to_modulus(double x) {
  const long double v = static_cast<long double>(wrap01(x)) * static_cast<long double>(kOrbitModulus);
  auto a = static_cast<std::uint64_t>(llroundl(v));
  if (a >= kOrbitModulus) a -= kOrbitModulus;
  return a;
}

/// Exact point a / (q b^level) of the lifted orbit lattice. Level 0 points
/// form a finite set invariant under x -> b x; higher levels hold exact
/// inverse-branch images, which one forward step maps back a level down.
struct LiftedPoint {
  unsigned __int128 numerator = 0;
  unsigned level = 0;
};

namespace detail {

inline unsigned __int128 lattice_denominator(unsigned b, unsigned level) {
  unsigned __int128 d = kOrbitModulus;
  for (unsigned i = 0; i < level; ++i) {
    if (d > (~static_cast<unsigned __int128>(0)) / (2 * b)) throw Error(ErrorCode::Overflow, "lattice level too deep");
    d *= b;
  }
  return d;
}

}  // namespace detail

inline LiftedPoint lift_point(double x) { return {lift_to_modulus(x), 0}; }

/// Image of p under the inverse of branch j of x -> b x.
inline LiftedPoint lifted_inverse(unsigned b, unsigned j, const LiftedPoint& p) {
  const unsigned __int128 d = detail::lattice_denominator(b, p.level + 1);
  return {p.numerator + static_cast<unsigned __int128>(j) * (d / b), p.level + 1};
}

inline double lifted_value(unsigned b, const LiftedPoint& p) {
  const unsigned __int128 d = detail::lattice_denominator(b, p.level);
  const double x = static_cast<double>(static_cast<long double>(p.numerator) / static_cast<long double>(d));
  return x >= 1.0 ? std::nextafter(1.0, 0.0) : x;
}

/// Forward orbit iterator. Exact lattice arithmetic for integer-linear maps,
/// plain double iteration otherwise.
class OrbitCursor {
 public:
  OrbitCursor(const MarkovMap& map, double x) : map_(&map), x_(wrap01(x)) {
    if (auto b = map.linear_degree()) {
      degree_ = *b;
      p_ = lift_point(x_);
      refresh_exact();
    } else {
      branch_ = map.branch_of(x_);
    }
  }

  OrbitCursor(const MarkovMap& map, const LiftedPoint& p) : map_(&map), x_(0.0) {
    auto b = map.linear_degree();
    if (!b) throw Error(ErrorCode::InvalidArgument, "lifted points need an integer-linear map");
    degree_ = *b;
    p_ = p;
    refresh_exact();
  }

  [[nodiscard]] double point() const noexcept { return x_; }
  [[nodiscard]] unsigned branch() const noexcept { return branch_; }
  [[nodiscard]] bool exact() const noexcept { return degree_ != 0; }
  [[nodiscard]] const LiftedPoint& lifted() const noexcept { return p_; }

  void advance() {
    if (degree_ != 0) {
      if (p_.level > 0) {
        p_.numerator %= detail::lattice_denominator(degree_, p_.level - 1);
        --p_.level;
      } else {
        p_.numerator = (p_.numerator * degree_) % kOrbitModulus;
      }
      refresh_exact();
    } else {
      x_ = wrap01(map_->branch_eval(branch_, x_));
      branch_ = map_->branch_of(x_);
    }
  }

 private:
  void refresh_exact() {
    x_ = lifted_value(degree_, p_);
    if (p_.level > 0) {
      branch_ = static_cast<unsigned>(p_.numerator / detail::lattice_denominator(degree_, p_.level - 1));
    } else {
      branch_ = static_cast<unsigned>((p_.numerator * degree_) / kOrbitModulus);
    }
  }

  const MarkovMap* map_;
  double x_;
  unsigned branch_ = 0;
  unsigned degree_ = 0;
  LiftedPoint p_{};
};

/// Stores n steps of an orbit: points and branches.
struct OrbitSegment {
  std::vector<double> points;
  std::vector<unsigned> branches;
};

inline OrbitSegment orbit_segment(const MarkovMap& map, double x, std::size_t n) {
  OrbitSegment seg;
  seg.points.reserve(n + 1);
  seg.branches.reserve(n + 1);
  OrbitCursor c(map, x);
  for (std::size_t i = 0; i <= n; ++i) {
    seg.points.push_back(c.point());
    seg.branches.push_back(c.branch());
    if (i < n) c.advance();
  }
  return seg;
}

}  // namespace quasigraph
