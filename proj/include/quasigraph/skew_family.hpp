#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "circle.hpp"
#include "cylinders.hpp"
#include "error.hpp"
#include "expression.hpp"
#include "markov_map.hpp"

namespace quasigraph {

using ScalarFn = std::function<double(double)>;
using FibreFn = std::function<double(double, double)>;

struct NeutralSet {
  std::vector<std::vector<double>> orbits;
  double epsilon = 0.05;
  /// lambda(eps); empty means "derive from the fibre derivative".
  ScalarFn lambda_profile;
  /// delta -> lambda_delta; empty means "derive from the fibre derivative".
  ScalarFn lambda_delta;

  [[nodiscard]] std::vector<double> points() const {
    std::vector<double> pts;
    for (const auto& o : orbits) pts.insert(pts.end(), o.begin(), o.end());
    return pts;
  }
  [[nodiscard]] std::size_t rho() const noexcept { return orbits.size(); }
  [[nodiscard]] bool empty() const noexcept { return orbits.empty(); }
  [[nodiscard]] double distance(double x) const {
    double d = INFINITY;
    for (const auto& o : orbits)
      for (double p : o) d = std::min(d, circle_distance(x, p));
    return d;
  }
  /// (orbit index, position) for a point of P, within tol.
  [[nodiscard]] std::optional<std::pair<std::size_t, std::size_t>> locate(double x, double tol = 1e-12) const {
    for (std::size_t r = 0; r < orbits.size(); ++r)
      for (std::size_t i = 0; i < orbits[r].size(); ++i)
        if (circle_distance(x, orbits[r][i]) <= tol) return std::make_pair(r, i);
    return std::nullopt;
  }
};

/// g_x(t) = f(x) + t / gamma(x).
struct AffineForm {
  ScalarFn f;
  ScalarFn gamma;
};

struct SkewFamily {
  std::string name;
  FibreFn g;
  FibreFn h;
  FibreFn dh;
  FibreFn d2h;
  bool analytic_dh = false;
  double alpha = 1.0;
  NeutralSet neutral;
  double lambda_min = 0.0;
  double c_s = 1.0;
  std::optional<double> holder_constant;
  std::optional<AffineForm> affine;
  /// Expression sources when built from a config, for reports.
  std::string f_source;
  std::string gamma_source;
};

/// Shadowing radius: a fraction of the separation of P and the
/// partition endpoints, divided by 4 |T'|_max.
inline double default_epsilon(const MarkovMap& map, const std::vector<double>& neutral_points) {
  std::vector<double> pts = neutral_points;
  for (double e : map.endpoints()) pts.push_back(wrap01(e));
  double d = 0.5;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dist = circle_distance(pts[i], pts[j]);
      if (dist > 1e-12) d = std::min(d, dist);
    }
  return 0.8 * d / (4.0 * map.max_derivative());
}

inline NeutralSet make_neutral_set(const MarkovMap& map, const std::vector<double>& representatives,
                                   std::optional<double> epsilon = std::nullopt) {
  NeutralSet ns;
  for (double p : representatives) {
    bool known = false;
    for (const auto& o : ns.orbits)
      if (distance_to_set(p, o) <= 1e-12) known = true;
    if (!known) ns.orbits.push_back(periodic_orbit(map, p));
  }
  ns.epsilon = epsilon.value_or(default_epsilon(map, ns.points()));
  return ns;
}

inline FibreFn finite_difference(FibreFn h, double step = 1e-6) {
  return [h = std::move(h), step](double x, double t) { return (h(x, t + step) - h(x, t - step)) / (2.0 * step); };
}

/// Minimum over the circle: a grid scan followed by golden-section
/// refinement around the best grid point.
inline double grid_min(const ScalarFn& fn, int count = 4096) {
  double m = INFINITY;
  double best = 0.0;
  for (int i = 0; i < 2 * count; ++i) {
    const double x = 0.5 * i / count;
    const double v = fn(x);
    if (v < m) {
      m = v;
      best = x;
    }
  }
  double a = best - 0.5 / count;
  double b = best + 0.5 / count;
  constexpr double r = 0.6180339887498949;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = fn(wrap01(c));
  double fd = fn(wrap01(d));
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = fn(wrap01(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = fn(wrap01(d));
    }
  }
  return std::min({m, fc, fd});
}

inline SkewFamily make_affine_family(std::string name, const MarkovMap& map, ScalarFn f, ScalarFn gamma,
                                     const std::vector<double>& neutral_points,
                                     std::optional<double> epsilon = std::nullopt) {
  SkewFamily fam;
  fam.name = std::move(name);
  fam.g = [f, gamma](double x, double t) { return f(x) + t / gamma(x); };
  fam.h = [f, gamma](double x, double t) { return gamma(x) * (t - f(x)); };
  fam.dh = [gamma](double x, double) { return gamma(x); };
  fam.d2h = [](double, double) { return 0.0; };
  fam.analytic_dh = true;
  fam.neutral = make_neutral_set(map, neutral_points, epsilon);
  ScalarFn abs_gamma = [gamma](double x) { return std::fabs(gamma(x)); };
  fam.lambda_min = grid_min(abs_gamma);
  for (double p : fam.neutral.points()) fam.lambda_min = std::min(fam.lambda_min, std::fabs(gamma(p)));
  fam.c_s = 1.0;
  fam.affine = AffineForm{std::move(f), std::move(gamma)};
  return fam;
}

/// Family from the forward map and its fibre derivative; the inverse is
/// solved by safeguarded Newton iteration.
inline SkewFamily make_forward_family(std::string name, const MarkovMap& map, FibreFn g, FibreFn dg,
                                      const std::vector<double>& neutral_points, double lambda_min,
                                      std::optional<double> epsilon = std::nullopt) {
  SkewFamily fam;
  fam.name = std::move(name);
  auto solve = [g, dg](double x, double y) {
    double t = y;
    double lo = -INFINITY;
    double hi = INFINITY;
    for (int it = 0; it < 100; ++it) {
      const double r = g(x, t) - y;
      if (r == 0.0) return t;
      if (r > 0.0) hi = std::min(hi, t); else lo = std::max(lo, t);
      double next = t - r / dg(x, t);
      if (std::isfinite(lo) && std::isfinite(hi) && (next <= lo || next >= hi)) next = 0.5 * (lo + hi);
      if (std::fabs(next - t) <= 1e-16 * std::max(1.0, std::fabs(t))) return next;
      t = next;
    }
    return t;
  };
  fam.g = g;
  fam.h = solve;
  fam.dh = [g, dg, solve](double x, double t) { return 1.0 / dg(x, solve(x, t)); };
  fam.analytic_dh = true;
  fam.neutral = make_neutral_set(map, neutral_points, epsilon);
  fam.lambda_min = lambda_min;
  fam.c_s = 1.0;
  return fam;
}

/// Adds a * beta(x) to every fibre map.
inline SkewFamily shifted_family(const SkewFamily& base, ScalarFn beta, double amplitude, std::string name) {
  SkewFamily fam = base;
  fam.name = std::move(name);
  if (amplitude == 0.0) return fam;
  auto shift = [beta, amplitude](double x) { return amplitude * beta(x); };
  fam.g = [g = base.g, shift](double x, double t) { return g(x, t) + shift(x); };
  fam.h = [h = base.h, shift](double x, double t) { return h(x, t - shift(x)); };
  fam.dh = [dh = base.dh, shift](double x, double t) { return dh(x, t - shift(x)); };
  if (base.d2h) fam.d2h = [d2h = base.d2h, shift](double x, double t) { return d2h(x, t - shift(x)); };
  if (base.affine) {
    fam.affine = AffineForm{[f = base.affine->f, shift](double x) { return f(x) + shift(x); }, base.affine->gamma};
  }
  return fam;
}

/// C-infinity bump of height 1 supported on the open arc of radius width.
inline ScalarFn smooth_bump(double center, double width) {
  return [center, width](double x) {
    const double d = circle_distance(x, center) / width;
    if (d >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - d * d));
  };
}

namespace families {

inline double figure1_gamma(double x) { return (3.0 + std::cos(2.0 * kPi * x)) / 4.0; }

/// f = cos(2 pi x), constant gamma = lambda; graph of a Weierstrass function.
inline SkewFamily weierstrass(const MarkovMap& map, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in (0,1)");
  std::ostringstream label;
  label << "weierstrass-" << lambda;
  auto fam = make_affine_family(
      label.str(), map, [](double x) { return std::cos(2.0 * kPi * x); }, [lambda](double) { return lambda; }, {});
  fam.f_source = "cos(2*pi*x)";
  std::ostringstream src;
  src << std::setprecision(17) << lambda;
  fam.gamma_source = src.str();
  return fam;
}

inline SkewFamily figure1(const MarkovMap& map) {
  auto fam = make_affine_family(
      "figure1", map, [](double x) { return std::sin(2.0 * kPi * x); }, figure1_gamma, {0.0});
  fam.f_source = "sin(2*pi*x)";
  fam.gamma_source = "(3+cos(2*pi*x))/4";
  return fam;
}

/// Same base and neutral point as figure1 with a t-nonlinear term that
/// vanishes at x = 0.
inline SkewFamily figure1_nonlinear(const MarkovMap& map) {
  auto c = [](double x) {
    const double s = std::sin(kPi * x);
    return 0.1 * s * s;
  };
  FibreFn g = [c](double x, double t) {
    return std::sin(2.0 * kPi * x) + (t + c(x) * std::tanh(t)) / figure1_gamma(x);
  };
  FibreFn dg = [c](double x, double t) {
    const double sech = 1.0 / std::cosh(t);
    return (1.0 + c(x) * sech * sech) / figure1_gamma(x);
  };
  const double lmin = grid_min([c](double x) { return figure1_gamma(x) / (1.0 + c(x)); });
  auto fam = make_forward_family("figure1-nonlinear", map, g, dg, {0.0}, lmin);
  fam.neutral.lambda_delta = [](double delta) {
    // sup of dh outside B_delta(0) is approached as |t| grows, where it tends to gamma.
    return figure1_gamma(std::min(delta, 0.5));
  };
  return fam;
}

/// f = 0, gamma = 1/2: the zero function is the invariant graph.
inline SkewFamily flat(const MarkovMap& map) {
  auto fam = make_affine_family("flat", map, [](double) { return 0.0; }, [](double) { return 0.5; }, {});
  fam.f_source = "0";
  fam.gamma_source = "0.5";
  return fam;
}

/// Figure-1 gamma with f chosen so that u0 = cos(2 pi x) is invariant, hence
/// the quasi-graph is the graph of a continuous function.
inline SkewFamily continuous_constructed(const MarkovMap& map) {
  auto u0 = [](double x) { return std::cos(2.0 * kPi * x); };
  const MarkovMap base = map;
  ScalarFn f = [u0, base](double x) { return u0(base.evaluate(x)) - u0(x) / figure1_gamma(x); };
  auto fam = make_affine_family("continuous", map, f, figure1_gamma, {0.0});
  fam.f_source = "cos(2*pi*T(x)) - cos(2*pi*x)/gamma(x)";
  fam.gamma_source = "(3+cos(2*pi*x))/4";
  return fam;
}

inline SkewFamily from_expressions(std::string name, const MarkovMap& map, const std::string& f_expr,
                                   const std::string& gamma_expr, const std::vector<double>& neutral_points,
                                   std::optional<double> epsilon = std::nullopt) {
  const Expression f = Expression::parse(f_expr);
  const Expression gamma = Expression::parse(gamma_expr);
  auto fam = make_affine_family(std::move(name), map, [f](double x) { return f(x); },
                                [gamma](double x) { return gamma(x); }, neutral_points, epsilon);
  fam.f_source = f_expr;
  fam.gamma_source = gamma_expr;
  return fam;
}

inline std::vector<std::string> builtin_names() {
  return {"weierstrass-0.5", "weierstrass-0.8", "figure1", "figure1-nonlinear", "flat", "continuous"};
}

inline SkewFamily builtin(const std::string& name, const MarkovMap& map, double lambda = 0.8) {
  if (name == "weierstrass") return weierstrass(map, lambda);
  if (name == "weierstrass-0.5") return weierstrass(map, 0.5);
  if (name == "weierstrass-0.6") return weierstrass(map, 0.6);
  if (name == "weierstrass-0.8") return weierstrass(map, 0.8);
  if (name == "figure1") return figure1(map);
  if (name == "figure1-nonlinear") return figure1_nonlinear(map);
  if (name == "flat") return flat(map);
  if (name == "continuous") return continuous_constructed(map);
  throw Error(ErrorCode::InvalidArgument, "unknown builtin family '" + name + "'");
}

}  // namespace families
}  // namespace quasigraph
