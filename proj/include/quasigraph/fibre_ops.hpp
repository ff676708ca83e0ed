#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cylinders.hpp"
#include "error.hpp"
#include "markov_map.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "skew_family.hpp"

namespace quasigraph {

inline constexpr double kValueCeiling = 1e12;

inline double check_ceiling(double v, double ceiling) {
  if (!(std::fabs(v) <= ceiling)) throw Error(ErrorCode::Overflow, "fibre value exceeds the ceiling");
  return v;
}

/// g^n_x(t).
inline double forward_compose(const SkewFamily& fam, const MarkovMap& map, double x, double t, std::size_t n,
                              double ceiling = kValueCeiling) {
  OrbitCursor c(map, x);
  for (std::size_t j = 0; j < n; ++j) {
    t = check_ceiling(fam.g(c.point(), t), ceiling);
    c.advance();
  }
  return t;
}

/// h^n_x(t) = h_x h_{Tx} ... h_{T^{n-1}x}(t).
inline double backward_compose(const SkewFamily& fam, const MarkovMap& map, double x, double t, std::size_t n,
                               double ceiling = kValueCeiling) {
  const auto seg = orbit_segment(map, x, n);
  for (std::size_t j = n; j-- > 0;) t = check_ceiling(fam.h(seg.points[j], t), ceiling);
  return t;
}

/// prod_{j<n} dh_{T^j x}(g^{j+1}_x(s)).
inline double fibre_derivative_product(const SkewFamily& fam, const MarkovMap& map, double x, double s,
                                       std::size_t n) {
  OrbitCursor c(map, x);
  double prod = 1.0;
  for (std::size_t j = 0; j < n; ++j) {
    s = fam.g(c.point(), s);
    prod *= fam.dh(c.point(), s);
    c.advance();
  }
  return prod;
}

namespace detail {

/// Extremum of |dh(x, .)| over t in [-10, 10]: grid scan plus golden-section
/// refinement around the best grid point. sign = 1 for the minimum, -1 for
/// the maximum.
inline double fibre_extremum(const SkewFamily& fam, double x, double sign) {
  auto f = [&](double t) { return sign * std::fabs(fam.dh(x, t)); };
  constexpr int kGrid = 200;
  constexpr double kLo = -10.0;
  constexpr double kStep = 20.0 / kGrid;
  double best_t = kLo;
  double best = f(kLo);
  for (int k = 1; k <= kGrid; ++k) {
    const double t = kLo + k * kStep;
    const double v = f(t);
    if (v < best) {
      best = v;
      best_t = t;
    }
  }
  double a = std::max(kLo, best_t - kStep);
  double b = std::min(-kLo, best_t + kStep);
  constexpr double r = 0.6180339887498949;
  double c = b - r * (b - a);
  double d = a + r * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 50; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return sign * std::min({best, fc, fd});
}

}  // namespace detail

/// sup of dh over X minus B_delta(P), on a grid that includes the sphere
/// points of radius delta.
inline double declared_lambda_delta(const SkewFamily& fam, double delta) {
  if (fam.neutral.lambda_delta) return fam.neutral.lambda_delta(delta);
  std::vector<double> xs;
  constexpr int kGrid = 8192;
  for (int i = 0; i < kGrid; ++i) xs.push_back((i + 0.5) / kGrid);
  for (double p : fam.neutral.points()) {
    xs.push_back(wrap01(p + delta));
    xs.push_back(wrap01(p - delta));
  }
  double sup = 0.0;
  for (double x : xs) {
    if (fam.neutral.distance(x) < delta * (1.0 - 1e-12)) continue;
    if (fam.affine) {
      sup = std::max(sup, std::fabs(fam.affine->gamma(x)));
    } else {
      sup = std::max(sup, detail::fibre_extremum(fam, x, -1.0));
    }
  }
  return sup;
}

/// lambda(eps): inf of dh over the eps-sphere around P.
inline double lambda_profile(const SkewFamily& fam, double eps) {
  if (fam.neutral.lambda_profile) return fam.neutral.lambda_profile(eps);
  double inf = INFINITY;
  for (double p : fam.neutral.points()) {
    for (double x : {wrap01(p + eps), wrap01(p - eps)}) {
      if (fam.affine) {
        inf = std::min(inf, std::fabs(fam.affine->gamma(x)));
      } else {
        inf = std::min(inf, detail::fibre_extremum(fam, x, 1.0));
      }
    }
  }
  return std::isfinite(inf) ? inf : 1.0;
}

struct ConditionCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool pass = true;
  std::string detail;
};

struct ConditionReport {
  std::vector<ConditionCheck> checks;
  double empirical_c_s = 0.0;
  double empirical_lambda_delta = 0.0;
  double declared_lambda_delta = 0.0;
  double empirical_lambda_min = 1.0;
  double holder_ratio = 0.0;
  double delta = 0.0;

  [[nodiscard]] bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ConditionCheck& c) { return c.pass; });
  }
  [[nodiscard]] const ConditionCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

struct VerifySettings {
  double delta = 0.0;  ///< 0 selects epsilon / 2
  std::size_t samples = 500;
  std::size_t max_length = 200;
  std::uint64_t seed = 1;
};

/// Monte-Carlo check of the standing conditions. Contraction conditions are
/// tested in derivative form along suffix chains of each sampled orbit, which
/// avoids cancellation in differences of nearly equal values.
inline ConditionReport verify_conditions(const SkewFamily& fam, const MarkovMap& map, VerifySettings vs = {}) {
  ConditionReport rep;
  const double delta = vs.delta > 0.0 ? vs.delta : fam.neutral.epsilon / 2.0;
  rep.delta = delta;
  const double rel = 1e-9;

  {
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double x = (i + kGoldenOffset) / 100.0;
      for (int k = 0; k < 100; ++k) {
        const double t = -10.0 + 20.0 * k / 99.0;
        worst = std::max(worst, std::fabs(fam.h(x, fam.g(x, t)) - t));
      }
    }
    rep.checks.push_back({"inverse-consistency", worst, 1e-10, worst <= 1e-10, "max |h_x(g_x(t)) - t|"});
  }
  {
    double min_slope = INFINITY;
    for (int i = 0; i < 100; ++i) {
      const double x = (i + kGoldenOffset) / 100.0;
      for (int k = 0; k < 100; ++k) {
        const double t = -10.0 + 20.0 * k / 99.0;
        min_slope = std::min(min_slope, fam.g(x, t + 1e-3) - fam.g(x, t));
        min_slope = std::min(min_slope, fam.dh(x, t) * 1e-3);
      }
    }
    rep.checks.push_back({"orientation", min_slope, 0.0, min_slope > 0.0, "g_x increasing in t"});
  }
  {
    double worst = 0.0;
    for (const auto& orbit : fam.neutral.orbits) {
      for (int k = 0; k < 100; ++k) {
        double t = -10.0 + 20.0 * k / 99.0;
        const double t0 = t;
        for (double p : orbit) t = fam.g(p, t);
        worst = std::max(worst, std::fabs(t - t0));
      }
    }
    rep.checks.push_back({"neutral-identity", worst, 1e-10, worst <= 1e-10, "max |g^l_p(t) - t| over P"});
  }
  {
    const double l0 = fam.neutral.empty() ? 1.0 : lambda_profile(fam, 0.0);
    const double le = fam.neutral.empty() ? 1.0 : lambda_profile(fam, fam.neutral.epsilon);
    const bool ok = std::fabs(l0 - 1.0) <= 1e-9 && le > 0.0;
    rep.checks.push_back({"lambda-profile", le, 0.0, ok, "lambda(0) = 1 and lambda(eps) > 0"});
  }

  rep.declared_lambda_delta = declared_lambda_delta(fam, delta);

  struct OrbitStats {
    double max_ratio = 1.0;  // h^0 is the identity
    double max_factor = 0.0;
    double lower_margin = INFINITY;
    double slow_margin = INFINITY;
    double min_rate = 1.0;
  };
  std::vector<OrbitStats> stats(vs.samples);
  const auto pts = fam.neutral.points();
  parallel_for(vs.samples, [&](std::size_t i) {
    auto rng = substream(vs.seed, "verify-orbits", i);
    double x = rng.uniform();
    // Every other orbit starts close to P so that the slow-contraction regime is exercised.
    if (!pts.empty() && i % 2 == 1) {
      const double p = pts[rng.below(pts.size())];
      x = wrap01(p + (rng.uniform() < 0.5 ? -1.0 : 1.0) * fam.neutral.epsilon * std::pow(rng.uniform(), 4.0));
    }
    const std::size_t n = 1 + rng.below(vs.max_length);
    const double t = rng.uniform(-5.0, 5.0);
    const auto seg = orbit_segment(map, x, n);
    OrbitStats st;
    double v = t;
    double deriv = 1.0;
    std::size_t visits = 0;
    for (std::size_t k = n; k-- > 0;) {
      const double xk = seg.points[k];
      const double v_next = fam.h(xk, v);
      deriv *= std::fabs(fam.dh(xk, v));
      v = v_next;
      const double dist = fam.neutral.distance(xk);
      if (dist >= delta) ++visits;
      const std::size_t len = n - k;
      st.max_ratio = std::max(st.max_ratio, deriv);
      if (visits > 0)
        st.max_factor = std::max(st.max_factor, std::pow(deriv / fam.c_s, 1.0 / static_cast<double>(visits)));
      const double lower = std::pow(fam.lambda_min, static_cast<double>(len)) / fam.c_s;
      st.lower_margin = std::min(st.lower_margin, deriv / lower);
      st.min_rate = std::min(st.min_rate, std::pow(deriv, 1.0 / static_cast<double>(len)));
    }
    // Prefix chains h^m_x whose orbit x, ..., T^{m-1}x stays inside B_eps(P).
    if (!pts.empty()) {
      std::size_t m_max = 0;
      while (m_max < seg.points.size() && m_max < 64 && fam.neutral.distance(seg.points[m_max]) < fam.neutral.epsilon)
        ++m_max;
      double slow_prod = 1.0;
      for (std::size_t m = 1; m <= m_max; ++m) {
        slow_prod *= lambda_profile(fam, fam.neutral.distance(seg.points[m - 1]));
        double w = t;
        double d = 1.0;
        for (std::size_t k = m; k-- > 0;) {
          d *= std::fabs(fam.dh(seg.points[k], w));
          w = fam.h(seg.points[k], w);
        }
        st.slow_margin = std::min(st.slow_margin, d / (slow_prod / fam.c_s));
      }
    }
    stats[i] = st;
  });

  double max_ratio = 0.0, max_factor = 0.0, lower_margin = INFINITY, slow_margin = INFINITY, min_rate = 1.0;
  for (const auto& st : stats) {
    max_ratio = std::max(max_ratio, st.max_ratio);
    max_factor = std::max(max_factor, st.max_factor);
    lower_margin = std::min(lower_margin, st.lower_margin);
    slow_margin = std::min(slow_margin, st.slow_margin);
    min_rate = std::min(min_rate, st.min_rate);
  }
  rep.empirical_c_s = max_ratio;
  rep.empirical_lambda_delta = max_factor;
  rep.empirical_lambda_min = min_rate;
  rep.checks.push_back({"non-expansion", max_ratio, fam.c_s, max_ratio <= fam.c_s * (1.0 + rel),
                        "max |dh^n| against C_S"});
  rep.checks.push_back({"fast-contraction", max_factor, rep.declared_lambda_delta,
                        max_factor <= rep.declared_lambda_delta * (1.0 + rel) && rep.declared_lambda_delta < 1.0,
                        "per-visit contraction against lambda_delta"});
  rep.checks.push_back({"lower-bound", lower_margin, 1.0, lower_margin >= 1.0 - rel,
                        "|dh^n| / (C_S^-1 lambda_min^n)"});
  rep.checks.push_back({"slow-contraction", std::isfinite(slow_margin) ? slow_margin : 1.0, 1.0,
                        !(slow_margin < 1.0 - rel), "|dh^n| / (C_S^-1 prod lambda(eps_j)) near P"});

  {
    double worst = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      auto rng = substream(vs.seed, "verify-holder", i);
      const double x = rng.uniform();
      const double d = std::pow(10.0, rng.uniform(-6.0, -2.0));
      const double y = wrap01(x + d);
      const double t = rng.uniform(-5.0, 5.0);
      const double da = std::pow(d, fam.alpha);
      worst = std::max(worst, std::fabs(fam.g(x, t) - fam.g(y, t)) / da);
      worst = std::max(worst, std::fabs(fam.h(x, t) - fam.h(y, t)) / da);
    }
    rep.holder_ratio = worst;
    const double bound = fam.holder_constant.value_or(INFINITY);
    rep.checks.push_back({"holder", worst, fam.holder_constant.value_or(0.0), std::isfinite(worst) && worst <= bound,
                          "max |g_x(t) - g_y(t)| / d(x,y)^alpha"});
  }
  return rep;
}

/// Lifted composite branch of T^ell along a word.
inline BranchSpec composite_branch(const MarkovMap& map, const CylinderWord& w) {
  const Interval iv = cylinder_interval(map, w);
  const double mid = iv.mid();
  std::vector<double> shifts;
  {
    double y = mid;
    for (std::size_t i = 0; i + 1 < w.rank(); ++i) {
      y = map.branch_eval(w.symbols[i], y);
      const double rep = map.representative_in(w.symbols[i + 1], y);
      shifts.push_back(y - rep);
      y = rep;
    }
  }
  BranchSpec s;
  s.lo = iv.lo;
  s.hi = iv.hi;
  s.eval = [map, w, shifts](double x) {
    double y = x;
    for (std::size_t i = 0; i < w.rank(); ++i) {
      y = map.branch_eval(w.symbols[i], y);
      if (i < shifts.size()) y -= shifts[i];
    }
    return y;
  };
  s.deriv = [map, w, shifts](double x) {
    double y = x;
    double d = 1.0;
    for (std::size_t i = 0; i < w.rank(); ++i) {
      d *= map.branch_deriv(w.symbols[i], y);
      y = map.branch_eval(w.symbols[i], y);
      if (i < shifts.size()) y -= shifts[i];
    }
    return d;
  };
  s.inverse = [map, w, shifts](double y) {
    for (std::size_t i = w.rank(); i-- > 0;) {
      y = map.inverse_lifted(w.symbols[i], y);
      if (i > 0) y += shifts[i - 1];
    }
    return y;
  };
  return s;
}

struct ReducedSystem {
  SkewFamily family;
  MarkovMap map;
};

/// Passes to (g^ell over T^ell) so that every neutral orbit becomes a set of
/// fixed points.
inline ReducedSystem reduce_to_fixed_points(const SkewFamily& fam, const MarkovMap& map, std::size_t ell,
                                            std::size_t branch_ceiling = 1u << 16) {
  if (ell == 0) throw Error(ErrorCode::InvalidArgument, "power must be positive");
  for (const auto& o : fam.neutral.orbits)
    if (ell % o.size() != 0) throw Error(ErrorCode::InvalidArgument, "power is not a multiple of every period");
  double branches = 1.0;
  for (std::size_t i = 0; i < ell; ++i) branches *= static_cast<double>(map.branch_count());
  if (branches > static_cast<double>(branch_ceiling))
    throw Error(ErrorCode::BudgetExceeded, "b^ell exceeds the branch ceiling");
  if (ell == 1 && map.full_branched()) return {fam, map};

  MarkovMap power = [&] {
    if (auto b = map.linear_degree()) {
      unsigned bl = 1;
      for (std::size_t i = 0; i < ell; ++i) bl *= *b;
      return MarkovMap::bary(bl);
    }
    std::vector<BranchSpec> specs;
    for (const auto& w : all_words(map, ell)) specs.push_back(composite_branch(map, w));
    std::sort(specs.begin(), specs.end(), [](const BranchSpec& a, const BranchSpec& b) { return a.lo < b.lo; });
    return MarkovMap::from_branches(map.name() + "^" + std::to_string(ell), std::move(specs));
  }();
  if (!power.full_branched()) throw Error(ErrorCode::InvalidArgument, "power of the map is not full-branched");

  SkewFamily out = fam;
  out.name = fam.name + "^" + std::to_string(ell);
  const MarkovMap base = map;
  auto orbit_pts = [base, ell](double x) {
    std::vector<double> pts(ell);
    double y = x;
    for (std::size_t i = 0; i < ell; ++i) {
      pts[i] = y;
      y = base.evaluate(y);
    }
    return pts;
  };
  out.g = [g = fam.g, orbit_pts](double x, double t) {
    for (double y : orbit_pts(x)) t = g(y, t);
    return t;
  };
  out.h = [h = fam.h, orbit_pts](double x, double t) {
    const auto pts = orbit_pts(x);
    for (std::size_t i = pts.size(); i-- > 0;) t = h(pts[i], t);
    return t;
  };
  out.dh = [h = fam.h, dh = fam.dh, orbit_pts](double x, double t) {
    const auto pts = orbit_pts(x);
    double d = 1.0;
    for (std::size_t i = pts.size(); i-- > 0;) {
      d *= dh(pts[i], t);
      t = h(pts[i], t);
    }
    return d;
  };
  out.d2h = nullptr;
  if (fam.affine) {
    const auto g = fam.g;
    const auto gamma = fam.affine->gamma;
    out.affine = AffineForm{[g, orbit_pts](double x) {
                              double t = 0.0;
                              for (double y : orbit_pts(x)) t = g(y, t);
                              return t;
                            },
                            [gamma, orbit_pts](double x) {
                              double p = 1.0;
                              for (double y : orbit_pts(x)) p *= gamma(y);
                              return p;
                            }};
  }
  std::vector<double> fixed;
  for (double p : fam.neutral.points()) fixed.push_back(p);
  NeutralSet ns;
  for (double p : fixed) ns.orbits.push_back({p});
  ns.epsilon = default_epsilon(power, fixed);
  out.neutral = ns;
  out.lambda_min = std::pow(fam.lambda_min, static_cast<double>(ell));
  return {std::move(out), std::move(power)};
}

}  // namespace quasigraph
