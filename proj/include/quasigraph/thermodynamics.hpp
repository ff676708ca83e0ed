#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "atlas.hpp"
#include "cylinders.hpp"
#include "error.hpp"
#include "markov_map.hpp"
#include "parallel.hpp"
#include "skew_family.hpp"

namespace quasigraph {

/// A real function on X. `eval` receives the branch index so that closed
/// cylinder endpoints are evaluated on the correct side.
struct Potential {
  std::string name;
  std::function<double(double, unsigned)> eval;
  std::size_t points_per_cylinder = 3;
};

inline Potential constant_potential(double c) {
  return {"constant", [c](double, unsigned) { return c; }, 3};
}

inline Potential log_derivative_potential(const MarkovMap& map) {
  return {"log|T'|", [map](double x, unsigned j) { return std::log(std::fabs(map.branch_deriv(j, x))); }, 3};
}

/// a * log|T'| + b * psi + c.
inline Potential combine(const Potential& log_t, double a, const Potential& psi, double b, double c = 0.0) {
  return {"combined",
          [log_t, a, psi, b, c](double x, unsigned j) { return a * log_t.eval(x, j) + b * psi.eval(x, j) + c; },
          std::max(log_t.points_per_cylinder, psi.points_per_cylinder)};
}

inline double birkhoff_sum(const Potential& pot, const MarkovMap& map, double x, std::size_t n) {
  OrbitCursor c(map, x);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    s += pot.eval(c.point(), c.branch());
    c.advance();
  }
  return s;
}

/// x -> log D h(x). Affine families give log|gamma| directly; otherwise the
/// provider supplies u(Tx), or the upper endpoint of U_{Tx} on R_P.
inline Potential make_D_potential(const SkewFamily& fam, const MarkovMap& map, const GraphProvider* provider) {
  if (fam.affine) {
    auto gamma = fam.affine->gamma;
    return {"log Dh", [gamma](double x, unsigned) { return std::log(std::fabs(gamma(x))); }, 3};
  }
  if (provider == nullptr) throw Error(ErrorCode::InvalidArgument, "non-affine family needs a graph provider");
  auto dh = fam.dh;
  return {"log Dh",
          [dh, map, provider](double x, unsigned j) {
            const double tx = wrap01(map.branch_eval(j, x));
            return std::log(std::fabs(dh(x, provider->fibre_anchor(tx))));
          },
          3};
}

struct PressureOptions {
  std::size_t budget = 1u << 22;
  std::size_t points = 3;
};

namespace detail {

inline std::size_t word_count(const MarkovMap& map, std::size_t n, std::size_t budget) {
  double total = 1.0;
  for (std::size_t i = 0; i < n; ++i) total *= static_cast<double>(map.branch_count());
  if (total > static_cast<double>(budget))
    throw Error(ErrorCode::BudgetExceeded, "rank-" + std::to_string(n) + " cylinders exceed the budget");
  return static_cast<std::size_t>(total);
}

/// Evaluation points of a cylinder: both closed endpoints and interior
/// points equally spaced between them.
inline std::vector<double> cylinder_points(Interval iv, std::size_t m) {
  std::vector<double> pts;
  if (m <= 1) return {iv.lo};
  pts.push_back(iv.lo);
  for (std::size_t k = 1; k + 1 < m; ++k) pts.push_back(iv.lo + iv.width() * static_cast<double>(k) / (m - 1));
  pts.push_back(iv.hi);
  return pts;
}

/// Calls f(slot, word) for all admissible rank-n words, in parallel, with
/// slot the lexicographic rank of the word.
template <class F>
void for_each_word_parallel(const MarkovMap& map, std::size_t n, std::size_t budget, F&& f) {
  if (map.full_branched()) {
    const std::size_t count = word_count(map, n, budget);
    parallel_for(count, [&](std::size_t i) { f(i, word_from_index(map, n, i)); });
  } else {
    word_count(map, n, budget);
    const auto words = all_words(map, n);
    parallel_for(words.size(), [&](std::size_t i) { f(i, words[i]); });
  }
}

inline std::size_t admissible_count(const MarkovMap& map, std::size_t n, std::size_t budget) {
  if (map.full_branched()) return word_count(map, n, budget);
  word_count(map, n, budget);
  std::size_t c = 0;
  for_each_word(map, n, [&](const CylinderWord&) { ++c; });
  return c;
}

/// (1/n) log sum exp(v), max-shifted, summed in index order.
inline double log_sum_exp_mean(const std::vector<double>& v, std::size_t n) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return (m + std::log(s)) / static_cast<double>(n);
}

}  // namespace detail

struct CapacityValue {
  std::size_t n = 0;
  double sup = NAN;
  double min = NAN;
};

/// (1/n) log sum over rank-n cylinders of exp(sup phi^n), the sup taken over
/// the evaluation points; the same sum with min instead of sup is returned
/// alongside.
inline CapacityValue capacity_pressure_detail(const Potential& pot, const MarkovMap& map, std::size_t n,
                                              const PressureOptions& opt = {}) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "rank must be positive");
  const std::size_t count = detail::admissible_count(map, n, opt.budget);
  const std::size_t m = std::max<std::size_t>(1, pot.points_per_cylinder);
  std::vector<double> sups(count);
  std::vector<double> mins(count);
  detail::for_each_word_parallel(map, n, opt.budget, [&](std::size_t slot, const CylinderWord& w) {
    const Interval iv = cylinder_interval(map, w);
    double hi = -INFINITY;
    double lo = INFINITY;
    for (double x : detail::cylinder_points(iv, m)) {
      const auto orbit = orbit_along_word(map, w, x);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += pot.eval(orbit[j], w.symbols[j]);
      hi = std::max(hi, s);
      lo = std::min(lo, s);
    }
    sups[slot] = hi;
    mins[slot] = lo;
  });
  return {n, detail::log_sum_exp_mean(sups, n), detail::log_sum_exp_mean(mins, n)};
}

inline double capacity_pressure(const Potential& pot, const MarkovMap& map, std::size_t n,
                                const PressureOptions& opt = {}) {
  return capacity_pressure_detail(pot, map, n, opt).sup;
}

struct FitDiagnostics {
  double intercept = NAN;
  double slope = NAN;
  double residual = 0.0;
  double drift = 0.0;
};

struct PressureEstimate {
  std::vector<std::pair<std::size_t, double>> per_n;
  std::vector<std::pair<std::size_t, double>> per_n_min;
  double extrapolated = NAN;
  FitDiagnostics fit;
};

/// Least squares v_n = a + b / n.
inline FitDiagnostics fit_inverse_n(const std::vector<std::pair<std::size_t, double>>& data) {
  FitDiagnostics f;
  if (data.empty()) throw Error(ErrorCode::InsufficientData, "no pressure values to fit");
  if (data.size() >= 2) f.drift = std::fabs(data.back().second - data[data.size() - 2].second);
  if (data.size() == 1) {
    f.intercept = data.front().second;
    f.slope = 0.0;
    return f;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(data.size());
  for (const auto& [n, v] : data) {
    const double x = 1.0 / static_cast<double>(n);
    sx += x;
    sy += v;
    sxx += x * x;
    sxy += x * v;
  }
  const double denom = k * sxx - sx * sx;
  f.slope = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
  f.intercept = (sy - f.slope * sx) / k;
  double rss = 0.0;
  for (const auto& [n, v] : data) {
    const double e = v - (f.intercept + f.slope / static_cast<double>(n));
    rss += e * e;
  }
  f.residual = std::sqrt(rss / k);
  return f;
}

inline PressureEstimate pressure(const Potential& pot, const MarkovMap& map, const std::vector<std::size_t>& n_range,
                                 const PressureOptions& opt = {}) {
  if (n_range.empty()) throw Error(ErrorCode::InvalidArgument, "n_range must be nonempty");
  if (!std::is_sorted(n_range.begin(), n_range.end()))
    throw Error(ErrorCode::InvalidArgument, "n_range must be increasing");
  PressureEstimate est;
  for (std::size_t n : n_range) {
    const auto cv = capacity_pressure_detail(pot, map, n, opt);
    est.per_n.emplace_back(n, cv.sup);
    est.per_n_min.emplace_back(n, cv.min);
  }
  est.fit = fit_inverse_n(est.per_n);
  est.extrapolated = est.fit.intercept;
  return est;
}

inline std::vector<std::size_t> n_range(std::size_t first, std::size_t last) {
  std::vector<std::size_t> r;
  for (std::size_t n = first; n <= last; ++n) r.push_back(n);
  return r;
}

/// Birkhoff sums of log|T'| and log D h at every evaluation point of every
/// rank-n cylinder; pressure of phi_t = (1-t) log|T'| + log D h is then a
/// cheap reduction for any t.
class BowenTable {
 public:
  BowenTable(const MarkovMap& map, const Potential& log_dh, std::size_t n, const PressureOptions& opt = {})
      : n_(n), m_(std::max<std::size_t>(1, opt.points)) {
    const std::size_t count = detail::admissible_count(map, n, opt.budget);
    a_.assign(count * m_, 0.0);
    b_.assign(count * m_, 0.0);
    detail::for_each_word_parallel(map, n, opt.budget, [&](std::size_t slot, const CylinderWord& w) {
      const Interval iv = cylinder_interval(map, w);
      const auto pts = detail::cylinder_points(iv, m_);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const auto orbit = orbit_along_word(map, w, pts[k]);
        double sa = 0.0;
        double sb = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          sa += std::log(std::fabs(map.branch_deriv(w.symbols[j], orbit[j])));
          sb += log_dh.eval(orbit[j], w.symbols[j]);
        }
        a_[slot * m_ + k] = sa;
        b_[slot * m_ + k] = sb;
      }
    });
  }

  [[nodiscard]] std::size_t rank() const noexcept { return n_; }

  [[nodiscard]] CapacityValue at(double t) const {
    const std::size_t count = a_.size() / m_;
    std::vector<double> sups(count);
    std::vector<double> mins(count);
    for (std::size_t w = 0; w < count; ++w) {
      double hi = -INFINITY;
      double lo = INFINITY;
      for (std::size_t k = 0; k < m_; ++k) {
        const double v = (1.0 - t) * a_[w * m_ + k] + b_[w * m_ + k];
        hi = std::max(hi, v);
        lo = std::min(lo, v);
      }
      sups[w] = hi;
      mins[w] = lo;
    }
    return {n_, detail::log_sum_exp_mean(sups, n_), detail::log_sum_exp_mean(mins, n_)};
  }

 private:
  std::size_t n_;
  std::size_t m_;
  std::vector<double> a_;
  std::vector<double> b_;
};

struct BowenSettings {
  std::vector<std::size_t> n_range = quasigraph::n_range(6, 12);
  double t_lo = 1.0;
  double t_hi = 2.0;
  double tol = 1e-4;
  PressureOptions pressure{};
};

struct BowenResult {
  double root = NAN;
  std::size_t iterations = 0;
  PressureEstimate at_lo;
  PressureEstimate at_hi;
  PressureEstimate at_root;
  bool sign_persistent = true;
  double kappa = NAN;
  std::vector<std::string> warnings;
};

inline PressureEstimate bowen_pressure(const std::vector<BowenTable>& tables, double t) {
  PressureEstimate est;
  for (const auto& tab : tables) {
    const auto cv = tab.at(t);
    est.per_n.emplace_back(tab.rank(), cv.sup);
    est.per_n_min.emplace_back(tab.rank(), cv.min);
  }
  est.fit = fit_inverse_n(est.per_n);
  est.extrapolated = est.fit.intercept;
  return est;
}

/// Partial hyperbolicity constant kappa = inf|dh| * inf|T'|.
inline double partial_hyperbolicity(const SkewFamily& fam, const MarkovMap& map) {
  return fam.lambda_min / map.theta();
}

/// Bisection on t for P((1-t) log|T'| + log D h) = 0.
inline BowenResult bowen_root(const SkewFamily& fam, const MarkovMap& map, const GraphProvider* provider,
                              const BowenSettings& bs = {}) {
  BowenResult res;
  res.kappa = partial_hyperbolicity(fam, map);
  if (!(res.kappa > 1.0))
    res.warnings.push_back("partial hyperbolicity not confirmed: kappa = " + std::to_string(res.kappa));
  const Potential log_dh = make_D_potential(fam, map, provider);
  std::vector<BowenTable> tables;
  for (std::size_t n : bs.n_range) tables.emplace_back(map, log_dh, n, bs.pressure);
  res.at_lo = bowen_pressure(tables, bs.t_lo);
  res.at_hi = bowen_pressure(tables, bs.t_hi);
  // An endpoint that already solves the equation is the root.
  constexpr double kZero = 1e-12;
  for (const auto* end : {&res.at_lo, &res.at_hi}) {
    if (std::fabs(end->extrapolated) <= kZero) {
      res.root = end == &res.at_lo ? bs.t_lo : bs.t_hi;
      res.at_root = *end;
      return res;
    }
  }
  if (!(res.at_lo.extrapolated > 0.0 && res.at_hi.extrapolated < 0.0))
    throw Error(ErrorCode::NoBracket, "pressure does not change sign on [" + std::to_string(bs.t_lo) + ", " +
                                          std::to_string(bs.t_hi) + "]");
  for (const auto& [n, v] : res.at_lo.per_n)
    if (!(v > 0.0)) res.sign_persistent = false;
  for (const auto& [n, v] : res.at_hi.per_n)
    if (!(v < 0.0)) res.sign_persistent = false;
  if (!res.sign_persistent) res.warnings.push_back("bracket signs differ across n_range");
  double lo = bs.t_lo;
  double hi = bs.t_hi;
  while (hi - lo > bs.tol) {
    const double mid = 0.5 * (lo + hi);
    const double p = bowen_pressure(tables, mid).extrapolated;
    if (p > 0.0) lo = mid; else hi = mid;
    ++res.iterations;
  }
  res.root = 0.5 * (lo + hi);
  res.at_root = bowen_pressure(tables, res.root);
  if (res.at_root.fit.drift > 0.05) res.warnings.push_back("pressure drift between the last two ranks exceeds 0.05");
  return res;
}

}  // namespace quasigraph
