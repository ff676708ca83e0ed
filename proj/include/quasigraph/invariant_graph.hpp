#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "circle.hpp"
#include "cylinders.hpp"
#include "error.hpp"
#include "fibre_ops.hpp"
#include "markov_map.hpp"
#include "parallel.hpp"
#include "skew_family.hpp"

namespace quasigraph {

struct PullbackSettings {
  double tol = 1e-8;
  /// Radius of B_delta(P); 0 selects epsilon / 2.
  double delta = 0.0;
  std::size_t max_visits = 1u << 16;
  std::size_t max_steps = 1u << 16;
  double seed_t = 0.0;
  /// Bound on |seed_t - u| used by the contraction budget.
  double spread = 10.0;
  /// Declared lambda_delta; when set the budget is min(C_S lambda_delta^j, measured).
  std::optional<double> lambda_delta;
  bool compute_residual = true;
  double neutral_tol = 1e-12;
};

struct GraphSample {
  double x = 0.0;
  double u = 0.0;
  std::size_t visits = 0;
  std::size_t steps = 0;
  bool converged = false;
  double residual = NAN;
  std::optional<ErrorCode> status;
};

namespace detail {

struct PullbackRun {
  double value = NAN;
  double lipschitz = NAN;
  std::size_t visits = 0;
  std::size_t steps = 0;
  std::optional<ErrorCode> status;
};

inline double effective_delta(const SkewFamily& fam, const PullbackSettings& s) {
  return s.delta > 0.0 ? s.delta : fam.neutral.epsilon / 2.0;
}

inline double budget(const SkewFamily& fam, const PullbackSettings& s, double measured, std::size_t visits) {
  if (!s.lambda_delta) return measured;
  return std::min(measured, fam.c_s * std::pow(*s.lambda_delta, static_cast<double>(visits)));
}

inline PullbackRun run_affine(const SkewFamily& fam, OrbitCursor c, const PullbackSettings& s) {
  const double delta = effective_delta(fam, s);
  const auto& f = fam.affine->f;
  const auto& gamma = fam.affine->gamma;
  PullbackRun run;
  double a = 1.0;
  double b = 0.0;
  double prev = NAN;
  for (std::size_t n = 0; n < s.max_steps; ++n) {
    const double xn = c.point();
    const double dist = fam.neutral.distance(xn);
    if (dist <= s.neutral_tol) {
      run.status = ErrorCode::HitsNeutralSet;
      run.steps = n;
      return run;
    }
    if (dist >= delta) ++run.visits;
    a *= gamma(xn);
    b -= a * f(xn);
    c.advance();
    const double v = a * s.seed_t + b;
    if (std::fabs(v - prev) < s.tol && budget(fam, s, std::fabs(a), run.visits) * s.spread < s.tol) {
      run.value = v;
      run.lipschitz = std::fabs(a);
      run.steps = n + 1;
      return run;
    }
    if (run.visits >= s.max_visits) break;
    prev = v;
  }
  run.status = ErrorCode::NonConvergent;
  run.steps = s.max_steps;
  return run;
}

inline PullbackRun run_generic(const SkewFamily& fam, OrbitCursor c, const PullbackSettings& s) {
  const double delta = effective_delta(fam, s);
  PullbackRun run;
  std::vector<double> pts;
  std::vector<std::size_t> visits_at;
  std::size_t checkpoint = 8;
  double prev = NAN;
  for (std::size_t n = 0; n < s.max_steps; ++n) {
    const double xn = c.point();
    const double dist = fam.neutral.distance(xn);
    if (dist <= s.neutral_tol) {
      run.status = ErrorCode::HitsNeutralSet;
      run.steps = n;
      return run;
    }
    if (dist >= delta) ++run.visits;
    pts.push_back(xn);
    c.advance();
    if (pts.size() == checkpoint || run.visits >= s.max_visits) {
      double v = s.seed_t;
      double v1 = s.seed_t + 1.0;
      double d = 1.0;
      for (std::size_t k = pts.size(); k-- > 0;) {
        d *= std::fabs(fam.dh(pts[k], v));
        v = fam.h(pts[k], v);
        v1 = fam.h(pts[k], v1);
      }
      const double lip = std::max(d, std::fabs(v1 - v));
      if (std::fabs(v - prev) < s.tol && budget(fam, s, lip, run.visits) * s.spread < s.tol) {
        run.value = v;
        run.lipschitz = lip;
        run.steps = pts.size();
        return run;
      }
      if (run.visits >= s.max_visits) break;
      prev = v;
      checkpoint *= 2;
    }
  }
  run.status = ErrorCode::NonConvergent;
  run.steps = pts.size();
  return run;
}

inline PullbackRun run_pullback(const SkewFamily& fam, const OrbitCursor& c, const PullbackSettings& s) {
  return fam.affine ? run_affine(fam, c, s) : run_generic(fam, c, s);
}

}  // namespace detail

/// Pullback estimate of u at the cursor's point with inline status.
inline GraphSample pullback_sample(const SkewFamily& fam, const OrbitCursor& cursor,
                                   const PullbackSettings& settings = {}) {
  GraphSample out;
  out.x = cursor.point();
  const auto run = detail::run_pullback(fam, cursor, settings);
  out.visits = run.visits;
  out.steps = run.steps;
  if (run.status) {
    out.status = run.status;
    return out;
  }
  out.u = run.value;
  if (run.lipschitz >= 10.0 * settings.tol) {
    out.status = ErrorCode::NonConvergent;
    return out;
  }
  out.converged = true;
  if (settings.compute_residual) {
    OrbitCursor next = cursor;
    next.advance();
    const auto image = detail::run_pullback(fam, next, settings);
    if (!image.status) out.residual = std::fabs(image.value - fam.g(cursor.point(), out.u));
  }
  return out;
}

inline GraphSample pullback_sample(const SkewFamily& fam, const MarkovMap& map, double x,
                                   const PullbackSettings& settings = {}) {
  GraphSample out = pullback_sample(fam, OrbitCursor(map, x), settings);
  out.x = x;
  return out;
}

inline double pullback_value(const SkewFamily& fam, const MarkovMap& map, double x,
                             const PullbackSettings& settings = {}) {
  PullbackSettings s = settings;
  s.compute_residual = false;
  const auto sample = pullback_sample(fam, map, x, s);
  if (sample.status)
    throw Error(*sample.status, "pullback failed at x = " + std::to_string(x));
  return sample.u;
}

struct GridSpec {
  std::size_t count = 4096;
  double offset = kGoldenOffset;

  [[nodiscard]] double point(std::size_t i) const {
    return (static_cast<double>(i) + offset) / static_cast<double>(count);
  }
};

inline std::vector<GraphSample> sample_graph(const SkewFamily& fam, const MarkovMap& map, const GridSpec& grid,
                                             const PullbackSettings& settings = {}) {
  std::vector<GraphSample> out(grid.count);
  parallel_for(grid.count, [&](std::size_t i) { out[i] = pullback_sample(fam, map, grid.point(i), settings); });
  return out;
}

/// A word steering x into the neutral orbit point P[orbit][position]:
/// the itinerary of x begins with `word` and T^{|word|} x is that point.
struct Certificate {
  std::size_t orbit = 0;
  std::size_t position = 0;
  CylinderWord word;

  friend bool operator==(const Certificate&, const Certificate&) = default;
};

inline std::string to_string(const Certificate& c) {
  return std::to_string(c.orbit) + "/" + std::to_string(c.position) + "/" + to_string(c.word);
}

struct QuasiGraphCell {
  double x = 0.0;
  Certificate certificate;
  double lo = 0.0;
  double hi = 0.0;

  [[nodiscard]] double gap() const noexcept { return hi - lo; }
};

/// Points x_0, ..., x_{n-1} of the certified orbit, x_0 = x, followed by the
/// landing point of P.
inline std::vector<double> certificate_orbit(const SkewFamily& fam, const MarkovMap& map, const Certificate& c) {
  if (c.orbit >= fam.neutral.orbits.size() || c.position >= fam.neutral.orbits[c.orbit].size())
    throw Error(ErrorCode::BadCertificate, "certificate names no point of P");
  if (!is_admissible(map, c.word)) throw Error(ErrorCode::BadCertificate, "certificate word is inadmissible");
  const double p = fam.neutral.orbits[c.orbit][c.position];
  const std::size_t n = c.word.rank();
  std::vector<double> pts(n + 1);
  pts[n] = p;
  try {
    for (std::size_t k = n; k-- > 0;) pts[k] = map.inverse_branch(c.word.symbols[k], pts[k + 1]);
  } catch (const Error&) {
    throw Error(ErrorCode::BadCertificate, "certificate word does not land in P");
  }
  return pts;
}

/// Finds a certificate for x by iterating at most max_depth steps.
inline std::optional<Certificate> certify(const SkewFamily& fam, const MarkovMap& map, double x,
                                          std::size_t max_depth, double tol = 1e-12) {
  Certificate c;
  double y = wrap01(x);
  for (std::size_t n = 0; n <= max_depth; ++n) {
    if (auto loc = fam.neutral.locate(y, tol)) {
      c.orbit = loc->first;
      c.position = loc->second;
      return c;
    }
    const unsigned j = map.branch_of(y);
    c.word.symbols.push_back(j);
    y = wrap01(map.branch_eval(j, y));
  }
  return std::nullopt;
}

/// u_s on R_P: u_s(p_r) = s_r at the first point of each orbit, propagated
/// around the orbit by g and pulled back along the certificate by h.
inline double extend_us(const SkewFamily& fam, const MarkovMap& map, const Certificate& c,
                        const std::vector<double>& s) {
  const auto pts = certificate_orbit(fam, map, c);
  if (s.size() != fam.neutral.rho()) throw Error(ErrorCode::InvalidArgument, "s needs one value per orbit of P");
  const auto& orbit = fam.neutral.orbits[c.orbit];
  double t = s[c.orbit];
  for (std::size_t i = 0; i < c.position; ++i) t = fam.g(orbit[i], t);
  for (std::size_t k = c.word.rank(); k-- > 0;) t = fam.h(pts[k], t);
  return t;
}

struct LadderSpec {
  /// Outer radius; 0 selects the neutral-set epsilon.
  double outer = 0.0;
  std::size_t rungs = 20;
  /// Radius ratio between rungs at points that are not eventually periodic.
  /// At eventually periodic points the ratio is 1 / |(T^l)'| of the cycle.
  double factor = 0.5;
  std::size_t samples_per_side = 256;
  double tol = 1e-6;
  /// Longest pre-period and period searched for the ladder construction.
  std::size_t max_preperiod = 16;
  std::size_t max_period = 8;
};

struct LadderRung {
  double outer = 0.0;
  double inner = 0.0;
  double max = -INFINITY;
  double min = INFINITY;
  std::size_t samples = 0;
};

struct GapEstimate {
  QuasiGraphCell cell;
  std::vector<LadderRung> ladder;
  bool converged = false;
  double lower_bound = 0.0;
  std::size_t failed_samples = 0;
};

namespace detail {

/// Aitken delta-squared limit of the last three terms; falls back to the last
/// term when the tail does not look geometric.
inline double aitken_tail(double a0, double a1, double a2) {
  const double d1 = a1 - a0;
  const double d2 = a2 - a1;
  const double denom = d2 - d1;
  if (d2 == 0.0 || denom == 0.0) return a2;
  const double ratio = d2 / d1;
  if (!std::isfinite(ratio) || std::fabs(ratio) >= 0.95) return a2;
  return a2 - d2 * d2 / denom;
}

}  // namespace detail

namespace detail {

/// Pre-period j and period l with T^j p periodic, found by double iteration.
inline std::optional<std::pair<std::size_t, std::size_t>> eventual_period(const MarkovMap& map, double p,
                                                                          const LadderSpec& ladder) {
  double y = wrap01(p);
  for (std::size_t j = 0; j <= ladder.max_preperiod; ++j) {
    double z = y;
    for (std::size_t l = 1; l <= ladder.max_period; ++l) {
      z = map.evaluate(z);
      if (circle_distance(z, y) <= 1e-12) return std::make_pair(j, l);
    }
    y = map.evaluate(y);
  }
  return std::nullopt;
}

/// Ladder sample points near an eventually periodic p. Rung 0 is an annulus
/// at the cycle point p* = T^j p; rung k is its image under k inverse cycle
/// words followed by the pre-period word, so every rung maps exactly onto
/// rung 0. Integer-linear maps build the points on the exact lattice.
class PeriodicLadder {
 public:
  PeriodicLadder(const MarkovMap& map, double p, std::size_t pre, std::size_t period, double outer)
      : map_(&map), pre_(pre), period_(period) {
    p = wrap01(p);
    star_ = p;
    for (std::size_t i = 0; i < pre; ++i) star_ = map.evaluate(star_);
    for (int side = 0; side < 2; ++side) {
      const double sigma = side == 0 ? 1.0 : -1.0;
      double x = wrap01(p + sigma * 1e-11);
      bool increasing = true;
      auto& word = words_[side];
      for (std::size_t i = 0; i < pre + period; ++i) {
        const unsigned b = map.branch_of(x);
        word.push_back(b);
        if (i < pre && !map.increasing(b)) increasing = !increasing;
        x = map.evaluate(x);
      }
      star_side_[side] = increasing ? sigma : -sigma;
      const double edge = pull(side, wrap01(star_ + star_side_[side] * outer), 1, false).value;
      inner_[side] = circle_distance(edge, star_);
    }
    outer_ = outer;
  }

  /// Sample r of m on the given side of rung k.
  [[nodiscard]] OrbitCursor sample(int side, std::size_t k, std::size_t r, std::size_t m) const {
    const double frac = (static_cast<double>(r) + kGoldenOffset) / static_cast<double>(m);
    const double y = inner_[side] + frac * (outer_ - inner_[side]);
    const double z = wrap01(star_ + star_side_[side] * y);
    return pull(side, z, k, true).cursor();
  }

  /// Radii of rung k measured at p on the right side.
  [[nodiscard]] std::pair<double, double> radii(double p, std::size_t k) const {
    const double o = pull(0, wrap01(star_ + star_side_[0] * outer_), k, true).value;
    const double i = pull(0, wrap01(star_ + star_side_[0] * inner_[0]), k, true).value;
    return {circle_distance(o, p), circle_distance(i, p)};
  }

 private:
  struct Pulled {
    const MarkovMap* map;
    double value;
    std::optional<LiftedPoint> lifted;
    [[nodiscard]] OrbitCursor cursor() const { return lifted ? OrbitCursor(*map, *lifted) : OrbitCursor(*map, value); }
  };

  Pulled pull(int side, double z, std::size_t k, bool with_pre) const {
    const auto& word = words_[side];
    const auto b = map_->linear_degree();
    std::vector<unsigned> chain;
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t i = pre_ + period_; i-- > pre_;) chain.push_back(word[i]);
    if (with_pre)
      for (std::size_t i = pre_; i-- > 0;) chain.push_back(word[i]);
    if (b) {
      LiftedPoint lp = lift_point(z);
      for (unsigned j : chain) lp = lifted_inverse(*b, j, lp);
      return {map_, lifted_value(*b, lp), lp};
    }
    double x = z;
    for (unsigned j : chain) x = map_->inverse_branch(j, x);
    return {map_, x, std::nullopt};
  }

  const MarkovMap* map_;
  std::size_t pre_;
  std::size_t period_;
  double star_ = 0.0;
  double outer_ = 0.0;
  double star_side_[2] = {1.0, -1.0};
  double inner_[2] = {0.0, 0.0};
  std::vector<unsigned> words_[2];
};

}  // namespace detail

/// liminf / limsup of u at p from a geometric ladder of annuli, sampled on
/// both sides.
inline GapEstimate gap_at(const SkewFamily& fam, const MarkovMap& map, double p,
                          const PullbackSettings& settings = {}, const LadderSpec& ladder = {}) {
  if (ladder.rungs < 3) throw Error(ErrorCode::InvalidArgument, "ladder needs at least three rungs");
  if (!(ladder.factor > 0.0 && ladder.factor < 1.0))
    throw Error(ErrorCode::InvalidArgument, "ladder factor must lie in (0,1)");
  PullbackSettings s = settings;
  s.compute_residual = false;
  const double outer = ladder.outer > 0.0 ? ladder.outer : fam.neutral.epsilon;
  const std::size_t m = ladder.samples_per_side;
  std::optional<detail::PeriodicLadder> periodic;
  if (auto jl = detail::eventual_period(map, p, ladder)) {
    try {
      periodic.emplace(map, p, jl->first, jl->second, outer);
      (void)periodic->radii(wrap01(p), ladder.rungs - 1);
    } catch (const Error&) {
      periodic.reset();
    }
  }
  GapEstimate est;
  est.ladder.resize(ladder.rungs);
  std::vector<double> values(ladder.rungs * 2 * m, NAN);
  parallel_for(values.size(), [&](std::size_t idx) {
    const std::size_t k = idx / (2 * m);
    const std::size_t r = idx % (2 * m);
    const int side = r < m ? 0 : 1;
    std::optional<GraphSample> sample;
    if (periodic) {
      try {
        sample = pullback_sample(fam, periodic->sample(side, k, r % m, m), s);
      } catch (const Error&) {
        return;
      }
    } else {
      const double sign = side == 0 ? 1.0 : -1.0;
      const double frac = (static_cast<double>(r % m) + kGoldenOffset) / static_cast<double>(m);
      const double eps_k = outer * std::pow(ladder.factor, static_cast<double>(k));
      const double eps_k1 = eps_k * ladder.factor;
      const double y = eps_k1 + frac * (eps_k - eps_k1);
      sample = pullback_sample(fam, map, wrap01(p + sign * y), s);
    }
    if (!sample->status) values[idx] = sample->u;
  });
  for (std::size_t k = 0; k < ladder.rungs; ++k) {
    auto& rung = est.ladder[k];
    if (periodic) {
      std::tie(rung.outer, rung.inner) = periodic->radii(wrap01(p), k);
    } else {
      rung.outer = outer * std::pow(ladder.factor, static_cast<double>(k));
      rung.inner = rung.outer * ladder.factor;
    }
    for (std::size_t r = 0; r < 2 * m; ++r) {
      const double v = values[k * 2 * m + r];
      if (std::isnan(v)) {
        ++est.failed_samples;
        continue;
      }
      rung.max = std::max(rung.max, v);
      rung.min = std::min(rung.min, v);
      ++rung.samples;
    }
  }
  const auto& L = est.ladder;
  const std::size_t K = L.size();
  for (const auto& rung : L)
    if (rung.samples == 0) throw Error(ErrorCode::NonConvergent, "a ladder rung produced no converged samples");
  double hi = detail::aitken_tail(L[K - 3].max, L[K - 2].max, L[K - 1].max);
  double lo = detail::aitken_tail(L[K - 3].min, L[K - 2].min, L[K - 1].min);
  if (lo > hi) lo = hi = 0.5 * (lo + hi);
  const double spread_hi = std::max(std::fabs(L[K - 1].max - L[K - 2].max), std::fabs(L[K - 2].max - L[K - 3].max));
  const double spread_lo = std::max(std::fabs(L[K - 1].min - L[K - 2].min), std::fabs(L[K - 2].min - L[K - 3].min));
  est.converged = std::max(spread_hi, spread_lo) <= ladder.tol;
  const double tail_max = std::min({L[K - 3].max, L[K - 2].max, L[K - 1].max});
  const double tail_min = std::max({L[K - 3].min, L[K - 2].min, L[K - 1].min});
  est.lower_bound = std::max(0.0, tail_max - tail_min);
  est.cell.x = wrap01(p);
  if (auto loc = fam.neutral.locate(p)) {
    est.cell.certificate.orbit = loc->first;
    est.cell.certificate.position = loc->second;
  }
  est.cell.lo = lo;
  est.cell.hi = hi;
  return est;
}

/// Transports the cell at p to x = omega_word(p): both endpoints are pulled
/// back by h^N along the certified orbit.
inline QuasiGraphCell gap_pullback(const SkewFamily& fam, const MarkovMap& map, const QuasiGraphCell& cell_at_p,
                                   const CylinderWord& word) {
  Certificate c = cell_at_p.certificate;
  c.word = word;
  const auto pts = certificate_orbit(fam, map, c);
  double lo = cell_at_p.lo;
  double hi = cell_at_p.hi;
  for (std::size_t k = word.rank(); k-- > 0;) {
    lo = fam.h(pts[k], lo);
    hi = fam.h(pts[k], hi);
  }
  QuasiGraphCell out;
  out.x = pts.front();
  out.certificate = c;
  out.lo = std::min(lo, hi);
  out.hi = std::max(lo, hi);
  return out;
}

struct BackwardLimit {
  double value = NAN;
  std::size_t steps = 0;
  std::vector<double> deltas;
};

/// g^n_{omega_j^n x}(t) as n grows.
inline BackwardLimit backward_limit(const SkewFamily& fam, const MarkovMap& map, unsigned branch, double x, double t,
                                    std::size_t n_max, double tol = 1e-12) {
  if (n_max == 0) throw Error(ErrorCode::InvalidArgument, "n_max must be positive");
  std::vector<double> ys{wrap01(x)};
  BackwardLimit out;
  double prev = t;
  for (std::size_t n = 1; n <= n_max; ++n) {
    ys.push_back(map.inverse_branch(branch, ys.back()));
    double v = t;
    for (std::size_t i = n; i >= 1; --i) v = fam.g(ys[i], v);
    const double d = std::fabs(v - prev);
    out.deltas.push_back(d);
    out.value = v;
    out.steps = n;
    if (d < tol) return out;
    prev = v;
  }
  throw Error(ErrorCode::NonConvergent, "backward limit did not settle within n_max steps");
}

}  // namespace quasigraph
