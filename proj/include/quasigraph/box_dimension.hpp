#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "atlas.hpp"
#include "cylinders.hpp"
#include "error.hpp"
#include "thermodynamics.hpp"

namespace quasigraph {

struct BoxCountRecord {
  double r = 0.0;
  double count = 0.0;
  std::string source;
};

/// prod_{j<n} D h(T^j x_ref) at the left endpoint of the cylinder.
inline double height_product_estimate(const SkewFamily& fam, const MarkovMap& map, const CylinderWord& word,
                                      const GraphProvider* provider) {
  const Potential log_dh = make_D_potential(fam, map, provider);
  const Interval iv = cylinder_interval(map, word);
  const auto orbit = orbit_along_word(map, word, iv.lo);
  double s = 0.0;
  for (std::size_t j = 0; j < orbit.size(); ++j) s += log_dh.eval(orbit[j], word.symbols[j]);
  return std::exp(s);
}

struct BoxOptions {
  std::size_t max_columns = 1u << 24;
};

namespace detail {

inline std::size_t column_count(double r, const BoxOptions& opt) {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::InvalidScale, "box side must lie in (0,1)");
  const double cols = std::ceil(1.0 / r - 1e-9);
  if (cols > static_cast<double>(opt.max_columns))
    throw Error(ErrorCode::ScaleTooFine, "box side " + std::to_string(r) + " exceeds the column budget");
  return static_cast<std::size_t>(cols);
}

/// Vertical span of the sampled quasi-graph in each column of width r.
inline std::vector<Interval> column_spans(const QuasiGraphAtlas& atlas, double r, std::size_t cols) {
  std::vector<Interval> span(cols, Interval{INFINITY, -INFINITY});
  auto col_of = [&](double x) {
    return std::min(cols - 1, static_cast<std::size_t>(std::max(0.0, std::floor(x / r))));
  };
  const auto& xs = atlas.sample_x();
  const auto& us = atlas.sample_u();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    auto& s = span[col_of(xs[i])];
    s.lo = std::min(s.lo, us[i]);
    s.hi = std::max(s.hi, us[i]);
  }
  for (const auto& c : atlas.cells()) {
    auto& s = span[col_of(c.x)];
    s.lo = std::min(s.lo, c.lo);
    s.hi = std::max(s.hi, c.hi);
  }
  return span;
}

}  // namespace detail

/// Strategies:
///   "grid"          occupied r-mesh boxes; the set over each column is
///                   connected, so every row between its extremes counts;
///   "moran-columns" sum over the Moran cover of ceil(width/r) * ceil(height/r);
///   "packing"       disjoint r-balls centred on the set (even columns only).
inline BoxCountRecord box_count(const QuasiGraphAtlas& atlas, double r, const std::string& strategy = "grid",
                                const BoxOptions& opt = {}) {
  BoxCountRecord rec{r, 0.0, strategy};
  if (strategy == "moran-columns") {
    detail::column_count(r, opt);
    const auto cover = moran_cover(atlas.map(), r);
    double total = 0.0;
    for (const auto& cell : cover.cells) {
      const auto env = atlas.envelope(cell.interval);
      const double cols = std::max(1.0, std::ceil(cell.interval.width() / r * (1.0 - 1e-12)));
      const double rows = std::max(1.0, std::ceil(env.width() / r * (1.0 - 1e-12)));
      total += cols * rows;
    }
    rec.count = total;
    return rec;
  }
  if (strategy == "grid" || strategy == "packing") {
    const std::size_t cols = detail::column_count(r, opt);
    const auto spans = detail::column_spans(atlas, r, cols);
    double total = 0.0;
    for (std::size_t i = 0; i < cols; ++i) {
      const auto& s = spans[i];
      if (!(s.hi >= s.lo)) continue;
      if (strategy == "grid") {
        total += std::floor(s.hi / r) - std::floor(s.lo / r) + 1.0;
      } else if (i % 2 == 0) {
        total += std::floor(s.width() / r) + 1.0;
      }
    }
    rec.count = std::max(1.0, total);
    return rec;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown box-count strategy '" + strategy + "'");
}

struct FitWindow {
  std::size_t drop_coarse = 2;
  std::size_t drop_fine = 1;
};

struct DimensionFit {
  double slope = NAN;
  double intercept = NAN;
  double residual = NAN;
  double ci_low = NAN;
  double ci_high = NAN;
  std::size_t used = 0;
};

struct DimensionReport {
  std::string family;
  std::vector<BoxCountRecord> records;
  DimensionFit fit;
  double bowen_t = NAN;
  double agreement = NAN;
  bool gap_flag = false;
  double gap_lower_bound = 0.0;
  bool hypothesis_met = false;
  std::string strategy;
  std::string reference_point = "cylinder-left-endpoint";
  std::vector<std::string> flags;
};

inline void ols(const std::vector<double>& x, const std::vector<double>& y, double& slope, double& intercept,
                double& residual) {
  const double k = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double d = k * sxx - sx * sx;
  slope = d != 0.0 ? (k * sxy - sx * sy) / d : NAN;
  intercept = (sy - slope * sx) / k;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - intercept - slope * x[i];
    rss += e * e;
  }
  residual = std::sqrt(rss / k);
}

/// OLS of log N against -log r over the window; the confidence interval is
/// the leave-one-out spread of the slope.
inline DimensionFit dimension_fit(std::vector<BoxCountRecord> records, const FitWindow& window = {}) {
  std::sort(records.begin(), records.end(), [](const BoxCountRecord& a, const BoxCountRecord& b) { return a.r > b.r; });
  if (records.size() < window.drop_coarse + window.drop_fine + 4)
    throw Error(ErrorCode::InsufficientData, "fewer than 4 records in the fit window");
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = window.drop_coarse; i + window.drop_fine < records.size(); ++i) {
    x.push_back(-std::log(records[i].r));
    y.push_back(std::log(records[i].count));
  }
  DimensionFit fit;
  fit.used = x.size();
  ols(x, y, fit.slope, fit.intercept, fit.residual);
  double spread = 0.0;
  for (std::size_t skip = 0; skip < x.size(); ++skip) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (i != skip) {
        xs.push_back(x[i]);
        ys.push_back(y[i]);
      }
    double s, c, r;
    ols(xs, ys, s, c, r);
    spread = std::max(spread, std::fabs(s - fit.slope));
  }
  fit.ci_low = fit.slope - spread;
  fit.ci_high = fit.slope + spread;
  return fit;
}

struct CrossValidateSettings {
  AtlasSpec atlas{};
  std::vector<double> radii;
  std::string strategy = "moran-columns";
  FitWindow window{};
  BowenSettings bowen{};
  /// Gap lower bound needed to treat the graph as discontinuous; 0 selects
  /// three ladder tolerances.
  double gap_threshold = 0.0;
};

inline std::vector<double> dyadic_radii(int k_first, int k_last) {
  std::vector<double> r;
  for (int k = k_first; k <= k_last; ++k) r.push_back(std::ldexp(1.0, -k));
  return r;
}

inline DimensionReport cross_validate_with(const QuasiGraphAtlas& atlas, const CrossValidateSettings& cs) {
  DimensionReport rep;
  rep.family = atlas.family().name;
  rep.strategy = cs.strategy;
  const double threshold = cs.gap_threshold > 0.0 ? cs.gap_threshold : 3.0 * atlas.spec().ladder.tol;
  for (const auto& est : atlas.neutral_estimates()) rep.gap_lower_bound = std::max(rep.gap_lower_bound, est.lower_bound);
  rep.gap_flag = rep.gap_lower_bound > threshold;
  rep.hypothesis_met = rep.gap_flag;
  if (!rep.hypothesis_met) rep.flags.push_back("HypothesisNotMet");
  try {
    const auto b = bowen_root(atlas.family(), atlas.map(), &atlas, cs.bowen);
    rep.bowen_t = b.root;
    for (const auto& w : b.warnings) rep.flags.push_back(w);
  } catch (const Error& e) {
    rep.flags.push_back(e.what());
  }
  for (double r : cs.radii) rep.records.push_back(box_count(atlas, r, cs.strategy));
  try {
    rep.fit = dimension_fit(rep.records, cs.window);
  } catch (const Error& e) {
    rep.flags.push_back(e.what());
  }
  rep.agreement = std::fabs(rep.fit.slope - rep.bowen_t);
  if (rep.fit.slope < 1.0 - (rep.fit.ci_high - rep.fit.slope) || rep.fit.slope > 2.0 + (rep.fit.ci_high - rep.fit.slope))
    rep.flags.push_back("slope outside [1, 2]");
  return rep;
}

inline DimensionReport cross_validate(const SkewFamily& fam, const MarkovMap& map, const CrossValidateSettings& cs) {
  const QuasiGraphAtlas atlas(fam, map, cs.atlas);
  return cross_validate_with(atlas, cs);
}

}  // namespace quasigraph
