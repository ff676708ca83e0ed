#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "atlas.hpp"
#include "box_dimension.hpp"
#include "config.hpp"
#include "cylinders.hpp"
#include "fibre_ops.hpp"
#include "invariant_graph.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "skew_family.hpp"
#include "thermodynamics.hpp"

namespace quasigraph {

struct Check {
  std::string name;
  bool pass = false;
  double value = NAN;
  double bound = NAN;
  std::string detail;
};

struct CheckSuite {
  std::vector<Check> checks;

  void add(std::string name, bool pass, double value, double bound, std::string detail = {}) {
    checks.push_back({std::move(name), pass, value, bound, std::move(detail)});
  }
  [[nodiscard]] bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

inline io::Json to_json(const CheckSuite& s) {
  io::Json arr = io::Json::array();
  for (const auto& c : s.checks)
    arr.push_back(io::Json{{"name", c.name}, {"verdict", c.pass ? "pass" : "fail"}, {"value", io::number(c.value)},
                           {"bound", io::number(c.bound)}, {"detail", c.detail}});
  return io::Json{{"all_pass", s.all_pass()}, {"checks", arr}};
}

/// Cells at omega_w(p) for every word of rank 1..generations, deduplicated
/// by position (shortest certificate kept) and sorted by x.
inline std::vector<QuasiGraphCell> preimage_cells(const SkewFamily& fam, const MarkovMap& map,
                                                  const QuasiGraphCell& base, std::size_t generations) {
  std::vector<QuasiGraphCell> all{base};
  for (std::size_t n = 1; n <= generations; ++n) {
    for_each_word(map, n, [&](const CylinderWord& w) {
      try {
        all.push_back(gap_pullback(fam, map, base, w));
      } catch (const Error&) {
      }
    });
  }
  std::stable_sort(all.begin(), all.end(), [](const QuasiGraphCell& a, const QuasiGraphCell& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.certificate.word.rank() < b.certificate.word.rank();
  });
  std::vector<QuasiGraphCell> out;
  for (auto& c : all) {
    if (!out.empty() && circle_distance(out.back().x, c.x) <= 1e-13) continue;
    out.push_back(std::move(c));
  }
  if (out.size() > 1 && circle_distance(out.front().x, out.back().x) <= 1e-13) out.pop_back();
  return out;
}

/// First `count` distinct certificates in order of rank, then lexicographic.
inline std::vector<QuasiGraphCell> certificate_cells(const SkewFamily& fam, const MarkovMap& map,
                                                     const QuasiGraphCell& base, std::size_t count,
                                                     std::size_t max_rank = 12) {
  std::vector<QuasiGraphCell> out;
  for (std::size_t n = 1; n <= max_rank && out.size() < count; ++n) {
    for_each_word(map, n, [&](const CylinderWord& w) {
      if (out.size() >= count) return;
      QuasiGraphCell c;
      try {
        c = gap_pullback(fam, map, base, w);
      } catch (const Error&) {
        return;
      }
      if (circle_distance(c.x, base.x) <= 1e-13) return;
      for (const auto& o : out)
        if (circle_distance(o.x, c.x) <= 1e-13) return;
      out.push_back(std::move(c));
    });
  }
  return out;
}

namespace detail {

inline GapEstimate neutral_gap(const SkewFamily& fam, const MarkovMap& map, const ScenarioConfig& cfg,
                               std::size_t orbit = 0) {
  auto est = gap_at(fam, map, fam.neutral.orbits.at(orbit).front(), cfg.pullback, cfg.ladder);
  est.cell.certificate = Certificate{orbit, 0, {}};
  return est;
}

inline std::filesystem::path out_path(const ScenarioConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out) / name;
}

}  // namespace detail

struct Figure1Bundle {
  std::vector<GraphSample> samples;
  std::vector<QuasiGraphCell> cells;
  std::optional<GapEstimate> gap;
  std::string svg;
  CheckSuite checks;
};

inline constexpr std::size_t kFigure1Generations = 6;

inline Figure1Bundle run_figure1(const ScenarioConfig& cfg, bool write = true) {
  const MarkovMap map = build_map(cfg.map);
  const SkewFamily fam = build_family(cfg.family, map);
  Figure1Bundle b;
  PullbackSettings ps = cfg.pullback;
  b.samples = sample_graph(fam, map, cfg.grid, ps);
  std::size_t failed = 0;
  double worst = 0.0;
  for (const auto& s : b.samples) {
    if (!s.converged) ++failed;
    else if (std::isfinite(s.residual)) worst = std::max(worst, s.residual);
  }
  b.checks.add("residual", worst <= 10.0 * ps.tol, worst, 10.0 * ps.tol,
               std::to_string(b.samples.size() - failed) + " converged samples");
  if (!fam.neutral.empty()) {
    b.gap = detail::neutral_gap(fam, map, cfg);
    b.cells = preimage_cells(fam, map, b.gap->cell, kFigure1Generations);
    double min_gap = INFINITY;
    for (const auto& c : b.cells) min_gap = std::min(min_gap, c.gap());
    b.checks.add("gap-at-neutral-point", b.gap->lower_bound > 0.0, b.gap->lower_bound, 0.0,
                 b.gap->converged ? "ladder converged" : "ladder not converged; lower bound only");
    b.checks.add("preimage-gaps", min_gap > 0.0, min_gap, 0.0, std::to_string(b.cells.size()) + " cells");
  }
  b.svg = io::svg_plot(b.samples, b.cells);
  if (write) {
    io::write_file(detail::out_path(cfg, "figure1_samples.csv"), io::samples_csv(b.samples));
    io::write_file(detail::out_path(cfg, "figure1_cells.csv"), io::cells_csv(b.cells));
    io::write_file(detail::out_path(cfg, "figure1.svg"), b.svg);
    io::Json body{{"family", fam.name},
                  {"samples", b.samples.size()},
                  {"failed_samples", failed},
                  {"cells", b.cells.size()},
                  {"gap", b.gap ? io::to_json(*b.gap) : io::Json(nullptr)},
                  {"checks", to_json(b.checks)}};
    io::write_json(detail::out_path(cfg, "figure1.json"), io::document("figure1", std::move(body)));
  }
  return b;
}

struct DichotomyRow {
  std::string base;
  double amplitude = 0.0;
  double gap = NAN;
  double lower_bound = NAN;
  bool converged = false;
  double eps0 = NAN;
  std::vector<double> certificate_gaps;
};

struct DichotomyResult {
  std::vector<DichotomyRow> rows;
  CheckSuite checks;
};

inline std::vector<PerturbationSpec> perturbations_from(const ScenarioConfig& cfg) {
  std::vector<PerturbationSpec> out;
  for (double a : cfg.dichotomy.amplitudes) out.push_back({cfg.dichotomy.center, cfg.dichotomy.width, a, "bump"});
  return out;
}

inline void check_perturbation(const SkewFamily& fam, const PerturbationSpec& p) {
  if (p.profile != "bump") throw Error(ErrorCode::InvalidArgument, "unknown perturbation profile '" + p.profile + "'");
  if (!(p.width > 0.0)) throw Error(ErrorCode::InvalidArgument, "perturbation width must be positive");
  for (double q : fam.neutral.points())
    if (circle_distance(p.center, q) - p.width <= fam.neutral.epsilon)
      throw Error(ErrorCode::InvalidArgument, "perturbation support meets B_eps(P)");
}

inline DichotomyResult run_dichotomy_lab(const ScenarioConfig& cfg, const std::vector<PerturbationSpec>& perturbations,
                                         bool write = true) {
  const MarkovMap map = build_map(cfg.map);
  DichotomyResult res;
  const GridSpec eps_grid{cfg.dichotomy.eps_grid, cfg.grid.offset};
  PullbackSettings ps = cfg.pullback;
  ps.compute_residual = false;
  const double threshold = 3.0 * cfg.ladder.tol;
  for (const auto& base_name : cfg.dichotomy.bases) {
    const SkewFamily base = families::builtin(base_name, map, cfg.family.lambda);
    if (base.neutral.empty()) throw Error(ErrorCode::InvalidArgument, "dichotomy base needs a neutral point");
    const auto base_samples = sample_graph(base, map, eps_grid, ps);
    std::vector<DichotomyRow> rows;
    for (const auto& p : perturbations) {
      check_perturbation(base, p);
      const SkewFamily fam = shifted_family(base, smooth_bump(p.center, p.width), p.amplitude,
                                            base.name + "+bump");
      DichotomyRow row;
      row.base = base.name;
      row.amplitude = p.amplitude;
      const auto est = detail::neutral_gap(fam, map, cfg);
      row.gap = est.cell.gap();
      row.lower_bound = est.lower_bound;
      row.converged = est.converged;
      const auto samples = sample_graph(fam, map, eps_grid, ps);
      double eps0 = 0.0;
      for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].converged && base_samples[i].converged)
          eps0 = std::max(eps0, std::fabs(samples[i].u - base_samples[i].u));
      row.eps0 = eps0;
      for (const auto& c : certificate_cells(fam, map, est.cell, cfg.dichotomy.certificates))
        row.certificate_gaps.push_back(c.gap());
      rows.push_back(std::move(row));
    }
    const auto zero = std::find_if(rows.begin(), rows.end(), [](const DichotomyRow& r) { return r.amplitude == 0.0; });
    if (zero != rows.end()) {
      double worst = 0.0;
      bool ok = true;
      for (const auto& r : rows) {
        const double excess = std::fabs(r.gap - zero->gap) - 2.0 * r.eps0;
        worst = std::max(worst, excess);
        if (excess > threshold) ok = false;
      }
      res.checks.add(base.name + ":continuity-at-zero", ok, worst, threshold,
                     "max over amplitudes of |gap(a) - gap(0)| - 2 eps0(a)");
      std::vector<const DichotomyRow*> sorted;
      for (const auto& r : rows) sorted.push_back(&r);
      std::sort(sorted.begin(), sorted.end(),
                [](const DichotomyRow* a, const DichotomyRow* b) { return std::fabs(a->amplitude) < std::fabs(b->amplitude); });
      bool monotone = true;
      for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->eps0 + 1e-12 < sorted[i - 1]->eps0) monotone = false;
      res.checks.add(base.name + ":eps0-monotone", monotone, sorted.back()->eps0, NAN,
                     "eps0 non-decreasing in |amplitude|, eps0(0) = " + io::fmt(sorted.front()->eps0));
      if (zero->lower_bound <= threshold) {
        double best = 0.0;
        bool all_positive = true;
        for (const auto& r : rows) {
          if (r.amplitude == 0.0) continue;
          best = std::max(best, r.lower_bound);
          if (!(r.lower_bound > threshold)) all_positive = false;
        }
        res.checks.add(base.name + ":bump-opens-gap", all_positive, best, threshold,
                       "continuous base; every nonzero amplitude gives a certified gap");
      } else {
        bool persists = true;
        double worst_lb = INFINITY;
        for (const auto& r : rows)
          if (2.0 * r.eps0 < zero->lower_bound) {
            worst_lb = std::min(worst_lb, r.lower_bound);
            if (!(r.lower_bound > 0.0)) persists = false;
          }
        res.checks.add(base.name + ":gap-persists", persists, worst_lb, 0.0,
                       "rows with 2 eps0 below the base gap keep a positive gap");
      }
    }
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
  }
  if (write) {
    std::string csv = "base,amplitude,gap_at_p,lower_bound,converged,eps0";
    for (std::size_t i = 0; i < cfg.dichotomy.certificates; ++i) csv += ",gap_cert_" + std::to_string(i + 1);
    csv += '\n';
    for (const auto& r : res.rows) {
      csv += r.base + ',' + io::fmt(r.amplitude) + ',' + io::fmt(r.gap) + ',' + io::fmt(r.lower_bound) + ',' +
             (r.converged ? "1" : "0") + ',' + io::fmt(r.eps0);
      for (std::size_t i = 0; i < cfg.dichotomy.certificates; ++i)
        csv += ',' + (i < r.certificate_gaps.size() ? io::fmt(r.certificate_gaps[i]) : std::string("nan"));
      csv += '\n';
    }
    io::write_file(detail::out_path(cfg, "dichotomy.csv"), csv);
    io::write_json(detail::out_path(cfg, "dichotomy.json"),
                   io::document("dichotomy", io::Json{{"checks", to_json(res.checks)}}));
  }
  return res;
}

struct StudyRow {
  std::string label;
  bool conditions_pass = false;
  DimensionReport report;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  CheckSuite checks;
  std::string table;
};

inline std::string study_table(const std::vector<StudyRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "family" << std::setw(6) << "gap" << std::setw(11) << "bowen_t"
     << std::setw(11) << "slope" << std::setw(11) << "agreement" << "flags\n";
  for (const auto& r : rows) {
    std::string flags;
    for (const auto& f : r.report.flags) flags += (flags.empty() ? "" : "; ") + f;
    os << std::left << std::setw(22) << r.label << std::setw(6) << (r.report.gap_flag ? "yes" : "no")
       << std::fixed << std::setprecision(5) << std::setw(11) << r.report.bowen_t << std::setw(11)
       << r.report.fit.slope << std::setw(11) << r.report.agreement << flags << '\n';
  }
  return os.str();
}

inline StudyResult run_dimension_study(const ScenarioConfig& cfg, bool write = true) {
  const MarkovMap map = build_map(cfg.map);
  StudyResult res;
  std::vector<std::pair<std::string, SkewFamily>> fams{
      {"weierstrass-0.6", families::weierstrass(map, 0.6)},
      {"weierstrass-0.8", families::weierstrass(map, 0.8)},
      {"figure1", families::figure1(map)},
      {"user:" + cfg.family.name, build_family(cfg.family, map)}};
  const auto cs = cross_validate_settings(cfg);
  for (auto& [label, fam] : fams) {
    StudyRow row;
    row.label = label;
    VerifySettings vs = cfg.verify;
    row.conditions_pass = verify_conditions(fam, map, vs).all_pass();
    row.report = cross_validate(fam, map, cs);
    if (!row.conditions_pass) row.report.flags.push_back("conditions failed");
    res.rows.push_back(std::move(row));
  }
  auto closed = [](double l) { return 2.0 + std::log(l) / std::log(2.0); };
  const auto& w6 = res.rows[0].report;
  const auto& w8 = res.rows[1].report;
  const auto& f1 = res.rows[2].report;
  res.checks.add("weierstrass-0.6:bowen", std::fabs(w6.bowen_t - closed(0.6)) <= 1e-3, w6.bowen_t, closed(0.6));
  res.checks.add("weierstrass-0.8:bowen", std::fabs(w8.bowen_t - closed(0.8)) <= 1e-3, w8.bowen_t, closed(0.8));
  res.checks.add("figure1:agreement", f1.agreement <= 0.1, f1.agreement, 0.1);
  res.checks.add("figure1:gap-flag", f1.gap_flag, f1.gap_lower_bound, NAN);
  res.table = study_table(res.rows);
  if (write) {
    io::Json rows = io::Json::array();
    for (const auto& r : res.rows) {
      auto j = io::to_json(r.report);
      j["label"] = r.label;
      j["conditions_pass"] = r.conditions_pass;
      rows.push_back(std::move(j));
    }
    io::write_json(detail::out_path(cfg, "dimension_study.json"),
                   io::document("dimension-study", io::Json{{"rows", rows}, {"checks", to_json(res.checks)}}));
    io::write_file(detail::out_path(cfg, "dimension_study.txt"), res.table);
  }
  return res;
}

/// Weierstrass series u(x) = -sum lambda^{n+1} cos(2 pi b^n x).
inline double weierstrass_series(double x, double lambda, unsigned b, std::size_t terms) {
  double s = 0.0;
  double lp = lambda;
  double bx = x;
  for (std::size_t n = 0; n < terms; ++n) {
    s -= lp * std::cos(2.0 * kPi * bx);
    lp *= lambda;
    bx = std::fmod(static_cast<double>(b) * bx, 1.0);
  }
  return s;
}

/// Fixed point p of x -> b x mod 1 and an orbit segment of length n that ends
/// at a random point of B_delta(p) and stays inside it.
struct ConfinedSegment {
  MarkovMap map;
  double p = 0.0;
  double x = 0.0;
  std::size_t n = 0;
  double delta = 0.0;
};

inline ConfinedSegment random_confined_segment(std::uint64_t seed, std::size_t index) {
  auto rs = substream(seed, "shadowing", index);
  const unsigned b = 2 + static_cast<unsigned>(rs.below(3));
  ConfinedSegment s{MarkovMap::bary(b), 0.0, 0.0, 0, 0.0};
  const unsigned j = static_cast<unsigned>(rs.below(b - 1));
  s.p = static_cast<double>(j) / static_cast<double>(b - 1);
  s.delta = 0.25 / static_cast<double>(b);
  // Keep delta theta^n above 1e-10 so double iteration stays meaningful.
  const auto n_max = static_cast<std::size_t>(std::log(s.delta / 1e-10) / std::log(static_cast<double>(b)));
  s.n = 1 + rs.below(n_max);
  const double side = rs.uniform() < 0.5 ? -1.0 : 1.0;
  const double y = wrap01(s.p + side * s.delta * (1.0 - rs.uniform()) * 0.999);
  // The inverse branch through p keeps the whole backward chain near p.
  const unsigned branch = std::min(b - 1, s.map.branch_of(wrap01(s.p + side * 1e-9)));
  double x = y;
  for (std::size_t k = 0; k < s.n; ++k) x = s.map.inverse_branch(branch, x);
  s.x = x;
  return s;
}

inline CheckSuite shadowing_suite(std::uint64_t seed, std::size_t count) {
  CheckSuite suite;
  double worst = 0.0;
  std::size_t violations = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = random_confined_segment(seed, i);
    try {
      const double ratio = shadowing_deviation(s.map, s.x, s.p, s.n, s.delta);
      worst = std::max(worst, ratio / s.delta);
      if (!(ratio < s.delta)) ++violations;
    } catch (const Error&) {
      ++violations;
    }
  }
  suite.add("shadowing", violations == 0, worst, 1.0,
            std::to_string(count) + " segments, " + std::to_string(violations) + " violations");
  return suite;
}

inline CheckSuite run_calibration(const ScenarioConfig& cfg, bool write = true) {
  CheckSuite suite;
  const MarkovMap doubling = MarkovMap::doubling();
  const double tol = cfg.pullback.tol;
  {
    const auto w = families::weierstrass(doubling, 0.5);
    double worst = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
      const double x = GridSpec{200, cfg.grid.offset}.point(i);
      const auto s = pullback_sample(w, doubling, x, cfg.pullback);
      worst = std::max(worst, s.converged ? std::fabs(s.u - weierstrass_series(x, 0.5, 2, 60)) : INFINITY);
    }
    suite.add("weierstrass-series", worst <= tol, worst, tol, "200 points, 60 terms");
  }
  {
    double worst = 0.0;
    for (double c : {-1.5, 0.0, 0.7})
      for (std::size_t n = 1; n <= 14; ++n)
        worst = std::max(worst, std::fabs(capacity_pressure(constant_potential(c), doubling, n) - (std::log(2.0) + c)));
    suite.add("constant-pressure", worst <= 1e-12, worst, 1e-12, "c in {-1.5, 0, 0.7}, n = 1..14");
  }
  for (auto& c : shadowing_suite(cfg.seed, 1000).checks) suite.checks.push_back(c);
  {
    double worst_gap = 0.0;
    bool ok = true;
    for (unsigned b : {2u, 3u})
      for (double r : {0.3, 0.05, 0.01, 0.002}) {
        const auto cover = moran_cover(MarkovMap::bary(b), r);
        double pos = 0.0;
        for (const auto& cell : cover.cells) {
          worst_gap = std::max(worst_gap, std::fabs(cell.interval.lo - pos));
          pos = cell.interval.hi;
          if (cell.interval.width() > r * (1.0 + 1e-12)) ok = false;
        }
        worst_gap = std::max(worst_gap, std::fabs(pos - 1.0));
      }
    suite.add("moran-partition", ok && worst_gap <= 1e-12, worst_gap, 1e-12, "cells tile [0,1] with widths <= r");
  }
  {
    for (const auto& name : families::builtin_names()) {
      const auto fam = families::builtin(name, doubling);
      double worst = 0.0;
      std::size_t converged = 0;
      const GridSpec grid{500, cfg.grid.offset};
      const auto samples = sample_graph(fam, doubling, grid, cfg.pullback);
      for (const auto& s : samples)
        if (s.converged) {
          ++converged;
          worst = std::max(worst, std::isfinite(s.residual) ? s.residual : INFINITY);
        }
      suite.add("invariance:" + name, converged == samples.size() && worst <= 10.0 * tol, worst, 10.0 * tol,
                std::to_string(converged) + "/" + std::to_string(samples.size()) + " converged");
    }
  }
  {
    const MarkovMap map = build_map(cfg.map);
    const auto fam = build_family(cfg.family, map);
    const auto rep = verify_conditions(fam, map, cfg.verify);
    std::string failed;
    for (const auto& c : rep.checks)
      if (!c.pass) failed += (failed.empty() ? "" : ", ") + c.name;
    suite.add("conditions:" + fam.name, rep.all_pass(), NAN, NAN, failed.empty() ? "all conditions hold" : failed);
  }
  if (write)
    io::write_json(detail::out_path(cfg, "calibration.json"), io::document("calibration", to_json(suite)));
  return suite;
}

}  // namespace quasigraph
