#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "box_dimension.hpp"
#include "error.hpp"
#include "invariant_graph.hpp"
#include "thermodynamics.hpp"

namespace quasigraph::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "quasigraph/1";

/// Shortest round-trip decimal form; "nan" / "inf" / "-inf" otherwise.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string samples_csv(const std::vector<GraphSample>& samples) {
  std::string out = "x,u,converged,visits,residual\n";
  for (const auto& s : samples) {
    out += fmt(s.x) + ',' + (s.converged ? fmt(s.u) : std::string("nan")) + ',' + (s.converged ? "1" : "0") + ',' +
           std::to_string(s.visits) + ',' + fmt(s.residual) + '\n';
  }
  return out;
}

inline std::string cells_csv(const std::vector<QuasiGraphCell>& cells) {
  std::string out = "x,lo,hi,gap,certificate\n";
  for (const auto& c : cells)
    out += fmt(c.x) + ',' + fmt(c.lo) + ',' + fmt(c.hi) + ',' + fmt(c.gap()) + ',' + to_string(c.certificate) + '\n';
  return out;
}

inline Json to_json(const FitDiagnostics& f) {
  return Json{{"intercept", number(f.intercept)},
              {"slope", number(f.slope)},
              {"residual", number(f.residual)},
              {"drift", number(f.drift)}};
}

inline Json to_json(const PressureEstimate& p) {
  Json per_n = Json::array();
  for (const auto& [n, v] : p.per_n) per_n.push_back(Json::array({n, number(v)}));
  Json per_n_min = Json::array();
  for (const auto& [n, v] : p.per_n_min) per_n_min.push_back(Json::array({n, number(v)}));
  return Json{{"per_n", per_n}, {"per_n_min", per_n_min}, {"extrapolated", number(p.extrapolated)},
              {"fit", to_json(p.fit)}};
}

inline Json to_json(const BowenResult& b) {
  return Json{{"root", number(b.root)},         {"iterations", b.iterations},
              {"kappa", number(b.kappa)},       {"sign_persistent", b.sign_persistent},
              {"at_lo", to_json(b.at_lo)},      {"at_hi", to_json(b.at_hi)},
              {"at_root", to_json(b.at_root)},  {"warnings", b.warnings}};
}

inline Json to_json(const QuasiGraphCell& c) {
  return Json{{"x", c.x}, {"lo", number(c.lo)}, {"hi", number(c.hi)}, {"gap", number(c.gap())},
              {"certificate", to_string(c.certificate)}};
}

inline Json to_json(const GapEstimate& g) {
  Json ladder = Json::array();
  for (const auto& r : g.ladder)
    ladder.push_back(Json{{"outer", number(r.outer)}, {"inner", number(r.inner)}, {"max", number(r.max)},
                          {"min", number(r.min)}, {"samples", r.samples}});
  return Json{{"cell", to_json(g.cell)},
              {"converged", g.converged},
              {"lower_bound", number(g.lower_bound)},
              {"failed_samples", g.failed_samples},
              {"ladder", ladder}};
}

inline Json to_json(const ConditionReport& r) {
  Json checks = Json::array();
  for (const auto& c : r.checks)
    checks.push_back(Json{{"name", c.name}, {"value", number(c.value)}, {"bound", number(c.bound)},
                          {"pass", c.pass}, {"detail", c.detail}});
  return Json{{"all_pass", r.all_pass()},
              {"delta", number(r.delta)},
              {"empirical_c_s", number(r.empirical_c_s)},
              {"empirical_lambda_delta", number(r.empirical_lambda_delta)},
              {"declared_lambda_delta", number(r.declared_lambda_delta)},
              {"empirical_lambda_min", number(r.empirical_lambda_min)},
              {"holder_ratio", number(r.holder_ratio)},
              {"checks", checks}};
}

inline Json to_json(const DimensionReport& d) {
  Json records = Json::array();
  for (const auto& r : d.records) records.push_back(Json{{"r", r.r}, {"N", r.count}, {"source", r.source}});
  return Json{{"family", d.family},
              {"strategy", d.strategy},
              {"records", records},
              {"slope_fit",
               Json{{"slope", number(d.fit.slope)},
                    {"intercept", number(d.fit.intercept)},
                    {"residual", number(d.fit.residual)},
                    {"ci", Json::array({number(d.fit.ci_low), number(d.fit.ci_high)})},
                    {"used", d.fit.used}}},
              {"bowen_t", number(d.bowen_t)},
              {"agreement", number(d.agreement)},
              {"gap_flag", d.gap_flag},
              {"gap_lower_bound", number(d.gap_lower_bound)},
              {"hypothesis_met", d.hypothesis_met},
              {"reference_point", d.reference_point},
              {"flags", d.flags}};
}

inline std::string records_csv(const std::vector<BoxCountRecord>& records) {
  std::string out = "r,N\n";
  for (const auto& r : records) out += fmt(r.r) + ',' + fmt(r.count) + '\n';
  return out;
}

/// Two whitespace-separated columns, log-log ready.
inline std::string records_gnuplot(const std::vector<BoxCountRecord>& records) {
  std::string out = "# r N\n";
  for (const auto& r : records) out += fmt(r.r) + ' ' + fmt(r.count) + '\n';
  return out;
}

inline Json document(const std::string& kind, Json body) {
  Json doc{{"schema", kSchema}, {"kind", kind}};
  for (auto& [k, v] : body.items()) doc[k] = std::move(v);
  return doc;
}

struct SvgOptions {
  double width = 800.0;
  double height = 500.0;
};

/// Point cloud as a polyline plus one vertical <line class="cell"> per cell,
/// in a [0,1] x [min u, max u] view box.
inline std::string svg_plot(const std::vector<GraphSample>& samples, const std::vector<QuasiGraphCell>& cells,
                            const SvgOptions& opt = {}) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const auto& s : samples)
    if (s.converged) {
      lo = std::min(lo, s.u);
      hi = std::max(hi, s.u);
    }
  for (const auto& c : cells) {
    lo = std::min(lo, c.lo);
    hi = std::max(hi, c.hi);
  }
  if (!(hi > lo)) {
    lo = (std::isfinite(lo) ? lo : 0.0) - 0.5;
    hi = lo + 1.0;
  }
  const double sx = opt.width;
  const double sy = opt.height / (hi - lo);
  auto px = [&](double x) { return fmt(std::round(x * sx * 100.0) / 100.0); };
  auto py = [&](double u) { return fmt(std::round((hi - u) * sy * 100.0) / 100.0); };
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(opt.width) << "\" height=\""
     << fmt(opt.height) << "\" viewBox=\"0 0 " << fmt(opt.width) << ' ' << fmt(opt.height) << "\">\n"
     << "<desc>u range " << fmt(lo) << " " << fmt(hi) << "</desc>\n"
     << "<style>.graph{fill:none;stroke:#1f4e9c;stroke-width:0.4}.cell{stroke:#c0392b;stroke-width:1}</style>\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<polyline class=\"graph\" points=\"";
  bool first = true;
  for (const auto& s : samples) {
    if (!s.converged) continue;
    if (!first) os << ' ';
    os << px(s.x) << ',' << py(s.u);
    first = false;
  }
  os << "\"/>\n";
  for (const auto& c : cells)
    os << "<line class=\"cell\" x1=\"" << px(c.x) << "\" y1=\"" << py(c.hi) << "\" x2=\"" << px(c.x) << "\" y2=\""
       << py(c.lo) << "\"/>\n";
  os << "</svg>\n";
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  out << content;
}

inline void write_json(const std::filesystem::path& path, const Json& doc) { write_file(path, doc.dump(2) + "\n"); }

}  // namespace quasigraph::io
