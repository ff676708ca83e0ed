#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <quasigraph.hpp>

using namespace quasigraph;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

ScenarioConfig resolve(const Globals& g) {
  ScenarioConfig cfg = g.config.empty() ? ScenarioConfig{} : load_config(g.config);
  if (!g.out.empty()) cfg.out = g.out;
  if (g.threads > 0) cfg.threads = g.threads;
  if (g.seed_set) {
    cfg.seed = g.seed;
    cfg.verify.seed = g.seed;
  }
  set_default_threads(cfg.threads);
  return cfg;
}

void print_checks(const CheckSuite& s) {
  for (const auto& c : s.checks)
    std::printf("%-34s %s  value=%s bound=%s  %s\n", c.name.c_str(), c.pass ? "pass" : "FAIL", io::fmt(c.value).c_str(),
                io::fmt(c.bound).c_str(), c.detail.c_str());
}

int verdict(const CheckSuite& s) { return s.all_pass() ? 0 : 1; }

std::filesystem::path out_file(const ScenarioConfig& cfg, const char* name) {
  return std::filesystem::path(cfg.out) / name;
}

int cmd_verify(const ScenarioConfig& cfg) {
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  const auto rep = verify_conditions(fam, map, cfg.verify);
  CheckSuite s;
  for (const auto& c : rep.checks) s.add(c.name, c.pass, c.value, c.bound, c.detail);
  print_checks(s);
  io::write_json(out_file(cfg, "verify.json"),
                 io::document("verify", io::Json{{"family", fam.name}, {"report", io::to_json(rep)}}));
  return verdict(s);
}

int cmd_sample(const ScenarioConfig& cfg) {
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  const auto samples = sample_graph(fam, map, cfg.grid, cfg.pullback);
  std::size_t converged = 0;
  double worst = 0.0;
  for (const auto& g : samples)
    if (g.converged) {
      ++converged;
      if (std::isfinite(g.residual)) worst = std::max(worst, g.residual);
    }
  CheckSuite s;
  s.add("residual", worst <= 10.0 * cfg.pullback.tol, worst, 10.0 * cfg.pullback.tol,
        std::to_string(converged) + "/" + std::to_string(samples.size()) + " converged");
  print_checks(s);
  io::write_file(out_file(cfg, "samples.csv"), io::samples_csv(samples));
  io::write_json(out_file(cfg, "samples.json"),
                 io::document("sample", io::Json{{"family", fam.name}, {"checks", to_json(s)}}));
  return verdict(s);
}

int cmd_gap(const ScenarioConfig& cfg) {
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  io::Json estimates = io::Json::array();
  std::vector<QuasiGraphCell> cells;
  for (std::size_t r = 0; r < fam.neutral.orbits.size(); ++r)
    for (std::size_t i = 0; i < fam.neutral.orbits[r].size(); ++i) {
      auto est = gap_at(fam, map, fam.neutral.orbits[r][i], cfg.pullback, cfg.ladder);
      est.cell.certificate = Certificate{r, i, {}};
      std::printf("gap at %s: [%s, %s] lower bound %s%s\n", io::fmt(est.cell.x).c_str(), io::fmt(est.cell.lo).c_str(),
                  io::fmt(est.cell.hi).c_str(), io::fmt(est.lower_bound).c_str(),
                  est.converged ? "" : " (ladder not converged)");
      estimates.push_back(io::to_json(est));
      for (auto& c : preimage_cells(fam, map, est.cell, kFigure1Generations)) cells.push_back(std::move(c));
    }
  io::write_json(out_file(cfg, "gap.json"),
                 io::document("gap", io::Json{{"family", fam.name}, {"estimates", estimates}}));
  io::write_file(out_file(cfg, "cells.csv"), io::cells_csv(cells));
  return 0;
}

int cmd_pressure(const ScenarioConfig& cfg) {
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  std::optional<QuasiGraphAtlas> atlas;
  if (!fam.affine) {
    AtlasSpec spec = atlas_spec(cfg);
    spec.grid.count = 1024;
    spec.cell_depth = 0;
    atlas.emplace(fam, map, spec);
  }
  const auto res = bowen_root(fam, map, atlas ? &*atlas : nullptr, bowen_settings(cfg));
  std::printf("bowen root %s (kappa %s, %zu bisection steps)\n", io::fmt(res.root).c_str(), io::fmt(res.kappa).c_str(),
              res.iterations);
  for (const auto& w : res.warnings) std::printf("warning: %s\n", w.c_str());
  io::write_json(out_file(cfg, "pressure.json"),
                 io::document("pressure", io::Json{{"family", fam.name}, {"bowen", io::to_json(res)}}));
  return 0;
}

int cmd_boxdim(const ScenarioConfig& cfg) {
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  const auto rep = cross_validate(fam, map, cross_validate_settings(cfg));
  std::printf("slope %s [%s, %s], bowen_t %s, agreement %s\n", io::fmt(rep.fit.slope).c_str(),
              io::fmt(rep.fit.ci_low).c_str(), io::fmt(rep.fit.ci_high).c_str(), io::fmt(rep.bowen_t).c_str(),
              io::fmt(rep.agreement).c_str());
  for (const auto& f : rep.flags) std::printf("flag: %s\n", f.c_str());
  io::write_json(out_file(cfg, "boxdim.json"), io::document("boxdim", io::to_json(rep)));
  io::write_file(out_file(cfg, "boxdim.csv"), io::records_csv(rep.records));
  io::write_file(out_file(cfg, "boxdim.dat"), io::records_gnuplot(rep.records));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant graphs and quasi-graphs of skew products over expanding circle maps"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON scenario config")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256));
  app.add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& s) {
        g.seed = s;
        g.seed_set = true;
      },
      "Random seed");
  app.fallthrough();

  int code = 0;
  auto verb = [&](const char* name, const char* help, auto fn) {
    app.add_subcommand(name, help)->callback([&code, &g, fn] {
      try {
        code = fn(resolve(g));
      } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
        code = 2;
      }
    });
  };
  verb("verify", "Check the standing conditions of the configured family", cmd_verify);
  verb("sample", "Sample the invariant graph on the configured grid", cmd_sample);
  verb("gap", "Quasi-graph cells at the neutral set and its preimages", cmd_gap);
  verb("pressure", "Solve the Bowen equation", cmd_pressure);
  verb("boxdim", "Box-counting slope cross-validated against the Bowen root", cmd_boxdim);
  verb("dichotomy", "Gap-versus-amplitude sweep under bump perturbations", [](const ScenarioConfig& cfg) {
    const auto res = run_dichotomy_lab(cfg, perturbations_from(cfg));
    for (const auto& r : res.rows)
      std::printf("%-12s a=%-8s gap=%-14s eps0=%s\n", r.base.c_str(), io::fmt(r.amplitude).c_str(),
                  io::fmt(r.gap).c_str(), io::fmt(r.eps0).c_str());
    print_checks(res.checks);
    return verdict(res.checks);
  });
  verb("figure1", "Samples, cells and SVG for the configured family", [](const ScenarioConfig& cfg) {
    const auto b = run_figure1(cfg);
    print_checks(b.checks);
    return verdict(b.checks);
  });
  verb("dimstudy", "Dimension study table", [](const ScenarioConfig& cfg) {
    const auto res = run_dimension_study(cfg);
    std::fputs(res.table.c_str(), stdout);
    print_checks(res.checks);
    return verdict(res.checks);
  });
  verb("calibrate", "Oracle calibration suite", [](const ScenarioConfig& cfg) {
    const auto s = run_calibration(cfg);
    print_checks(s);
    return verdict(s);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return code;
}
