#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include <quasigraph.hpp>

using namespace quasigraph;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

ErrorCode config_error_of(const json& j) {
  try {
    (void)parse_config(j);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "config accepted: " << j.dump();
  return ErrorCode::InvalidArgument;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("quasigraph-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_of(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.grid.count = 1024;
  return cfg;
}

}  // namespace

TEST(Config, DefaultsFromEmptyObject) {
  const auto cfg = parse_config(json::object());
  EXPECT_EQ(cfg.family.type, "builtin");
  EXPECT_EQ(cfg.family.name, "figure1");
  EXPECT_EQ(cfg.map.b, 2u);
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.verify.seed, cfg.seed);
}

TEST(Config, FullDocumentRoundsIntoFields) {
  const auto cfg = parse_config(json::parse(R"js({
    "family": {"type": "affine", "f": "sin(2*pi*x)", "gamma": "(3+cos(2*pi*x))/4", "P": [0.0]},
    "map": {"type": "bary", "b": 3},
    "grid": {"count": 300, "offset": 0.25},
    "pullback": {"tol": 1e-9, "max_steps": 5000},
    "ladder": {"rungs": 12, "tol": 1e-5},
    "pressure": {"n_first": 4, "n_last": 8},
    "boxdim": {"k_first": 3, "k_last": 9, "strategy": "grid"},
    "dichotomy": {"bases": ["figure1"], "amplitudes": [0, 0.5]},
    "verify": {"samples": 50},
    "out": "elsewhere",
    "seed": 99,
    "threads": 3
  })js"));
  EXPECT_EQ(cfg.family.type, "affine");
  ASSERT_EQ(cfg.family.neutral_points.size(), 1u);
  EXPECT_EQ(cfg.map.b, 3u);
  EXPECT_EQ(cfg.grid.count, 300u);
  EXPECT_EQ(cfg.grid.offset, 0.25);
  EXPECT_EQ(cfg.pullback.tol, 1e-9);
  EXPECT_EQ(cfg.pullback.max_steps, 5000u);
  EXPECT_EQ(cfg.ladder.rungs, 12u);
  EXPECT_EQ(cfg.pressure.n_last, 8u);
  EXPECT_EQ(cfg.boxdim.strategy, "grid");
  EXPECT_EQ(cfg.dichotomy.amplitudes.size(), 2u);
  EXPECT_EQ(cfg.verify.samples, 50u);
  EXPECT_EQ(cfg.verify.seed, 99u);
  EXPECT_EQ(cfg.out, "elsewhere");
  EXPECT_EQ(cfg.threads, 3u);
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_EQ(config_error_of(json{{"famly", "figure1"}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"grid", {{"cout", 10}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"family", {{"type", "builtin"}, {"lamda", 0.5}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"verify", {{"seed", 3}}}}), ErrorCode::ConfigError);
}

TEST(Config, RangesEnforced) {
  EXPECT_EQ(config_error_of(json{{"grid", {{"count", 0}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"grid", {{"offset", 1.0}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"map", {{"b", 1}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"ladder", {{"rungs", 2}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"pullback", {{"tol", 0.0}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"pressure", {{"n_first", 9}, {"n_last", 8}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"boxdim", {{"strategy", "hexagons"}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"threads", 0}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"family", {{"type", "builtin"}, {"lambda", 1.5}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"family", {{"type", "affine"}, {"f", "x"}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"family", {{"type", "spline"}}}}), ErrorCode::ConfigError);
  EXPECT_EQ(config_error_of(json{{"seed", "seven"}}), ErrorCode::ConfigError);
}

TEST(Config, StringFamilyShorthand) {
  const auto cfg = parse_config(json{{"family", "weierstrass-0.5"}});
  const auto fam = build_family(cfg.family, build_map(cfg.map));
  EXPECT_EQ(fam.name, "weierstrass-0.5");
}

TEST(Config, AffineFamilyEvaluatesLikeReference) {
  const auto cfg = parse_config(json::parse(
      R"js({"family": {"type":"affine","f":"sin(2*pi*x)","gamma":"(3+cos(2*pi*x))/4","P":[0.0]}})js"));
  const auto map = build_map(cfg.map);
  const auto fam = build_family(cfg.family, map);
  const auto ref = families::figure1(map);
  for (double x : {0.0, 0.1, 0.37, 0.9})
    for (double t : {-1.0, 0.5}) EXPECT_NEAR(fam.g(x, t), ref.g(x, t), 1e-15);
  EXPECT_EQ(fam.neutral.points(), ref.neutral.points());
}

TEST(Config, LoadErrors) {
  try {
    (void)load_config("/nonexistent/config.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  const auto dir = scratch("load");
  {
    std::ofstream(dir / "bad.json") << "{ \"grid\": ";
  }
  EXPECT_THROW((void)load_config((dir / "bad.json").string()), Error);
  {
    std::ofstream(dir / "good.json") << R"({"seed": 5})";
  }
  EXPECT_EQ(load_config((dir / "good.json").string()).seed, 5u);
}

TEST(Figure1, GapAndCells) {
  const auto b = run_figure1(small_config(), false);
  ASSERT_TRUE(b.gap.has_value());
  EXPECT_GT(b.gap->cell.gap(), 0.0);
  EXPECT_GT(b.gap->lower_bound, 10.0 * LadderSpec{}.tol);
  // 0 and its preimages of generations 1..6 are the dyadics k / 64.
  EXPECT_EQ(b.cells.size(), 64u);
  for (const auto& c : b.cells) EXPECT_GT(c.gap(), 0.0) << c.x;
  EXPECT_TRUE(b.checks.all_pass());
  EXPECT_EQ(b.samples.size(), 1024u);
}

TEST(Figure1, UniformContractionIsContinuous) {
  auto cfg = small_config();
  cfg.family = FamilySpec{"affine", "uniform", 0.8, "sin(2*pi*x)", "0.75", {0.0}, std::nullopt};
  const auto b = run_figure1(cfg, false);
  ASSERT_TRUE(b.gap.has_value());
  EXPECT_LE(b.gap->cell.gap(), 2.0 * cfg.ladder.tol);
}

TEST(Figure1, ZeroForcingGivesZeroGraph) {
  auto cfg = small_config();
  cfg.family = FamilySpec{"affine", "unforced", 0.8, "0", "(3+cos(2*pi*x))/4", {0.0}, std::nullopt};
  const auto b = run_figure1(cfg, false);
  for (const auto& s : b.samples) {
    ASSERT_TRUE(s.converged);
    EXPECT_LE(std::fabs(s.u), cfg.pullback.tol);
  }
  ASSERT_TRUE(b.gap.has_value());
  EXPECT_LE(b.gap->cell.gap(), 2.0 * cfg.ladder.tol);
}

TEST(Figure1, SvgHasOneSegmentPerCell) {
  const auto b = run_figure1(small_config(), false);
  EXPECT_EQ(count_of(b.svg, "<line class=\"cell\""), b.cells.size());
  EXPECT_NE(b.svg.find("<svg"), std::string::npos);
  EXPECT_NE(b.svg.find("version=\"1.1\""), std::string::npos);
  EXPECT_NE(b.svg.find("<polyline"), std::string::npos);
}

TEST(Figure1, WrittenArtifacts) {
  auto cfg = small_config();
  cfg.out = scratch("figure1").string();
  (void)run_figure1(cfg);
  const auto samples = slurp(fs::path(cfg.out) / "figure1_samples.csv");
  EXPECT_EQ(samples.rfind("x,u,converged,visits,residual\n", 0), 0u);
  EXPECT_EQ(count_of(samples, "\n"), 1025u);
  EXPECT_EQ(slurp(fs::path(cfg.out) / "figure1_cells.csv").rfind("x,lo,hi,gap,certificate\n", 0), 0u);
  const auto doc = json::parse(slurp(fs::path(cfg.out) / "figure1.json"));
  EXPECT_EQ(doc["schema"], "quasigraph/1");
  EXPECT_EQ(doc["kind"], "figure1");
  EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "figure1.svg"));
}

TEST(Figure1, DeterministicAcrossRunsAndThreads) {
  std::vector<std::string> outputs;
  for (std::size_t threads : {1u, 1u, 4u}) {
    auto cfg = small_config();
    cfg.out = scratch("det-" + std::to_string(outputs.size())).string();
    set_default_threads(threads);
    (void)run_figure1(cfg);
    std::string all;
    for (const char* f : {"figure1_samples.csv", "figure1_cells.csv", "figure1.svg", "figure1.json"})
      all += slurp(fs::path(cfg.out) / f);
    outputs.push_back(all);
  }
  set_default_threads(0);
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(Dichotomy, AmplitudeZeroReproducesBase) {
  auto cfg = small_config();
  cfg.dichotomy.bases = {"figure1"};
  cfg.dichotomy.amplitudes = {0.0, 0.25};
  const auto res = run_dichotomy_lab(cfg, perturbations_from(cfg), false);
  ASSERT_EQ(res.rows.size(), 2u);
  const auto map = build_map(cfg.map);
  const auto base = gap_at(families::figure1(map), map, 0.0, cfg.pullback, cfg.ladder);
  EXPECT_EQ(res.rows[0].gap, base.cell.gap());
  EXPECT_EQ(res.rows[0].eps0, 0.0);
  EXPECT_GT(res.rows[1].eps0, 0.0);
  EXPECT_EQ(res.rows[0].certificate_gaps.size(), cfg.dichotomy.certificates);
  EXPECT_TRUE(res.checks.all_pass());
}

TEST(Dichotomy, ContinuousBaseAcquiresGap) {
  auto cfg = small_config();
  cfg.dichotomy.bases = {"continuous"};
  cfg.dichotomy.amplitudes = {0.0, 0.0625, 0.25};
  const auto res = run_dichotomy_lab(cfg, perturbations_from(cfg), false);
  ASSERT_EQ(res.rows.size(), 3u);
  EXPECT_LE(res.rows[0].gap, 2.0 * cfg.ladder.tol);
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    EXPECT_GT(res.rows[i].lower_bound, 3.0 * cfg.ladder.tol) << res.rows[i].amplitude;
    // |gap(a) - gap(0)| <= 2 eps0(a), up to ladder tolerance
    EXPECT_LE(std::fabs(res.rows[i].gap - res.rows[0].gap), 2.0 * res.rows[i].eps0 + 3.0 * cfg.ladder.tol);
    for (double g : res.rows[i].certificate_gaps) EXPECT_GT(g, 0.0);
  }
  EXPECT_TRUE(res.checks.all_pass());
}

TEST(Dichotomy, CsvHeader) {
  auto cfg = small_config();
  cfg.out = scratch("dichotomy").string();
  cfg.dichotomy.bases = {"figure1"};
  cfg.dichotomy.amplitudes = {0.0};
  cfg.dichotomy.certificates = 2;
  (void)run_dichotomy_lab(cfg, perturbations_from(cfg));
  const auto csv = slurp(fs::path(cfg.out) / "dichotomy.csv");
  EXPECT_EQ(csv.rfind("base,amplitude,gap_at_p,lower_bound,converged,eps0,gap_cert_1,gap_cert_2\n", 0), 0u);
  EXPECT_EQ(count_of(csv, "\n"), 2u);
}

TEST(Dichotomy, PerturbationSupportValidated) {
  const auto fam = families::figure1(MarkovMap::doubling());
  EXPECT_NO_THROW(check_perturbation(fam, PerturbationSpec{}));
  EXPECT_THROW(check_perturbation(fam, PerturbationSpec{0.02, 0.04, 1.0, "bump"}), Error);
  EXPECT_THROW(check_perturbation(fam, PerturbationSpec{0.97, 0.04, 1.0, "bump"}), Error);
  EXPECT_THROW(check_perturbation(fam, PerturbationSpec{0.3, 0.0, 1.0, "bump"}), Error);
  EXPECT_THROW(check_perturbation(fam, PerturbationSpec{0.3, 0.04, 1.0, "square"}), Error);
  auto cfg = small_config();
  cfg.dichotomy.bases = {"figure1"};
  EXPECT_THROW((void)run_dichotomy_lab(cfg, {PerturbationSpec{0.01, 0.04, 0.5, "bump"}}, false), Error);
  cfg.dichotomy.bases = {"flat"};
  EXPECT_THROW((void)run_dichotomy_lab(cfg, perturbations_from(cfg), false), Error);
}

TEST(Calibration, DefaultPasses) {
  const auto suite = run_calibration(ScenarioConfig{}, false);
  for (const auto& c : suite.checks) EXPECT_TRUE(c.pass) << c.name << ": " << c.detail;
  EXPECT_GE(suite.checks.size(), 10u);
}

TEST(Calibration, LooserToleranceStillPasses) {
  ScenarioConfig cfg;
  cfg.pullback.tol *= 10.0;
  EXPECT_TRUE(run_calibration(cfg, false).all_pass());
}

TEST(Calibration, CorruptedGammaFailsConditionsOnly) {
  ScenarioConfig cfg;
  cfg.family = FamilySpec{"affine", "corrupt", 0.8, "sin(2*pi*x)", "1.2 - 0.2*cos(2*pi*x)", {0.0}, std::nullopt};
  const auto suite = run_calibration(cfg, false);
  EXPECT_FALSE(suite.all_pass());
  for (const auto& c : suite.checks) {
    if (c.name.rfind("conditions:", 0) == 0) EXPECT_FALSE(c.pass);
    else EXPECT_TRUE(c.pass) << c.name;
  }
}

TEST(Calibration, JsonVerdicts) {
  ScenarioConfig cfg;
  cfg.out = scratch("calibration").string();
  (void)run_calibration(cfg);
  const auto doc = json::parse(slurp(fs::path(cfg.out) / "calibration.json"));
  EXPECT_EQ(doc["schema"], "quasigraph/1");
  EXPECT_TRUE(doc["all_pass"].get<bool>());
  for (const auto& c : doc["checks"]) EXPECT_EQ(c["verdict"], "pass") << c["name"];
}

TEST(Shadowing, SuiteWithinBound) {
  const auto suite = shadowing_suite(7, 1000);
  ASSERT_EQ(suite.checks.size(), 1u);
  EXPECT_TRUE(suite.checks[0].pass) << suite.checks[0].detail;
  EXPECT_LT(suite.checks[0].value, 1.0);
}

TEST(DimensionStudy, RowsAndChecks) {
  auto cfg = ScenarioConfig{};
  cfg.out = scratch("dimstudy").string();
  const auto res = run_dimension_study(cfg);
  ASSERT_EQ(res.rows.size(), 4u);
  const auto& w6 = res.rows[0].report;
  const auto& w8 = res.rows[1].report;
  const auto& f1 = res.rows[2].report;
  EXPECT_NEAR(w6.bowen_t, 2.0 + std::log(0.6) / std::log(2.0), 1e-3);
  EXPECT_NEAR(w8.bowen_t, 2.0 + std::log(0.8) / std::log(2.0), 1e-3);
  EXPECT_LE(w8.agreement, 0.05);
  EXPECT_LE(f1.agreement, 0.1);
  EXPECT_TRUE(f1.gap_flag);
  EXPECT_FALSE(w8.gap_flag);
  for (const auto& r : res.rows) EXPECT_TRUE(r.conditions_pass) << r.label;
  EXPECT_TRUE(res.checks.all_pass());
  EXPECT_NE(res.table.find("figure1"), std::string::npos);
  const auto doc = json::parse(slurp(fs::path(cfg.out) / "dimension_study.json"));
  EXPECT_EQ(doc["rows"].size(), 4u);
}
