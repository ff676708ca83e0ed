#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atlas.hpp"
#include "box_dimension.hpp"
#include "error.hpp"
#include "fibre_ops.hpp"
#include "invariant_graph.hpp"
#include "skew_family.hpp"
#include "thermodynamics.hpp"

namespace quasigraph {

/// {"type":"builtin","name":...,"lambda":...} or
/// {"type":"affine","f":...,"gamma":...,"P":[...],"epsilon":...}.
struct FamilySpec {
  std::string type = "builtin";
  std::string name = "figure1";
  double lambda = 0.8;
  std::string f;
  std::string gamma;
  std::vector<double> neutral_points;
  std::optional<double> epsilon;
};

struct MapSpec {
  unsigned b = 2;
};

struct PressureSpec {
  std::size_t n_first = 6;
  std::size_t n_last = 12;
  std::size_t budget = 1u << 22;
  std::size_t points = 3;
  double t_lo = 1.0;
  double t_hi = 2.0;
  double tol = 1e-4;
};

struct BoxSpec {
  int k_first = 4;
  int k_last = 11;
  std::string strategy = "moran-columns";
  std::size_t drop_coarse = 2;
  std::size_t drop_fine = 1;
  std::size_t atlas_grid = 1u << 20;
  std::size_t cell_depth = 12;
};

/// g -> g + amplitude * bump, bump a C-infinity profile of radius width.
struct PerturbationSpec {
  double center = 1.0 / 6.0;
  double width = 0.04;
  double amplitude = 0.0;
  std::string profile = "bump";
};

struct DichotomySpec {
  std::vector<std::string> bases{"continuous", "figure1"};
  double center = 1.0 / 6.0;
  double width = 0.04;
  std::vector<double> amplitudes{0.0, 0.0625, 0.125, 0.25, 0.5, 1.0};
  std::size_t certificates = 8;
  std::size_t eps_grid = 512;
};

struct ScenarioConfig {
  FamilySpec family;
  MapSpec map;
  GridSpec grid{};
  PullbackSettings pullback{};
  LadderSpec ladder{};
  PressureSpec pressure{};
  BoxSpec boxdim{};
  DichotomySpec dichotomy{};
  VerifySettings verify{};
  std::string out = "out";
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

namespace detail {

using Json = nlohmann::json;

/// Reads the fields of one JSON object and rejects keys nobody asked for.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigError, where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigError, where_ + "." + key + ": " + e.what());
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    T v{};
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    get(key, v);
    out = v;
  }

  [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

  [[nodiscard]] const Json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw Error(ErrorCode::ConfigError, where_ + ": unknown key '" + k + "'");
  }

  [[nodiscard]] const std::string& where() const noexcept { return where_; }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

inline FamilySpec parse_family(const Json& j) {
  FamilySpec f;
  if (j.is_string()) {
    f.name = j.get<std::string>();
    return f;
  }
  StrictObject o(j, "family");
  o.get("type", f.type);
  if (f.type == "builtin") {
    o.get("name", f.name);
    o.get("lambda", f.lambda);
    require(f.lambda > 0.0 && f.lambda < 1.0, "family.lambda must lie in (0,1)");
  } else if (f.type == "affine") {
    f.name = "affine";
    o.get("name", f.name);
    o.get("f", f.f);
    o.get("gamma", f.gamma);
    o.get("P", f.neutral_points);
    o.get("epsilon", f.epsilon);
    require(!f.f.empty() && !f.gamma.empty(), "family: affine type needs 'f' and 'gamma'");
    if (f.epsilon) require(*f.epsilon > 0.0, "family.epsilon must be positive");
  } else {
    throw Error(ErrorCode::ConfigError, "family.type must be 'builtin' or 'affine'");
  }
  o.finish();
  return f;
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j) {
  using detail::require;
  using detail::StrictObject;
  ScenarioConfig c;
  StrictObject top(j, "config");
  if (top.has("family")) c.family = detail::parse_family(top.child("family"));
  if (top.has("map")) {
    StrictObject o(top.child("map"), "map");
    std::string type = "bary";
    o.get("type", type);
    o.get("b", c.map.b);
    require(type == "bary", "map.type must be 'bary'");
    require(c.map.b >= 2 && c.map.b <= 16, "map.b must lie in [2,16]");
    o.finish();
  }
  if (top.has("grid")) {
    StrictObject o(top.child("grid"), "grid");
    o.get("count", c.grid.count);
    o.get("offset", c.grid.offset);
    require(c.grid.count >= 1 && c.grid.count <= (1u << 26), "grid.count must lie in [1, 2^26]");
    require(c.grid.offset > 0.0 && c.grid.offset < 1.0, "grid.offset must lie in (0,1)");
    o.finish();
  }
  if (top.has("pullback")) {
    StrictObject o(top.child("pullback"), "pullback");
    o.get("tol", c.pullback.tol);
    o.get("delta", c.pullback.delta);
    o.get("max_visits", c.pullback.max_visits);
    o.get("max_steps", c.pullback.max_steps);
    o.get("seed_t", c.pullback.seed_t);
    o.get("spread", c.pullback.spread);
    o.get("lambda_delta", c.pullback.lambda_delta);
    require(c.pullback.tol > 0.0, "pullback.tol must be positive");
    require(c.pullback.delta >= 0.0, "pullback.delta must be non-negative");
    require(c.pullback.max_steps >= 1 && c.pullback.max_visits >= 1, "pullback step limits must be positive");
    require(c.pullback.spread > 0.0, "pullback.spread must be positive");
    if (c.pullback.lambda_delta)
      require(*c.pullback.lambda_delta > 0.0 && *c.pullback.lambda_delta < 1.0,
              "pullback.lambda_delta must lie in (0,1)");
    o.finish();
  }
  if (top.has("ladder")) {
    StrictObject o(top.child("ladder"), "ladder");
    o.get("outer", c.ladder.outer);
    o.get("rungs", c.ladder.rungs);
    o.get("factor", c.ladder.factor);
    o.get("samples_per_side", c.ladder.samples_per_side);
    o.get("tol", c.ladder.tol);
    require(c.ladder.outer >= 0.0, "ladder.outer must be non-negative");
    require(c.ladder.rungs >= 3 && c.ladder.rungs <= 40, "ladder.rungs must lie in [3,40]");
    require(c.ladder.factor > 0.0 && c.ladder.factor < 1.0, "ladder.factor must lie in (0,1)");
    require(c.ladder.samples_per_side >= 1, "ladder.samples_per_side must be positive");
    require(c.ladder.tol > 0.0, "ladder.tol must be positive");
    o.finish();
  }
  if (top.has("pressure")) {
    StrictObject o(top.child("pressure"), "pressure");
    o.get("n_first", c.pressure.n_first);
    o.get("n_last", c.pressure.n_last);
    o.get("budget", c.pressure.budget);
    o.get("points", c.pressure.points);
    o.get("t_lo", c.pressure.t_lo);
    o.get("t_hi", c.pressure.t_hi);
    o.get("tol", c.pressure.tol);
    require(c.pressure.n_first >= 1 && c.pressure.n_first <= c.pressure.n_last, "pressure n range is empty");
    require(c.pressure.points >= 1, "pressure.points must be positive");
    require(c.pressure.t_lo < c.pressure.t_hi, "pressure.t_lo must be below t_hi");
    require(c.pressure.tol > 0.0, "pressure.tol must be positive");
    o.finish();
  }
  if (top.has("boxdim")) {
    StrictObject o(top.child("boxdim"), "boxdim");
    o.get("k_first", c.boxdim.k_first);
    o.get("k_last", c.boxdim.k_last);
    o.get("strategy", c.boxdim.strategy);
    o.get("drop_coarse", c.boxdim.drop_coarse);
    o.get("drop_fine", c.boxdim.drop_fine);
    o.get("atlas_grid", c.boxdim.atlas_grid);
    o.get("cell_depth", c.boxdim.cell_depth);
    require(c.boxdim.k_first >= 1 && c.boxdim.k_first <= c.boxdim.k_last && c.boxdim.k_last <= 24,
            "boxdim k range must satisfy 1 <= k_first <= k_last <= 24");
    require(c.boxdim.strategy == "grid" || c.boxdim.strategy == "moran-columns" || c.boxdim.strategy == "packing",
            "boxdim.strategy must be 'grid', 'moran-columns' or 'packing'");
    require(c.boxdim.cell_depth <= 20, "boxdim.cell_depth must be at most 20");
    o.finish();
  }
  if (top.has("dichotomy")) {
    StrictObject o(top.child("dichotomy"), "dichotomy");
    o.get("bases", c.dichotomy.bases);
    o.get("center", c.dichotomy.center);
    o.get("width", c.dichotomy.width);
    o.get("amplitudes", c.dichotomy.amplitudes);
    o.get("certificates", c.dichotomy.certificates);
    o.get("eps_grid", c.dichotomy.eps_grid);
    require(c.dichotomy.width > 0.0 && c.dichotomy.width < 0.5, "dichotomy.width must lie in (0, 0.5)");
    require(!c.dichotomy.amplitudes.empty(), "dichotomy.amplitudes must be nonempty");
    o.finish();
  }
  if (top.has("verify")) {
    StrictObject o(top.child("verify"), "verify");
    o.get("delta", c.verify.delta);
    o.get("samples", c.verify.samples);
    o.get("max_length", c.verify.max_length);
    o.finish();
  }
  top.get("out", c.out);
  top.get("seed", c.seed);
  top.get("threads", c.threads);
  require(c.threads >= 1 && c.threads <= 256, "threads must lie in [1,256]");
  top.finish();
  c.verify.seed = c.seed;
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path + ": " + e.what());
  }
  return parse_config(j);
}

inline MarkovMap build_map(const MapSpec& m) { return MarkovMap::bary(m.b); }

inline SkewFamily build_family(const FamilySpec& f, const MarkovMap& map) {
  if (f.type == "affine")
    return families::from_expressions(f.name, map, f.f, f.gamma, f.neutral_points, f.epsilon);
  return families::builtin(f.name, map, f.lambda);
}

inline BowenSettings bowen_settings(const ScenarioConfig& c) {
  BowenSettings b;
  b.n_range = n_range(c.pressure.n_first, c.pressure.n_last);
  b.t_lo = c.pressure.t_lo;
  b.t_hi = c.pressure.t_hi;
  b.tol = c.pressure.tol;
  b.pressure.budget = c.pressure.budget;
  b.pressure.points = c.pressure.points;
  return b;
}

inline AtlasSpec atlas_spec(const ScenarioConfig& c) {
  AtlasSpec a;
  a.grid = GridSpec{c.boxdim.atlas_grid, c.grid.offset};
  a.cell_depth = c.boxdim.cell_depth;
  a.pullback = c.pullback;
  a.ladder = c.ladder;
  return a;
}

inline CrossValidateSettings cross_validate_settings(const ScenarioConfig& c) {
  CrossValidateSettings cs;
  cs.atlas = atlas_spec(c);
  cs.radii = dyadic_radii(c.boxdim.k_first, c.boxdim.k_last);
  cs.strategy = c.boxdim.strategy;
  cs.window = FitWindow{c.boxdim.drop_coarse, c.boxdim.drop_fine};
  cs.bowen = bowen_settings(c);
  return cs;
}

}  // namespace quasigraph
