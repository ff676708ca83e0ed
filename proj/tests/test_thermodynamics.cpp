#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <quasigraph.hpp>

using namespace quasigraph;

namespace {

const MarkovMap kDoubling = MarkovMap::doubling();

MarkovMap wobbly_doubling() {
  const double a = 0.3 / (2.0 * kPi);
  auto eval = [a](double x) { return 2.0 * x + a * std::sin(2.0 * kPi * x); };
  auto deriv = [a](double x) { return 2.0 + 2.0 * kPi * a * std::cos(2.0 * kPi * x); };
  auto invert = [eval](double lo, double hi, double y) {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (eval(mid) < y) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
  };
  return MarkovMap::from_branches(
      "wobbly", {BranchSpec{0.0, 0.5, eval, deriv, [invert](double y) { return invert(0.0, 0.5, y); }},
                 BranchSpec{0.5, 1.0, [eval](double x) { return eval(x) - 1.0; }, deriv,
                            [invert](double y) { return invert(0.5, 1.0, y + 1.0); }}});
}

Potential bowen_potential(const SkewFamily& fam, const MarkovMap& map, double t) {
  return combine(log_derivative_potential(map), 1.0 - t, make_D_potential(fam, map, nullptr), 1.0);
}

}  // namespace

TEST(BirkhoffSum, Examples) {
  EXPECT_NEAR(birkhoff_sum(constant_potential(0.7), kDoubling, 0.3, 9), 6.3, 1e-14);
  const auto logt = log_derivative_potential(kDoubling);
  for (std::size_t n : {1u, 5u, 17u}) EXPECT_NEAR(birkhoff_sum(logt, kDoubling, kGoldenOffset, n), n * std::log(2.0), 1e-13);
  const auto w = families::weierstrass(kDoubling, 0.5);
  EXPECT_NEAR(birkhoff_sum(make_D_potential(w, kDoubling, nullptr), kDoubling, 0.41, 3), 3.0 * std::log(0.5), 1e-14);
}

TEST(BirkhoffSum, MatchesDirectOrbitSum) {
  const auto map = wobbly_doubling();
  const auto logt = log_derivative_potential(map);
  for (double x : {0.1, 0.37, 0.8}) {
    double y = x;
    double direct = 0.0;
    for (int j = 0; j < 12; ++j) {
      direct += std::log(2.0 + 0.3 * std::cos(2.0 * kPi * y));
      y = map.evaluate(y);
    }
    EXPECT_NEAR(birkhoff_sum(logt, map, x, 12), direct, 1e-9) << x;
  }
}

TEST(DPotential, AffineIsLogGamma) {
  const auto fam = families::figure1(kDoubling);
  const auto pot = make_D_potential(fam, kDoubling, nullptr);
  for (double x : {0.05, 0.3, 0.72}) {
    EXPECT_NEAR(pot.eval(x, kDoubling.branch_of(x)), std::log((3.0 + std::cos(2.0 * kPi * x)) / 4.0), 1e-15);
  }
  EXPECT_EQ(pot.eval(0.0, 0), 0.0);
  const auto w = make_D_potential(families::weierstrass(kDoubling, 0.8), kDoubling, nullptr);
  for (double x : {0.0, 0.5, 0.9}) EXPECT_NEAR(w.eval(x, kDoubling.branch_of(x)), std::log(0.8), 1e-15);
}

TEST(DPotential, NonlinearUsesGraphProvider) {
  const auto fam = families::figure1_nonlinear(kDoubling);
  EXPECT_THROW((void)make_D_potential(fam, kDoubling, nullptr), Error);
  AtlasSpec spec;
  spec.grid.count = 256;
  spec.cell_depth = 0;
  const QuasiGraphAtlas atlas(fam, kDoubling, spec);
  const auto pot = make_D_potential(fam, kDoubling, &atlas);
  for (double x : {0.1234, 0.6789}) {
    const double tx = kDoubling.evaluate(x);
    const double u = pullback_value(fam, kDoubling, tx);
    EXPECT_NEAR(pot.eval(x, kDoubling.branch_of(x)), std::log(fam.dh(x, u)), 1e-9) << x;
  }
  // Neutral fixed point: fibre map is the identity.
  EXPECT_NEAR(pot.eval(0.0, 0), 0.0, 1e-12);
}

TEST(CapacityPressure, ConstantPotentials) {
  for (std::size_t n = 1; n <= 10; ++n)
    EXPECT_NEAR(capacity_pressure(constant_potential(0.0), kDoubling, n), std::log(2.0), 1e-12) << n;
  const auto tri = MarkovMap::bary(3);
  for (std::size_t n = 1; n <= 8; ++n)
    EXPECT_NEAR(capacity_pressure(constant_potential(-0.4), tri, n), std::log(3.0) - 0.4, 1e-12) << n;
}

TEST(CapacityPressure, ConstantExactnessUpToFourteen) {
  for (double c : {-1.3, 0.0, 2.1})
    for (std::size_t n = 1; n <= 14; ++n)
      EXPECT_LE(std::fabs(capacity_pressure(constant_potential(c), kDoubling, n) - (std::log(2.0) + c)), 1e-12)
          << "c=" << c << " n=" << n;
}

TEST(CapacityPressure, MinusLogDerivativeIsZero) {
  const auto pot = combine(log_derivative_potential(kDoubling), -1.0, constant_potential(0.0), 0.0);
  for (std::size_t n = 1; n <= 12; ++n) EXPECT_NEAR(capacity_pressure(pot, kDoubling, n), 0.0, 1e-12) << n;
}

TEST(CapacityPressure, Errors) {
  PressureOptions small;
  small.budget = 100;
  try {
    (void)capacity_pressure(constant_potential(0.0), kDoubling, 7, small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
  EXPECT_NO_THROW((void)capacity_pressure(constant_potential(0.0), kDoubling, 6, small));
  EXPECT_THROW((void)capacity_pressure(constant_potential(0.0), kDoubling, 0), Error);
}

TEST(CapacityPressure, MonotoneInT) {
  const auto fam = families::figure1(kDoubling);
  const std::vector<double> ts{0.5, 1.0, 1.3, 1.6, 2.0, 2.5};
  for (std::size_t n = 1; n <= 10; ++n) {
    double prev = INFINITY;
    for (double t : ts) {
      const double p = capacity_pressure(bowen_potential(fam, kDoubling, t), kDoubling, n);
      EXPECT_LE(p, prev + 1e-14) << "n=" << n << " t=" << t;
      prev = p;
    }
  }
}

TEST(CapacityPressure, SandwichBracketsEstimate) {
  const auto fam = families::figure1(kDoubling);
  auto pot = bowen_potential(fam, kDoubling, 1.5);
  double prev_sup = -INFINITY;
  for (std::size_t m : {3u, 5u, 9u, 17u}) {
    pot.points_per_cylinder = m;
    const auto cv = capacity_pressure_detail(pot, kDoubling, 8);
    EXPECT_LE(cv.min, cv.sup);
    // Nested evaluation points: the sup estimate can only grow.
    EXPECT_GE(cv.sup, prev_sup - 1e-14) << m;
    prev_sup = cv.sup;
  }
  pot.points_per_cylinder = 3;
  double first = 0.0;
  for (std::size_t n = 2; n <= 12; n += 2) {
    const auto cv = capacity_pressure_detail(pot, kDoubling, n);
    const double width = cv.sup - cv.min;
    if (n == 2) first = width;
    EXPECT_LE(width, first + 1e-12) << n;
  }
}

TEST(CapacityPressure, ThreadCountDoesNotChangeBits) {
  const auto fam = families::figure1(kDoubling);
  const auto pot = bowen_potential(fam, kDoubling, 1.4);
  set_default_threads(1);
  const double one = capacity_pressure(pot, kDoubling, 12);
  set_default_threads(8);
  const double eight = capacity_pressure(pot, kDoubling, 12);
  set_default_threads(0);
  EXPECT_EQ(one, eight);
}

TEST(Pressure, ZeroPotential) {
  const auto est = pressure(constant_potential(0.0), kDoubling, n_range(4, 10));
  EXPECT_NEAR(est.extrapolated, std::log(2.0), 1e-12);
  EXPECT_LE(est.fit.residual, 1e-12);
  EXPECT_EQ(est.per_n.size(), 7u);
  EXPECT_EQ(est.per_n.front().first, 4u);
}

TEST(Pressure, WeierstrassClosedFormRoot) {
  for (double lambda : {0.5, 0.6, 0.8}) {
    const double t = 2.0 + std::log(lambda) / std::log(2.0);
    const auto pot = combine(log_derivative_potential(kDoubling), 1.0 - t, constant_potential(std::log(lambda)), 1.0);
    EXPECT_NEAR(pressure(pot, kDoubling, n_range(6, 12)).extrapolated, 0.0, 1e-10) << lambda;
  }
}

TEST(Pressure, NeutralCylinderLowerBound) {
  const auto fam = families::figure1(kDoubling);
  const auto est = pressure(bowen_potential(fam, kDoubling, 1.0), kDoubling, n_range(6, 12));
  for (const auto& [n, v] : est.per_n) EXPECT_GE(v, -1e-15) << n;
  EXPECT_GE(est.extrapolated, -1e-3);
}

TEST(Pressure, RefinementStability) {
  const auto c = pressure(constant_potential(0.3), kDoubling, n_range(3, 12));
  for (std::size_t i = 2; i < c.per_n.size(); ++i) {
    const double d_prev = std::fabs(c.per_n[i - 1].second - c.per_n[i - 2].second);
    const double d = std::fabs(c.per_n[i].second - c.per_n[i - 1].second);
    EXPECT_LE(d, d_prev + 1e-14);
  }
  const auto fam = families::figure1(kDoubling);
  const auto v = pressure(bowen_potential(fam, kDoubling, 1.5), kDoubling, n_range(6, 12));
  EXPECT_LT(v.fit.drift, 0.05);
}

TEST(Pressure, Errors) {
  EXPECT_THROW((void)pressure(constant_potential(0.0), kDoubling, {}), Error);
  EXPECT_THROW((void)pressure(constant_potential(0.0), kDoubling, {8, 6}), Error);
  PressureOptions small;
  small.budget = 1u << 10;
  try {
    (void)pressure(constant_potential(0.0), kDoubling, n_range(8, 12), small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
  }
}

TEST(Pressure, JsonShape) {
  const auto est = pressure(constant_potential(0.0), kDoubling, n_range(2, 4));
  const auto j = io::to_json(est);
  ASSERT_TRUE(j.contains("per_n"));
  ASSERT_TRUE(j.contains("extrapolated"));
  ASSERT_TRUE(j.contains("fit"));
  ASSERT_EQ(j["per_n"].size(), 3u);
  EXPECT_EQ(j["per_n"][0][0].get<int>(), 2);
  EXPECT_NEAR(j["per_n"][0][1].get<double>(), std::log(2.0), 1e-12);
  EXPECT_NEAR(j["extrapolated"].get<double>(), std::log(2.0), 1e-12);
}

TEST(BowenTable, AgreesWithDirectCapacityPressure) {
  const auto fam = families::figure1(kDoubling);
  const auto log_dh = make_D_potential(fam, kDoubling, nullptr);
  const BowenTable table(kDoubling, log_dh, 9);
  for (double t : {1.0, 1.37, 1.9}) {
    const auto direct = capacity_pressure_detail(bowen_potential(fam, kDoubling, t), kDoubling, 9);
    const auto tab = table.at(t);
    EXPECT_NEAR(tab.sup, direct.sup, 1e-12) << t;
    EXPECT_NEAR(tab.min, direct.min, 1e-12) << t;
  }
}

TEST(BowenRoot, WeierstrassClosedForm) {
  const auto half = bowen_root(families::weierstrass(kDoubling, 0.5), kDoubling, nullptr);
  EXPECT_NEAR(half.root, 1.0, 1e-12);
  const BowenSettings bs;
  const auto w8 = bowen_root(families::weierstrass(kDoubling, 0.8), kDoubling, nullptr, bs);
  EXPECT_NEAR(w8.root, 2.0 + std::log(0.8) / std::log(2.0), bs.tol);
  EXPECT_TRUE(w8.sign_persistent);
  EXPECT_NEAR(w8.kappa, 1.6, 1e-12);
  EXPECT_TRUE(w8.warnings.empty());
  EXPECT_GT(w8.iterations, 0u);
}

TEST(BowenRoot, Figure1BracketSigns) {
  const auto res = bowen_root(families::figure1(kDoubling), kDoubling, nullptr);
  EXPECT_GT(res.at_lo.extrapolated, 0.0);
  EXPECT_LT(res.at_hi.extrapolated, 0.0);
  EXPECT_TRUE(res.sign_persistent);
  EXPECT_GT(res.root, 1.0);
  EXPECT_LT(res.root, 2.0);
  EXPECT_LE(std::fabs(res.at_root.extrapolated), 1e-3);
}

TEST(BowenRoot, WeakHyperbolicityWarns) {
  const auto res = bowen_root(families::weierstrass(kDoubling, 0.5), kDoubling, nullptr);
  EXPECT_NEAR(res.kappa, 1.0, 1e-12);
  EXPECT_FALSE(res.warnings.empty());
}

TEST(BowenRoot, NoBracket) {
  BowenSettings bs;
  bs.t_lo = 1.2;
  bs.t_hi = 1.5;
  try {
    (void)bowen_root(families::weierstrass(kDoubling, 0.5), kDoubling, nullptr, bs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoBracket);
  }
}

TEST(BowenRoot, NonlinearFamilyWithProvider) {
  const auto fam = families::figure1_nonlinear(kDoubling);
  AtlasSpec spec;
  spec.grid.count = 1024;
  spec.cell_depth = 0;
  const QuasiGraphAtlas atlas(fam, kDoubling, spec);
  BowenSettings bs;
  bs.n_range = n_range(6, 9);
  const auto res = bowen_root(fam, kDoubling, &atlas, bs);
  EXPECT_GT(res.at_lo.extrapolated, 0.0);
  EXPECT_LT(res.at_hi.extrapolated, 0.0);
  EXPECT_GT(res.root, 1.0);
  EXPECT_LT(res.root, 2.0);
}
