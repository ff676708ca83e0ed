#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include <quasigraph.hpp>

using namespace quasigraph;

namespace {

// T(x) = 2x + a sin(2 pi x) / (2 pi), a degree-two expanding circle map
// without closed-form inverse branches.
MarkovMap wobbly_doubling(double a = 0.3) {
  const double k = a / (2.0 * kPi);
  std::vector<BranchSpec> specs;
  for (int j = 0; j < 2; ++j) {
    BranchSpec s;
    s.lo = 0.5 * j;
    s.hi = 0.5 * (j + 1);
    s.eval = [k](double x) { return 2.0 * x + k * std::sin(2.0 * kPi * x); };
    s.deriv = [a](double x) { return 2.0 + a * std::cos(2.0 * kPi * x); };
    specs.push_back(std::move(s));
  }
  return MarkovMap::from_branches("wobbly", std::move(specs));
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Evaluate, DoublingValues) {
  const auto m = MarkovMap::doubling();
  EXPECT_DOUBLE_EQ(m.evaluate(0.3), 0.6);
  EXPECT_DOUBLE_EQ(m.evaluate(0.75), 0.5);
  EXPECT_DOUBLE_EQ(m.evaluate(0.0), 0.0);
}

TEST(Evaluate, EndpointContinuity) {
  const auto m = wobbly_doubling();
  EXPECT_NEAR(circle_distance(m.evaluate(0.5), m.evaluate(0.5 - 1e-15)), 0.0, 1e-12);
  EXPECT_NEAR(m.evaluate(0.0), 0.0, 1e-15);
}

TEST(MapInvariants, ExpansionAndContraction) {
  for (const auto& m : {MarkovMap::doubling(), MarkovMap::bary(3), wobbly_doubling()}) {
    const double theta = m.theta();
    ASSERT_GT(theta, 0.0);
    ASSERT_LT(theta, 1.0);
    for (unsigned j = 0; j < m.branch_count(); ++j) {
      const auto iv = m.partition_interval(j);
      for (int i = 0; i < 200; ++i) {
        const double x = iv.lo + iv.width() * (i + 0.5) / 200.0;
        EXPECT_GE(std::fabs(m.branch_deriv(j, x)), 1.0 / theta - 1e-12);
      }
      for (int i = 0; i < 50; ++i) {
        const double y1 = (i + 0.25) / 50.0;
        const double y2 = (i + 0.75) / 50.0;
        const double d = circle_distance(m.inverse_branch(j, y1), m.inverse_branch(j, y2));
        EXPECT_LE(d, theta * circle_distance(y1, y2) + 1e-13);
      }
    }
  }
}

TEST(MapConstruction, RejectsBadBranches) {
  EXPECT_EQ(code_of([] { MarkovMap::bary(1); }), ErrorCode::InvalidArgument);
  BranchSpec s;
  s.lo = 0.0;
  s.hi = 1.0;
  s.eval = [](double x) { return 0.5 * x; };
  s.deriv = [](double) { return 0.5; };
  EXPECT_EQ(code_of([&] { MarkovMap::from_branches("contracting", {s}); }), ErrorCode::InvalidArgument);
  BranchSpec a;
  a.lo = 0.0;
  a.hi = 0.4;
  a.eval = [](double x) { return 3.0 * x; };
  a.deriv = [](double) { return 3.0; };
  EXPECT_EQ(code_of([&] { MarkovMap::from_branches("short", {a}); }), ErrorCode::InvalidArgument);
}

TEST(InverseBranch, DoublingExamples) {
  const auto m = MarkovMap::doubling();
  EXPECT_DOUBLE_EQ(m.inverse_branch(0, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(m.inverse_branch(1, 0.5), 0.75);
  EXPECT_DOUBLE_EQ(m.inverse_branch(0, 0.0), 0.0);
}

TEST(InverseBranch, BisectionMatchesForwardMap) {
  const auto m = wobbly_doubling();
  for (unsigned j = 0; j < 2; ++j)
    for (int i = 0; i < 100; ++i) {
      const double y = (i + kGoldenOffset) / 100.0;
      const double x = m.inverse_branch(j, y);
      EXPECT_TRUE(m.partition_interval(j).contains(x));
      EXPECT_NEAR(circle_distance(m.evaluate(x), y), 0.0, 1e-13);
    }
}

TEST(InverseBranch, OutOfImage) {
  // Doubling on the partition [0,1/4], [1/4,1/2], [1/2,1]: branch 1 only
  // covers [1/2, 1], so the map is Markov but not full-branched.
  std::vector<BranchSpec> specs(3);
  const double cuts[] = {0.0, 0.25, 0.5, 1.0};
  for (int j = 0; j < 3; ++j) {
    specs[j].lo = cuts[j];
    specs[j].hi = cuts[j + 1];
    specs[j].eval = [](double x) { return 2.0 * x; };
    specs[j].deriv = [](double) { return 2.0; };
  }
  const auto m = MarkovMap::from_branches("split", std::move(specs));
  EXPECT_FALSE(m.full_branched());
  EXPECT_EQ(code_of([&] { (void)m.inverse_branch(1, 0.2); }), ErrorCode::OutOfImage);
  EXPECT_NEAR(m.inverse_branch(1, 0.6), 0.3, 1e-14);
  EXPECT_EQ(code_of([&] { (void)cylinder_interval(m, CylinderWord{{1, 0}}); }), ErrorCode::Inadmissible);
  const auto iv = cylinder_interval(m, CylinderWord{{1, 2}});
  EXPECT_NEAR(iv.lo, 0.25, 1e-14);
  EXPECT_NEAR(iv.hi, 0.5, 1e-14);
}

TEST(Cylinders, DoublingExamples) {
  const auto m = MarkovMap::doubling();
  EXPECT_EQ(cylinder_interval(m, CylinderWord{{0, 1}}), (Interval{0.25, 0.5}));
  EXPECT_EQ(cylinder_interval(m, CylinderWord{}), (Interval{0.0, 1.0}));
  EXPECT_EQ(cylinder_interval(m, CylinderWord{{1, 1, 1}}), (Interval{0.875, 1.0}));
  EXPECT_EQ(code_of([&] { (void)cylinder_interval(m, CylinderWord{{2}}); }), ErrorCode::Inadmissible);
}

TEST(Cylinders, PartitionAtEveryRank) {
  for (const auto& m : {MarkovMap::doubling(), wobbly_doubling()}) {
    const double tol = m.linear_degree() ? 0.0 : 1e-9;
    for (std::size_t n = 0; n <= 12; ++n) {
      double pos = 0.0;
      double total = 0.0;
      std::size_t count = 0;
      for_each_word(m, n, [&](const CylinderWord& w) {
        const auto iv = cylinder_interval(m, w);
        EXPECT_NEAR(iv.lo, pos, tol);
        pos = iv.hi;
        total += iv.width();
        ++count;
      });
      EXPECT_EQ(count, std::size_t{1} << n);
      EXPECT_NEAR(pos, 1.0, tol);
      EXPECT_NEAR(total, 1.0, tol + 1e-12);
    }
  }
}

TEST(Cylinders, ItineraryIsTheContainingWord) {
  const auto m = wobbly_doubling();
  for (int i = 0; i < 200; ++i) {
    const double x = (i + kGoldenOffset) / 200.0;
    const auto w = itinerary(m, x, 10);
    EXPECT_TRUE(cylinder_interval(m, w).contains(x, 1e-12));
  }
  EXPECT_EQ(itinerary(MarkovMap::doubling(), 0.5, 3), (CylinderWord{{1, 0, 0}}));
}

TEST(Cylinders, WordIndexRoundTrip) {
  const auto m = MarkovMap::bary(3);
  const auto words = all_words(m, 4);
  ASSERT_EQ(words.size(), 81u);
  for (std::uint64_t i = 0; i < words.size(); ++i) EXPECT_EQ(word_from_index(m, 4, i), words[i]);
  EXPECT_EQ(to_string(CylinderWord{{2, 0, 1}}), "2.0.1");
}

TEST(BoundedDistortion, SpreadStaysBounded) {
  const auto lin = bounded_distortion(MarkovMap::doubling(), 10);
  EXPECT_NEAR(lin.d0, 1.0, 1e-12);
  const auto rep = bounded_distortion(wobbly_doubling(), 12);
  ASSERT_EQ(rep.ranks.size(), 12u);
  // Spreads saturate: late ranks add almost nothing.
  const double s6 = rep.ranks[5].spread();
  const double s12 = rep.ranks[11].spread();
  EXPECT_LT(rep.d0, 3.0);
  EXPECT_LE(s12, s6 * 1.05);
  for (std::size_t k = 1; k < rep.ranks.size(); ++k)
    EXPECT_LE(rep.ranks[k].spread() - rep.ranks[k - 1].spread(), 0.5 * (rep.ranks[k - 1].spread() - 1.0) + 1e-12);
}

TEST(MoranCover, DoublingExamples) {
  const auto m = MarkovMap::doubling();
  const auto c3 = moran_cover(m, 0.3);
  ASSERT_EQ(c3.cells.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(c3.cells[i].word.rank(), 2u);
    EXPECT_DOUBLE_EQ(c3.cells[i].interval.lo, 0.25 * i);
  }
  const auto c6 = moran_cover(m, 0.6);
  ASSERT_EQ(c6.cells.size(), 2u);
  EXPECT_EQ(c6.cells[0].word, (CylinderWord{{0}}));
  EXPECT_EQ(c6.cells[1].word, (CylinderWord{{1}}));
  for (const auto& map : {MarkovMap::doubling(), MarkovMap::bary(3), wobbly_doubling()})
    for (const auto& cell : moran_cover(map, 0.99).cells) EXPECT_EQ(cell.word.rank(), 1u);
  EXPECT_EQ(code_of([&] { (void)moran_cover(m, 0.0); }), ErrorCode::InvalidScale);
  EXPECT_EQ(moran_cover(m, 1.5).cells.size(), 1u);
}

TEST(MoranCover, ScaleConditionsAndTiling) {
  for (const auto& m : {MarkovMap::doubling(), MarkovMap::bary(3), wobbly_doubling()})
    for (double r : {0.2, 0.03, 0.004}) {
      const auto cover = moran_cover(m, r);
      double pos = 0.0;
      for (const auto& cell : cover.cells) {
        EXPECT_NEAR(cell.interval.lo, pos, 1e-9);
        pos = cell.interval.hi;
        const auto& w = cell.word;
        EXPECT_LE(1.0 / expansion_along_word(m, w, cell.interval.lo), r);
        CylinderWord parent{{w.symbols.begin(), w.symbols.end() - 1}};
        const double parent_lo = cylinder_interval(m, parent).lo;
        EXPECT_GT(1.0 / expansion_along_word(m, parent, parent_lo), r);
      }
      EXPECT_NEAR(pos, 1.0, 1e-9);
    }
}

TEST(Shadowing, Examples) {
  const auto m = MarkovMap::doubling();
  const double delta = 0.01;
  const std::size_t n = 8;
  EXPECT_LE(shadowing_deviation(m, delta * std::ldexp(1.0, -static_cast<int>(n)), 0.0, n, delta), delta * (1.0 + 1e-12));
  EXPECT_EQ(shadowing_deviation(m, 0.0, 0.0, n, delta), 0.0);
  EXPECT_LT(shadowing_deviation(m, 1e-6, 0.0, 10, 0.01), 0.01);
  EXPECT_EQ(code_of([&] { (void)shadowing_deviation(m, 0.3, 0.0, 4, 0.01); }), ErrorCode::OrbitEscapes);
}

TEST(Shadowing, RandomConfinedSegments) {
  const auto m = MarkovMap::doubling();
  const double delta = 0.05;
  std::size_t tested = 0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    auto rng = substream(7, "base-shadow", i);
    const std::size_t n = 1 + rng.below(25);
    // Backward chain of the branch fixing 0 from a random point of B_delta(0).
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double x = wrap01(side * delta * rng.uniform(0.01, 0.99));
    const unsigned branch = side > 0 ? 0 : 1;
    for (std::size_t k = 0; k < n; ++k) x = m.inverse_branch(branch, x);
    EXPECT_LT(shadowing_deviation(m, x, 0.0, n, delta), delta);
    ++tested;
  }
  EXPECT_EQ(tested, 500u);
}

TEST(Shadowing, PointsOffPLeaveTheNeighbourhood) {
  const auto m = MarkovMap::doubling();
  const double delta = 0.05;
  for (std::uint64_t i = 0; i < 300; ++i) {
    auto rng = substream(3, "escape", i);
    const std::size_t steps = 1 + rng.below(30);
    const double lower = 10.0 * delta * std::pow(m.theta(), static_cast<double>(steps));
    if (lower >= 0.5) continue;
    const double d = rng.uniform(lower, 0.5);
    const double x = wrap01(rng.uniform() < 0.5 ? d : -d);
    const auto t = escape_time(m, x, {0.0}, delta, steps);
    ASSERT_TRUE(t.has_value());
    EXPECT_LE(*t, steps);
  }
}

TEST(PeriodicOrbit, PeriodTwo) {
  const auto m = MarkovMap::doubling();
  const auto o = periodic_orbit(m, 1.0 / 3.0);
  ASSERT_EQ(o.size(), 2u);
  EXPECT_NEAR(o[1], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(code_of([&] { (void)periodic_orbit(m, 0.1234, 8); }), ErrorCode::InvalidArgument);
}

TEST(OrbitCursor, ExactLatticeOrbit) {
  const auto m = MarkovMap::doubling();
  // Independent modular iteration of a / q under a -> 2a mod q.
  const std::uint64_t q = kOrbitModulus;
  std::uint64_t a = lift_to_modulus(0.1);
  OrbitCursor c(m, 0.1);
  for (int i = 0; i < 2000; ++i) {
    EXPECT_EQ(c.branch(), static_cast<unsigned>((2 * static_cast<unsigned __int128>(a)) / q));
    EXPECT_NEAR(c.point(), static_cast<double>(a) / static_cast<double>(q), 1e-15);
    c.advance();
    a = static_cast<std::uint64_t>((2 * static_cast<unsigned __int128>(a)) % q);
  }
  // Doubling a double collapses to 0 after about 60 steps; the lattice orbit never does.
  EXPECT_GT(c.point(), 0.0);
}

TEST(OrbitCursor, LiftedInverseThenForward) {
  const auto m = MarkovMap::bary(3);
  const LiftedPoint p = lift_point(0.4);
  LiftedPoint q = p;
  const std::vector<unsigned> word{2, 0, 1};
  for (auto it = word.rbegin(); it != word.rend(); ++it) q = lifted_inverse(3, *it, q);
  OrbitCursor c(m, q);
  for (unsigned j : word) {
    EXPECT_EQ(c.branch(), j);
    c.advance();
  }
  EXPECT_EQ(c.lifted().numerator, p.numerator);
  EXPECT_EQ(c.lifted().level, 0u);
  EXPECT_EQ(code_of([&] { OrbitCursor bad(wobbly_doubling(), p); }), ErrorCode::InvalidArgument);
}

TEST(OrbitCursor, AgreesWithDoubleIterationEarlyOn) {
  const auto m = MarkovMap::bary(3);
  OrbitCursor c(m, 0.123456);
  double y = 0.123456;
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(circle_distance(c.point(), y), 0.0, 1e-6);
    c.advance();
    y = m.evaluate(y);
  }
}

TEST(Expression, MatchesReferenceEvaluator) {
  struct Case {
    const char* text;
    double (*ref)(double);
  };
  const Case cases[] = {
      {"sin(2*pi*x)", [](double x) { return std::sin(2.0 * kPi * x); }},
      {"(3+cos(2*pi*x))/4", [](double x) { return (3.0 + std::cos(2.0 * kPi * x)) / 4.0; }},
      {"pow(x, 3) - 2*x + 1.5e-1", [](double x) { return std::pow(x, 3.0) - 2.0 * x + 0.15; }},
      {"-x*-x", [](double x) { return x * x; }},
      {"1 - 2 - 3", [](double) { return -4.0; }},
      {"8/4/2", [](double) { return 1.0; }},
      {"cos(pi*x)*cos(pi*x) + sin(pi*x)*sin(pi*x)",
       [](double x) { return std::cos(kPi * x) * std::cos(kPi * x) + std::sin(kPi * x) * std::sin(kPi * x); }},
  };
  for (const auto& c : cases) {
    const auto e = Expression::parse(c.text);
    for (int i = 0; i < 101; ++i) {
      const double x = -1.0 + 2.0 * i / 100.0;
      EXPECT_NEAR(e(x), c.ref(x), 1e-15) << c.text << " at " << x;
    }
  }
}

TEST(Expression, ParseErrors) {
  for (const char* bad : {"", "sin(", "2*", "x y", "foo(x)", "pow(x)", "(1+2", "1..2"})
    EXPECT_EQ(code_of([&] { (void)Expression::parse(bad); }), ErrorCode::ParseError) << bad;
}

TEST(Rng, SubstreamsAreDeterministicAndDistinct) {
  auto a = substream(42, "task", 3);
  auto b = substream(42, "task", 3);
  auto c = substream(42, "task", 4);
  auto d = substream(42, "other", 3);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    firsts.insert(va);
  }
  EXPECT_NE(substream(42, "task", 3).next_u64(), c.next_u64());
  EXPECT_NE(substream(42, "task", 3).next_u64(), d.next_u64());
  EXPECT_EQ(firsts.size(), 100u);
  auto u = substream(1, "u", 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0);
    EXPECT_LT(u.below(7), 7u);
  }
}

TEST(Parallel, ResultIndependentOfThreadCount) {
  auto run = [](unsigned threads) {
    std::vector<double> out(5000);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = substream(9, "p", i).uniform(); }, threads);
    return out;
  };
  EXPECT_EQ(run(1), run(4));
  EXPECT_THROW(parallel_for(100, [](std::size_t i) { if (i == 37) throw Error(ErrorCode::Overflow, "x"); }, 4),
               Error);
}

TEST(Circle, DistanceAndWrap) {
  EXPECT_DOUBLE_EQ(wrap01(-0.25), 0.75);
  EXPECT_DOUBLE_EQ(wrap01(3.5), 0.5);
  EXPECT_LT(wrap01(-1e-18), 1.0);
  EXPECT_NEAR(circle_distance(0.05, 0.95), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(circle_distance(0.2, 0.7), 0.5);
}
