#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "circle.hpp"
#include "error.hpp"
#include "markov_map.hpp"

namespace quasigraph {

struct CylinderWord {
  std::vector<unsigned> symbols;

  [[nodiscard]] std::size_t rank() const noexcept { return symbols.size(); }
  friend bool operator==(const CylinderWord&, const CylinderWord&) = default;
  friend auto operator<=>(const CylinderWord&, const CylinderWord&) = default;
};

inline std::string to_string(const CylinderWord& w) {
  std::string s;
  for (std::size_t i = 0; i < w.symbols.size(); ++i) {
    if (i) s += '.';
    s += std::to_string(w.symbols[i]);
  }
  return s;
}

inline void check_admissible(const MarkovMap& map, const CylinderWord& w) {
  const auto b = map.branch_count();
  for (std::size_t i = 0; i < w.symbols.size(); ++i) {
    if (w.symbols[i] >= b) throw Error(ErrorCode::Inadmissible, "symbol out of range in word " + to_string(w));
    if (i + 1 < w.symbols.size() && !map.admissible(w.symbols[i], w.symbols[i + 1]))
      throw Error(ErrorCode::Inadmissible, "word " + to_string(w) + " violates the Markov adjacency");
  }
}

[[nodiscard]] inline bool is_admissible(const MarkovMap& map, const CylinderWord& w) {
  try {
    check_admissible(map, w);
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline Interval cylinder_interval(const MarkovMap& map, const CylinderWord& w) {
  check_admissible(map, w);
  if (w.symbols.empty()) return {0.0, 1.0};
  Interval iv = map.partition_interval(w.symbols.back());
  for (std::size_t i = w.symbols.size() - 1; i-- > 0;) iv = map.inverse_interval(w.symbols[i], iv);
  return iv;
}

/// Forward orbit of a point of the cylinder along its own word: returns
/// T^0 x, ..., T^{n-1} x with each point taken in the closed branch w_i, so
/// that cylinder endpoints are followed exactly.
inline std::vector<double> orbit_along_word(const MarkovMap& map, const CylinderWord& w, double x) {
  std::vector<double> pts;
  pts.reserve(w.rank());
  double y = x;
  for (std::size_t i = 0; i < w.rank(); ++i) {
    y = map.representative_in(w.symbols[i], y);
    pts.push_back(y);
    y = map.branch_eval(w.symbols[i], y);
  }
  return pts;
}

/// |(T^n)'(x)| along the word, with x in the cylinder of the word.
inline double expansion_along_word(const MarkovMap& map, const CylinderWord& w, double x) {
  double prod = 1.0;
  const auto pts = orbit_along_word(map, w, x);
  for (std::size_t i = 0; i < pts.size(); ++i) prod *= std::fabs(map.branch_deriv(w.symbols[i], pts[i]));
  return prod;
}

/// Visits admissible words of rank n in lexicographic order.
template <class F>
void for_each_word(const MarkovMap& map, std::size_t n, F&& f) {
  CylinderWord w;
  w.symbols.resize(n);
  if (n == 0) {
    f(static_cast<const CylinderWord&>(w));
    return;
  }
  const auto b = static_cast<unsigned>(map.branch_count());
  auto rec = [&](auto&& self, std::size_t depth) -> void {
    if (depth == n) {
      f(static_cast<const CylinderWord&>(w));
      return;
    }
    for (unsigned j = 0; j < b; ++j) {
      if (depth > 0 && !map.admissible(w.symbols[depth - 1], j)) continue;
      w.symbols[depth] = j;
      self(self, depth + 1);
    }
  };
  rec(rec, 0);
}

inline std::vector<CylinderWord> all_words(const MarkovMap& map, std::size_t n) {
  std::vector<CylinderWord> out;
  for_each_word(map, n, [&](const CylinderWord& w) { out.push_back(w); });
  return out;
}

/// Lexicographic index -> word, for full-branched maps.
inline CylinderWord word_from_index(const MarkovMap& map, std::size_t n, std::uint64_t index) {
  if (!map.full_branched()) throw Error(ErrorCode::InvalidArgument, "word_from_index needs a full-branched map");
  const auto b = map.branch_count();
  CylinderWord w;
  w.symbols.resize(n);
  for (std::size_t i = n; i-- > 0;) {
    w.symbols[i] = static_cast<unsigned>(index % b);
    index /= b;
  }
  return w;
}

/// The rank-n word whose cylinder contains x (left-closed convention).
inline CylinderWord itinerary(const MarkovMap& map, double x, std::size_t n) {
  CylinderWord w;
  OrbitCursor c(map, x);
  for (std::size_t i = 0; i < n; ++i) {
    w.symbols.push_back(c.branch());
    c.advance();
  }
  return w;
}

struct MoranCell {
  CylinderWord word;
  Interval interval;
  /// |(T^n)'| at the left endpoint.
  double expansion = 1.0;
};

struct MoranCover {
  double scale = 0.0;
  std::vector<MoranCell> cells;
};

/// Minimal-rank rule: along each word path stop at the first rank n with
/// (|T'|^n(x_ref))^{-1} <= r, x_ref the left endpoint of the cylinder.
inline MoranCover moran_cover(const MarkovMap& map, double r, std::size_t max_rank = 60) {
  if (!(r > 0.0)) throw Error(ErrorCode::InvalidScale, "Moran cover scale must be positive");
  MoranCover cover;
  cover.scale = r;
  if (r >= 1.0) {
    cover.cells.push_back({CylinderWord{}, {0.0, 1.0}, 1.0});
    return cover;
  }
  const auto b = static_cast<unsigned>(map.branch_count());
  CylinderWord w;
  auto rec = [&](auto&& self) -> void {
    const Interval iv = cylinder_interval(map, w);
    const double e = expansion_along_word(map, w, iv.lo);
    if (1.0 / e <= r || w.rank() >= max_rank) {
      cover.cells.push_back({w, iv, e});
      return;
    }
    for (unsigned j = 0; j < b; ++j) {
      if (!w.symbols.empty() && !map.admissible(w.symbols.back(), j)) continue;
      w.symbols.push_back(j);
      self(self);
      w.symbols.pop_back();
    }
  };
  rec(rec);
  std::sort(cover.cells.begin(), cover.cells.end(),
            [](const MoranCell& a, const MoranCell& c) { return a.interval.lo < c.interval.lo; });
  return cover;
}

/// Orbit of a periodic point, iterated until it returns.
inline std::vector<double> periodic_orbit(const MarkovMap& map, double p, std::size_t max_period = 64,
                                          double tol = 1e-12) {
  std::vector<double> orbit{wrap01(p)};
  double y = map.evaluate(p);
  while (circle_distance(y, orbit.front()) > tol) {
    if (orbit.size() >= max_period) throw Error(ErrorCode::InvalidArgument, "point is not periodic");
    orbit.push_back(y);
    y = map.evaluate(y);
  }
  return orbit;
}

inline double distance_to_set(double x, const std::vector<double>& pts) {
  double d = INFINITY;
  for (double p : pts) d = std::min(d, circle_distance(x, p));
  return d;
}

/// max_j d(T^j x, T^j p) / theta^{n-j} for an orbit segment confined to the
/// delta-neighbourhood of the orbit of p.
inline double shadowing_deviation(const MarkovMap& map, double x, double p, std::size_t n, double delta) {
  const auto orbit = periodic_orbit(map, p);
  const double theta = map.theta();
  OrbitCursor c(map, x);
  double worst = 0.0;
  for (std::size_t j = 0; j <= n; ++j) {
    const double pj = orbit[j % orbit.size()];
    if (distance_to_set(c.point(), orbit) > delta * (1.0 + 1e-12))
      throw Error(ErrorCode::OrbitEscapes, "orbit leaves the neighbourhood at step " + std::to_string(j));
    const double ratio = circle_distance(c.point(), pj) / std::pow(theta, static_cast<double>(n - j));
    worst = std::max(worst, ratio);
    if (j < n) c.advance();
  }
  return worst;
}

/// First step at which the orbit of x is farther than delta from pts.
inline std::optional<std::size_t> escape_time(const MarkovMap& map, double x, const std::vector<double>& pts,
                                              double delta, std::size_t max_steps) {
  OrbitCursor c(map, x);
  for (std::size_t j = 0; j <= max_steps; ++j) {
    if (distance_to_set(c.point(), pts) > delta) return j;
    c.advance();
  }
  return std::nullopt;
}

struct DistortionRank {
  std::size_t rank = 0;
  double min_ratio = 1.0;
  double max_ratio = 1.0;
  [[nodiscard]] double spread() const { return std::max(max_ratio, 1.0 / min_ratio); }
};

struct DistortionReport {
  std::vector<DistortionRank> ranks;
  double d0 = 1.0;
};

/// diam(C_n) * |T'|^n(x) over all cylinders of rank <= max_rank and a few
/// sample points each.
inline DistortionReport bounded_distortion(const MarkovMap& map, std::size_t max_rank, int samples = 5) {
  DistortionReport rep;
  for (std::size_t n = 1; n <= max_rank; ++n) {
    DistortionRank dr{n, INFINITY, 0.0};
    for_each_word(map, n, [&](const CylinderWord& w) {
      const Interval iv = cylinder_interval(map, w);
      for (int s = 0; s < samples; ++s) {
        const double x = iv.lo + iv.width() * (s + 0.5) / samples;
        const double v = iv.width() * expansion_along_word(map, w, x);
        dr.min_ratio = std::min(dr.min_ratio, v);
        dr.max_ratio = std::max(dr.max_ratio, v);
      }
    });
    rep.d0 = std::max(rep.d0, dr.spread());
    rep.ranks.push_back(dr);
  }
  return rep;
}

}  // namespace quasigraph
