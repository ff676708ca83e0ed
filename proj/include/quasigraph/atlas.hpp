#pragma once

#include <algorithm>
#include <cmath>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "cylinders.hpp"
#include "invariant_graph.hpp"
#include "markov_map.hpp"
#include "skew_family.hpp"

namespace quasigraph {

/// Supplies the fibre value used by the D h potential: u(y) off R_P, the
/// upper endpoint of U_y on R_P.
class GraphProvider {
 public:
  virtual ~GraphProvider() = default;
  [[nodiscard]] virtual double fibre_anchor(double y) const = 0;
};

struct AtlasSpec {
  GridSpec grid{1u << 16};
  /// Certificates of length <= cell_depth get a pulled-back cell.
  std::size_t cell_depth = 12;
  /// Iterations used to recognise a point of R_P in fibre_anchor.
  std::size_t detect_depth = 30;
  PullbackSettings pullback{};
  LadderSpec ladder{};
};

struct EnvelopeResult {
  Interval envelope{NAN, NAN};
  std::size_t samples = 0;
  std::size_t cells = 0;
  [[nodiscard]] bool empty() const noexcept { return samples + cells == 0; }
  [[nodiscard]] double width() const noexcept { return empty() ? 0.0 : envelope.width(); }
};

/// Samples of u on a global grid together with the quasi-graph cells at all
/// short certificates. Envelopes are built from these global point sets, so
/// a child cylinder's envelope always nests in its parent's.
class QuasiGraphAtlas : public GraphProvider {
 public:
  QuasiGraphAtlas(SkewFamily fam, MarkovMap map, AtlasSpec spec)
      : fam_(std::move(fam)), map_(std::move(map)), spec_(spec) {
    PullbackSettings s = spec_.pullback;
    s.compute_residual = false;
    const auto raw = sample_graph(fam_, map_, spec_.grid, s);
    xs_.reserve(raw.size());
    us_.reserve(raw.size());
    for (const auto& g : raw) {
      if (!g.converged) {
        ++failed_;
        continue;
      }
      xs_.push_back(g.x);
      us_.push_back(g.u);
    }
    build_cells();
  }

  [[nodiscard]] const SkewFamily& family() const noexcept { return fam_; }
  [[nodiscard]] const MarkovMap& map() const noexcept { return map_; }
  [[nodiscard]] const AtlasSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::vector<double>& sample_x() const noexcept { return xs_; }
  [[nodiscard]] const std::vector<double>& sample_u() const noexcept { return us_; }
  [[nodiscard]] std::size_t failed_samples() const noexcept { return failed_; }
  [[nodiscard]] const std::vector<QuasiGraphCell>& cells() const noexcept { return cells_; }
  [[nodiscard]] const std::vector<GapEstimate>& neutral_estimates() const noexcept { return neutral_; }

  [[nodiscard]] EnvelopeResult envelope(Interval iv) const {
    EnvelopeResult r;
    double lo = INFINITY;
    double hi = -INFINITY;
    const auto b = std::lower_bound(xs_.begin(), xs_.end(), iv.lo);
    const auto e = std::upper_bound(xs_.begin(), xs_.end(), iv.hi);
    for (auto it = b; it != e; ++it) {
      const double u = us_[static_cast<std::size_t>(it - xs_.begin())];
      lo = std::min(lo, u);
      hi = std::max(hi, u);
      ++r.samples;
    }
    const auto cb = std::lower_bound(cells_.begin(), cells_.end(), iv.lo,
                                     [](const QuasiGraphCell& c, double x) { return c.x < x; });
    for (auto it = cb; it != cells_.end() && it->x <= iv.hi; ++it) {
      lo = std::min(lo, it->lo);
      hi = std::max(hi, it->hi);
      ++r.cells;
    }
    // A cylinder closed at 1 also contains the circle point 0.
    if (iv.hi >= 1.0 && iv.lo > 0.0) {
      for (auto it = cells_.begin(); it != cells_.end() && it->x <= iv.hi - 1.0; ++it) {
        lo = std::min(lo, it->lo);
        hi = std::max(hi, it->hi);
        ++r.cells;
      }
    }
    if (!r.empty()) r.envelope = {lo, hi};
    return r;
  }

  [[nodiscard]] EnvelopeResult envelope(const CylinderWord& w) const { return envelope(cylinder_interval(map_, w)); }

  [[nodiscard]] double fibre_anchor(double y) const override {
    y = wrap01(y);
    if (auto cert = certify(fam_, map_, y, spec_.detect_depth)) {
      const auto& base = neutral_cell(cert->orbit, cert->position);
      return gap_pullback(fam_, map_, base, cert->word).hi;
    }
    {
      std::shared_lock lock(memo_mutex_);
      if (auto it = memo_.find(y); it != memo_.end()) return it->second;
    }
    const double u = pullback_value(fam_, map_, y, spec_.pullback);
    std::unique_lock lock(memo_mutex_);
    memo_.emplace(y, u);
    return u;
  }

  [[nodiscard]] const QuasiGraphCell& neutral_cell(std::size_t orbit, std::size_t position) const {
    for (std::size_t i = 0; i < neutral_.size(); ++i)
      if (neutral_[i].cell.certificate.orbit == orbit && neutral_[i].cell.certificate.position == position)
        return neutral_[i].cell;
    throw Error(ErrorCode::BadCertificate, "no neutral cell for the certificate");
  }

 private:
  void build_cells() {
    for (std::size_t r = 0; r < fam_.neutral.orbits.size(); ++r)
      for (std::size_t i = 0; i < fam_.neutral.orbits[r].size(); ++i) {
        auto est = gap_at(fam_, map_, fam_.neutral.orbits[r][i], spec_.pullback, spec_.ladder);
        est.cell.certificate = Certificate{r, i, {}};
        neutral_.push_back(std::move(est));
      }
    std::vector<QuasiGraphCell> all;
    std::vector<QuasiGraphCell> frontier;
    for (const auto& est : neutral_) frontier.push_back(est.cell);
    all = frontier;
    const auto b = static_cast<unsigned>(map_.branch_count());
    for (std::size_t depth = 1; depth <= spec_.cell_depth; ++depth) {
      std::vector<QuasiGraphCell> next;
      next.reserve(frontier.size() * b);
      for (const auto& c : frontier) {
        for (unsigned j = 0; j < b; ++j) {
          if (!c.certificate.word.symbols.empty() && !map_.admissible(j, c.certificate.word.symbols.front()))
            continue;
          double x;
          try {
            x = map_.inverse_branch(j, c.x);
          } catch (const Error&) {
            continue;
          }
          QuasiGraphCell child;
          child.x = x;
          child.certificate = c.certificate;
          child.certificate.word.symbols.insert(child.certificate.word.symbols.begin(), j);
          const double lo = fam_.h(x, c.lo);
          const double hi = fam_.h(x, c.hi);
          child.lo = std::min(lo, hi);
          child.hi = std::max(lo, hi);
          next.push_back(std::move(child));
        }
      }
      all.insert(all.end(), next.begin(), next.end());
      frontier = std::move(next);
    }
    std::stable_sort(all.begin(), all.end(), [](const QuasiGraphCell& a, const QuasiGraphCell& c) {
      if (a.x != c.x) return a.x < c.x;
      return a.certificate.word.rank() < c.certificate.word.rank();
    });
    for (auto& c : all) {
      if (!cells_.empty() && std::fabs(cells_.back().x - c.x) <= 1e-13) continue;
      cells_.push_back(std::move(c));
    }
  }

  SkewFamily fam_;
  MarkovMap map_;
  AtlasSpec spec_;
  std::vector<double> xs_;
  std::vector<double> us_;
  std::size_t failed_ = 0;
  std::vector<GapEstimate> neutral_;
  std::vector<QuasiGraphCell> cells_;
  mutable std::shared_mutex memo_mutex_;
  mutable std::unordered_map<double, double> memo_;
};

inline EnvelopeResult quasigraph_envelope(const QuasiGraphAtlas& atlas, const CylinderWord& word) {
  return atlas.envelope(word);
}

}  // namespace quasigraph
