/**
 * @file metrics.hpp
 * @brief Expected utility, hypervolume, and greedy-policy evaluation.
 */
#pragma once

#include <functional>

#include "pbmorl/eql.hpp"
#include "pbmorl/pareto.hpp"

namespace pbmorl {

/// Mean of evaluate(w) over n uniform simplex draws.
inline double expected_utility(const std::function<double(const Weight&)>& evaluate, std::size_t n, std::size_t m,
                               std::uint64_t seed) {
  if (n == 0) throw Error(Errc::ConfigError, "expected utility needs at least one weight");
  const auto weights = sample_weights(n, m, seed);
  double total = 0.0;
  for (const auto& w : weights) total += evaluate(w);
  return total / static_cast<double>(n);
}

struct FrontierEstimate {
  std::vector<ReturnVector> points;
  Vector reference;
};

struct HypervolumeOptions {
  bool clip = true;  // raise points below the reference to it; otherwise reject them
};

namespace detail {

inline double hv2(std::vector<Vector> pts, const Vector& ref) {
  std::sort(pts.begin(), pts.end(), [](const Vector& a, const Vector& b) { return a[0] > b[0]; });
  double volume = 0.0;
  double top = ref[1];
  for (const auto& p : pts) {
    if (p[1] > top) {
      volume += (p[0] - ref[0]) * (p[1] - top);
      top = p[1];
    }
  }
  return volume;
}

inline std::vector<Vector> nondominated(std::vector<Vector> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<Vector> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
      if (j == i) continue;
      bool geq = true;
      for (std::size_t k = 0; k < pts[i].size() && geq; ++k) geq = pts[j][k] >= pts[i][k];
      dominated = geq;  // points are unique, so >= everywhere means dominance
    }
    if (!dominated) out.push_back(pts[i]);
  }
  return out;
}

/// Slices along the last coordinate and recurses on the projection.
inline double hv_slice(std::vector<Vector> pts, const Vector& ref) {
  const std::size_t d = ref.size();
  if (pts.empty()) return 0.0;
  if (d == 1) {
    double best = ref[0];
    for (const auto& p : pts) best = std::max(best, p[0]);
    return best - ref[0];
  }
  if (d == 2) return hv2(std::move(pts), ref);
  pts = nondominated(std::move(pts));
  std::sort(pts.begin(), pts.end(), [d](const Vector& a, const Vector& b) { return a[d - 1] > b[d - 1]; });
  const Vector sub_ref(ref.begin(), ref.end() - 1);
  double volume = 0.0;
  std::vector<Vector> active;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    active.emplace_back(pts[i].begin(), pts[i].end() - 1);
    const double lower = i + 1 < pts.size() ? pts[i + 1][d - 1] : ref[d - 1];
    const double depth = pts[i][d - 1] - lower;
    if (depth > 0.0) volume += depth * hv_slice(active, sub_ref);
  }
  return volume;
}

}  // namespace detail

/// Union volume of the boxes [reference, p] over the frontier points.
inline double hypervolume(const FrontierEstimate& f, const HypervolumeOptions& opts = {}) {
  const std::size_t m = f.reference.size();
  if (m < 1) throw Error(Errc::BadReference, "empty reference point");
  std::vector<Vector> pts;
  for (const auto& p : f.points) {
    if (p.size() != m) throw Error(Errc::DimensionMismatch, "frontier point vs reference width");
    Vector q = p.values;
    bool inside = true;
    for (std::size_t i = 0; i < m; ++i) {
      if (q[i] < f.reference[i]) {
        if (!opts.clip) throw Error(Errc::BadReference, "point below the reference in objective " + std::to_string(i));
        q[i] = f.reference[i];
      }
      inside = inside && q[i] > f.reference[i];
    }
    if (inside) pts.push_back(std::move(q));
  }
  return detail::hv_slice(std::move(pts), f.reference);
}

inline double hypervolume(std::span<const ReturnVector> points, const Vector& reference,
                          const HypervolumeOptions& opts = {}) {
  return hypervolume(FrontierEstimate{{points.begin(), points.end()}, reference}, opts);
}

// ---------------------------------------------------------------------------
// Greedy evaluation
// ---------------------------------------------------------------------------

/// Discounted true return of one greedy episode from reset(seed).
inline ReturnVector greedy_rollout(const QFunction& q, Environment& env, const Weight& w, const DiscountConfig& cfg,
                                   std::uint64_t seed) {
  State s = env.reset(seed);
  ReturnVector total{Vector(env.spec().objectives, 0.0)};
  double discount = 1.0;
  for (;;) {
    const auto out = env.step(greedy_action(q, s, w));
    for (std::size_t i = 0; i < out.reward.size(); ++i) total.values[i] += discount * out.reward[i];
    discount *= cfg.gamma;
    s = out.next_state;
    if (out.terminated || out.truncated) break;
  }
  return total;
}

/// Mean greedy return over `episodes` seeded episodes.
inline ReturnVector evaluate_policy(const QFunction& q, Environment& env, const Weight& w, const DiscountConfig& cfg,
                                    std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw Error(Errc::ConfigError, "evaluation needs at least one episode");
  ReturnVector mean{Vector(env.spec().objectives, 0.0)};
  for (std::size_t e = 0; e < episodes; ++e) {
    const auto r = greedy_rollout(q, env, w, cfg, mix_seed(seed, e));
    for (std::size_t i = 0; i < r.size(); ++i) mean.values[i] += r[i] / static_cast<double>(episodes);
  }
  return mean;
}

/// Non-dominated, de-duplicated greedy returns over the grid.
inline FrontierEstimate frontier_from_policy(const QFunction& q, const Environment& prototype,
                                             std::span<const Weight> grid, const DiscountConfig& cfg,
                                             std::size_t episodes, std::uint64_t seed,
                                             std::vector<ReturnVector>* per_weight = nullptr) {
  auto env = prototype.clone();
  std::vector<ReturnVector> returns;
  returns.reserve(grid.size());
  for (const auto& w : grid) returns.push_back(evaluate_policy(q, *env, w, cfg, episodes, seed));
  if (per_weight) *per_weight = returns;
  FrontierEstimate f;
  f.reference = prototype.spec().hv_reference;
  for (auto i : brute_force_frontier(returns)) {
    if (std::find(f.points.begin(), f.points.end(), returns[i]) == f.points.end()) f.points.push_back(returns[i]);
  }
  return f;
}

}  // namespace pbmorl
