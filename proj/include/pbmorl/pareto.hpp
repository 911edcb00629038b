/**
 * @file pareto.hpp
 * @brief Teacher-driven frontier construction over finite policy sets and
 *        the exhaustive dominance oracle used to check it.
 */
#pragma once

#include <deque>
#include <limits>
#include <set>

#include "pbmorl/envs.hpp"
#include "pbmorl/teacher.hpp"

namespace pbmorl {

/// Deterministic rollout of one policy: visited steps and their true rewards.
struct PolicyDescriptor {
  std::string name;
  std::vector<Step> steps;
  std::vector<Vector> rewards;
  State final_state;
};

struct FinitePolicySet {
  std::size_t objectives = 0;
  std::vector<PolicyDescriptor> policies;

  [[nodiscard]] std::size_t size() const noexcept { return policies.size(); }
  [[nodiscard]] std::size_t longest_episode() const {
    std::size_t n = 0;
    for (const auto& p : policies) n = std::max(n, p.steps.size());
    return n;
  }

  /// One single-step policy per return vector (instance files, synthetic tests).
  static FinitePolicySet from_returns(const std::vector<ReturnVector>& returns) {
    if (returns.empty()) throw Error(Errc::EmptyBatch, "policy set needs at least one return vector");
    FinitePolicySet ps;
    ps.objectives = returns.front().size();
    for (std::size_t i = 0; i < returns.size(); ++i) {
      if (returns[i].size() != ps.objectives) throw Error(Errc::DimensionMismatch, "return vector width");
      ps.policies.push_back({"p" + std::to_string(i), {Step{State{i, {}}, 0}}, {returns[i].values}, State{i, {}}});
    }
    return ps;
  }
};

inline ReturnVector policy_return(const PolicyDescriptor& p, const DiscountConfig& cfg) {
  return discounted_return(p.rewards, p.rewards.size(), cfg);
}

inline std::vector<ReturnVector> policy_returns(const FinitePolicySet& ps, const DiscountConfig& cfg) {
  std::vector<ReturnVector> out;
  out.reserve(ps.size());
  for (const auto& p : ps.policies) out.push_back(policy_return(p, cfg));
  return out;
}

/**
 * @brief First `horizon` steps of the rollout with ground truth attached.
 *
 * Episodes shorter than `horizon` are padded with zero-reward steps at the
 * final state, which is what an absorbing terminal state would emit.
 */
inline Segment policy_segment(const PolicyDescriptor& p, std::size_t horizon) {
  Segment seg;
  for (std::size_t t = 0; t < horizon; ++t) {
    if (t < p.steps.size()) {
      seg.steps.push_back(p.steps[t]);
      seg.ground_truth.push_back(p.rewards[t]);
    } else {
      seg.steps.push_back(Step{p.final_state, 0});
      seg.ground_truth.emplace_back(p.rewards.empty() ? 0 : p.rewards.front().size(), 0.0);
    }
  }
  return seg;
}

/// a >= b everywhere and a > b somewhere.
inline bool dominates(const ReturnVector& a, const ReturnVector& b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "dominance between different widths");
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return false;
    if (a[i] > b[i]) strict = true;
  }
  return strict;
}

/// Indices not dominated by any other vector; duplicates are all kept.
inline std::vector<std::size_t> brute_force_frontier(std::span<const ReturnVector> returns) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < returns.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < returns.size() && !dominated; ++j) dominated = j != i && dominates(returns[j], returns[i]);
    if (!dominated) out.push_back(i);
  }
  return out;
}

struct FrontierOptions {
  std::size_t horizon = 0;  // 0 means full episodes
  DiscountConfig discount{};
};

namespace detail {

/// Per-step reward magnitude bound: max_t max_i |r_t,i| bounds |w.r_t| on the simplex.
inline double reward_magnitude(const FinitePolicySet& ps) {
  double r = 0.0;
  for (const auto& p : ps.policies) {
    for (const auto& v : p.rewards) {
      for (double x : v) r = std::max(r, std::abs(x));
    }
  }
  return r;
}

/**
 * @brief Resolves the segment length and checks the truncation certificate:
 *        with delta the smallest nonzero gap of full weighted returns under
 *        the weights in use, H must reach min_segment_length(delta).
 */
inline std::size_t certified_horizon(const FinitePolicySet& ps, std::span<const Weight> weights,
                                     const FrontierOptions& opts) {
  const std::size_t full = ps.longest_episode();
  if (opts.horizon == 0 || opts.horizon >= full) return std::max<std::size_t>(full, 1);
  const auto returns = policy_returns(ps, opts.discount);
  double delta = std::numeric_limits<double>::infinity();
  for (const auto& w : weights) {
    for (std::size_t i = 0; i < returns.size(); ++i) {
      for (std::size_t j = i + 1; j < returns.size(); ++j) {
        const double gap = std::abs(weighted_return(returns[i], w) - weighted_return(returns[j], w));
        if (gap > kTeacherTieTolerance) delta = std::min(delta, gap);
      }
    }
  }
  const double r_max = reward_magnitude(ps);
  if (!std::isfinite(delta) || r_max == 0.0) return opts.horizon;
  const std::size_t needed = min_segment_length(delta, opts.discount, r_max);
  if (opts.horizon < needed) {
    throw Error(Errc::InsufficientHorizon, "segment length " + std::to_string(opts.horizon) + " below the " +
                                               std::to_string(needed) + " steps needed for return gap " +
                                               std::to_string(delta));
  }
  return opts.horizon;
}

inline std::vector<Segment> segments(const FinitePolicySet& ps, std::size_t horizon) {
  std::vector<Segment> out;
  out.reserve(ps.size());
  for (const auto& p : ps.policies) out.push_back(policy_segment(p, horizon));
  return out;
}

/// True when the teacher strictly prefers a over b under every weight.
inline bool preferred_under_all(const PreferenceOracle& teacher, const Segment& a, const Segment& b,
                                std::span<const Weight> weights) {
  for (const auto& w : weights) {
    if (teacher.prefer(b, a, w) != kSecondPreferred) return false;
  }
  return true;
}

}  // namespace detail

/**
 * @brief Union over the grid of the policies no other policy strictly beats
 *        under that weight. Output indices ascending.
 */
inline std::vector<std::size_t> convex_frontier(const FinitePolicySet& ps, std::span<const Weight> grid,
                                                const PreferenceOracle& teacher, const FrontierOptions& opts) {
  if (ps.size() == 0) return {};
  const std::size_t h = detail::certified_horizon(ps, grid, opts);
  const auto segs = detail::segments(ps, h);
  std::vector<bool> member(ps.size(), false);
  for (const auto& w : grid) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (member[i]) continue;
      bool beaten = false;
      for (std::size_t j = 0; j < ps.size() && !beaten; ++j) {
        beaten = j != i && teacher.prefer(segs[i], segs[j], w) == kSecondPreferred;
      }
      if (!beaten) member[i] = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < member.size(); ++i) {
    if (member[i]) out.push_back(i);
  }
  return out;
}

/**
 * @brief Insertion construction under the unit weights: a candidate that
 *        beats an incumbent on every objective evicts it; a candidate beaten
 *        on every objective by an incumbent is dropped. Output ascending.
 */
inline std::vector<std::size_t> nonconvex_frontier(const FinitePolicySet& ps, const PreferenceOracle& teacher,
                                                   const FrontierOptions& opts) {
  if (ps.size() == 0) return {};
  const auto units = identity_weights(ps.objectives);
  const std::size_t h = detail::certified_horizon(ps, units, opts);
  const auto segs = detail::segments(ps, h);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    bool dropped = false;
    for (auto it = kept.begin(); it != kept.end();) {
      if (detail::preferred_under_all(teacher, segs[i], segs[*it], units)) {
        it = kept.erase(it);
      } else if (detail::preferred_under_all(teacher, segs[*it], segs[i], units)) {
        dropped = true;
        break;
      } else {
        ++it;
      }
    }
    if (!dropped) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Pairwise relation under the unit weights, then its maximal elements.
inline std::vector<std::size_t> pairwise_frontier(const FinitePolicySet& ps, const PreferenceOracle& teacher,
                                                  const FrontierOptions& opts) {
  if (ps.size() == 0) return {};
  const auto units = identity_weights(ps.objectives);
  const std::size_t h = detail::certified_horizon(ps, units, opts);
  const auto segs = detail::segments(ps, h);
  std::vector<bool> beaten(ps.size(), false);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    for (std::size_t j = 0; j < ps.size(); ++j) {
      if (i != j && !beaten[j] && detail::preferred_under_all(teacher, segs[i], segs[j], units)) beaten[j] = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!beaten[i]) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Enumeration for the small deterministic benchmarks
// ---------------------------------------------------------------------------

/// Plays a fixed action sequence from reset(seed) until it ends or the episode does.
inline PolicyDescriptor rollout_actions(Environment& env, std::span<const std::size_t> actions, std::string name,
                                        std::uint64_t seed = 0) {
  PolicyDescriptor p;
  p.name = std::move(name);
  State s = env.reset(seed);
  for (auto a : actions) {
    const auto out = env.step(a);
    p.steps.push_back(Step{s, a});
    p.rewards.push_back(out.reward);
    s = out.next_state;
    if (out.terminated || out.truncated) break;
  }
  p.final_state = s;
  return p;
}

struct EnumerationOptions {
  std::size_t max_count = 4096;
  std::size_t dst_wander = 3;  // extra wall-bump steps before each shortest path
};

namespace detail {

inline std::vector<std::size_t> dst_shortest_path(const DstLayout& layout, GridCell goal) {
  const auto& cfg = layout.config();
  const std::size_t n = static_cast<std::size_t>(cfg.rows * cfg.cols);
  std::vector<std::ptrdiff_t> parent(n, -1);
  std::vector<std::size_t> via(n, 0);
  std::vector<bool> seen(n, false);
  std::deque<GridCell> queue{GridCell{0, 0}};
  seen[layout.flat({0, 0})] = true;
  while (!queue.empty()) {
    const GridCell c = queue.front();
    queue.pop_front();
    if (c == goal) break;
    if (layout.kind(c) != DstLayout::Cell::Water) continue;
    for (std::size_t a = 0; a < 4; ++a) {
      const auto out = dst_step(layout, c, a);
      const GridCell next = layout.cell_of(out.next_state.index);
      const std::size_t k = layout.flat(next);
      if (seen[k]) continue;
      seen[k] = true;
      parent[k] = static_cast<std::ptrdiff_t>(layout.flat(c));
      via[k] = a;
      queue.push_back(next);
    }
  }
  std::vector<std::size_t> path;
  std::size_t k = layout.flat(goal);
  if (!seen[k]) return path;
  while (parent[k] >= 0) {
    path.push_back(via[k]);
    k = static_cast<std::size_t>(parent[k]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

/**
 * @brief Open-loop action sequences covering the deterministic benchmarks:
 *        the 2^depth root-to-leaf paths of Fruit Tree; for Deep Sea Treasure
 *        the shortest path to each treasure plus variants that first bump the
 *        left wall k times. Stochastic environments are rejected.
 */
inline FinitePolicySet enumerate_policies(const Environment& prototype, const EnumerationOptions& opts = {}) {
  auto env = prototype.clone();
  FinitePolicySet ps;
  ps.objectives = env->spec().objectives;
  if (const auto* ft = dynamic_cast<const FruitTreeEnv*>(env.get())) {
    const std::size_t depth = static_cast<std::size_t>(ft->tree().config().depth);
    const std::size_t count = std::size_t{1} << depth;
    if (count > opts.max_count) throw Error(Errc::TooLarge, std::to_string(count) + " fruit tree paths");
    for (std::size_t leaf = 0; leaf < count; ++leaf) {
      std::vector<std::size_t> actions(depth);
      for (std::size_t d = 0; d < depth; ++d) actions[d] = (leaf >> (depth - 1 - d)) & 1U;
      ps.policies.push_back(rollout_actions(*env, actions, "leaf " + std::to_string(leaf)));
    }
    return ps;
  }
  if (const auto* dst = dynamic_cast<const DeepSeaTreasureEnv*>(env.get())) {
    const auto& layout = dst->layout();
    const std::size_t count = layout.config().treasures.size() * (opts.dst_wander + 1);
    if (count > opts.max_count) throw Error(Errc::TooLarge, std::to_string(count) + " treasure paths");
    for (const auto& t : layout.config().treasures) {
      const auto path = detail::dst_shortest_path(layout, t.cell);
      if (path.empty()) continue;
      for (std::size_t k = 0; k <= opts.dst_wander; ++k) {
        std::vector<std::size_t> actions(k, static_cast<std::size_t>(GridAction::Left));
        actions.insert(actions.end(), path.begin(), path.end());
        if (actions.size() > env->spec().max_episode_length) continue;
        ps.policies.push_back(rollout_actions(*env, actions,
                                              "treasure (" + std::to_string(t.cell.row) + "," +
                                                  std::to_string(t.cell.col) + ") wander " + std::to_string(k)));
      }
    }
    return ps;
  }
  throw Error(Errc::TooLarge, env->spec().name + " is stochastic or too large to enumerate");
}

}  // namespace pbmorl
