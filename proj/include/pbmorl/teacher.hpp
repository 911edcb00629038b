/**
 * @file teacher.hpp
 * @brief Preference providers: the scripted teacher computed from true
 *        rewards, the overseer contract used by the trainer, and
 *        diagnostics for the symmetry/consistency/transitivity assumptions.
 */
#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pbmorl/core.hpp"

namespace pbmorl {

using QueryId = std::uint64_t;

struct TeacherQuery {
  QueryId id = 0;
  Segment first;
  Segment second;
  Weight weight;
  std::chrono::steady_clock::time_point created_at{};
};

/// Synchronous preference source: label for (first, second) under w.
class PreferenceOracle {
 public:
  virtual ~PreferenceOracle() = default;
  [[nodiscard]] virtual double prefer(const Segment& first, const Segment& second, const Weight& w) const = 0;
};

inline constexpr double kTeacherTieTolerance = 1e-12;

/**
 * @brief Compares w . sum_t gamma^t r_gt(s_t, a_t) of both segments.
 *
 * Returns kSecondPreferred when the second segment scores higher.
 */
inline double scripted_label(const Segment& first, const Segment& second, const Weight& w, const DiscountConfig& cfg) {
  if (!first.has_ground_truth() || !second.has_ground_truth()) {
    throw Error(Errc::MissingGroundTruth, "scripted teacher needs per-step true rewards for both segments");
  }
  const double r0 = weighted_discounted_sum(first.ground_truth, w, cfg);
  const double r1 = weighted_discounted_sum(second.ground_truth, w, cfg);
  if (std::abs(r1 - r0) <= kTeacherTieTolerance) return kIndeterminate;
  return r1 > r0 ? kSecondPreferred : kFirstPreferred;
}

inline double scripted_preference(const TeacherQuery& q, const DiscountConfig& cfg) {
  return scripted_label(q.first, q.second, q.weight, cfg);
}

class ScriptedTeacher final : public PreferenceOracle {
 public:
  explicit ScriptedTeacher(DiscountConfig cfg) : cfg_(cfg) {}

  [[nodiscard]] double prefer(const Segment& first, const Segment& second, const Weight& w) const override {
    return scripted_label(first, second, w, cfg_);
  }

 private:
  DiscountConfig cfg_;
};

/// Adapts any callable into a PreferenceOracle (test stubs, human proxies).
class FunctionOracle final : public PreferenceOracle {
 public:
  using Fn = std::function<double(const Segment&, const Segment&, const Weight&)>;
  explicit FunctionOracle(Fn fn) : fn_(std::move(fn)) {}
  [[nodiscard]] double prefer(const Segment& first, const Segment& second, const Weight& w) const override {
    return fn_(first, second, w);
  }

 private:
  Fn fn_;
};

// ---------------------------------------------------------------------------
// Assumption diagnostics
// ---------------------------------------------------------------------------

/// Three segments compared under one weight.
struct PropertyProbe {
  Segment a;
  Segment b;
  Segment c;
  Weight weight;
};

struct PropertyViolation {
  enum class Kind { Symmetry, Consistency, Transitivity };
  Kind kind;
  std::size_t probe = 0;
  std::string detail;
};

struct PropertyReport {
  std::size_t probes = 0;
  std::vector<PropertyViolation> violations;

  [[nodiscard]] bool clean() const noexcept { return violations.empty(); }
  [[nodiscard]] std::size_t count(PropertyViolation::Kind kind) const {
    return static_cast<std::size_t>(
        std::count_if(violations.begin(), violations.end(), [&](const auto& v) { return v.kind == kind; }));
  }
};

inline std::string_view to_string(PropertyViolation::Kind kind) {
  switch (kind) {
    case PropertyViolation::Kind::Symmetry: return "symmetry";
    case PropertyViolation::Kind::Consistency: return "consistency";
    case PropertyViolation::Kind::Transitivity: return "transitivity";
  }
  return "unknown";
}

/**
 * @brief Checks the teacher against symmetry (swap flips 0<->1, fixes 0.5),
 *        consistency (re-asking repeats the label) and transitivity (no
 *        strict 3-cycle) on every probe. Diagnostic only.
 */
inline PropertyReport teacher_properties_check(const PreferenceOracle& teacher, std::span<const PropertyProbe> probes) {
  using Kind = PropertyViolation::Kind;
  PropertyReport report;
  report.probes = probes.size();
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    const std::array<std::pair<const Segment*, const Segment*>, 3> pairs{
        {{&p.a, &p.b}, {&p.b, &p.c}, {&p.c, &p.a}}};
    const std::array<const char*, 3> names{"ab", "bc", "ca"};
    std::array<double, 3> forward{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto [x, y] = pairs[k];
      const double xy = teacher.prefer(*x, *y, p.weight);
      const double yx = teacher.prefer(*y, *x, p.weight);
      const double again = teacher.prefer(*x, *y, p.weight);
      forward[k] = xy;
      if (xy + yx != 1.0) {
        report.violations.push_back({Kind::Symmetry, i,
                                     std::string(names[k]) + ": " + std::to_string(xy) + " vs swapped " +
                                         std::to_string(yx)});
      }
      if (again != xy) {
        report.violations.push_back(
            {Kind::Consistency, i, std::string(names[k]) + ": " + std::to_string(xy) + " then " + std::to_string(again)});
      }
    }
    // forward[k] == 0 means the first of the pair wins: a>b, b>c, c>a is a cycle;
    // all three == 1 is the reverse cycle.
    const bool cycle_forward = forward[0] == kFirstPreferred && forward[1] == kFirstPreferred && forward[2] == kFirstPreferred;
    const bool cycle_backward =
        forward[0] == kSecondPreferred && forward[1] == kSecondPreferred && forward[2] == kSecondPreferred;
    if (cycle_forward || cycle_backward) {
      report.violations.push_back({Kind::Transitivity, i, cycle_forward ? "a>b>c>a" : "a<b<c<a"});
    }
  }
  return report;
}

/**
 * @brief Smallest segment length H with H >= log_gamma(delta (1-gamma) / (2 r_max)).
 *
 * Pairs whose truncated weighted returns differ by at least delta keep
 * their full-horizon order at this length.
 */
inline std::size_t min_segment_length(double delta, const DiscountConfig& cfg, double r_max) {
  if (!(delta > 0.0) || !(r_max > 0.0)) throw Error(Errc::BadBound, "delta and r_max must be positive");
  const double ratio = delta * (1.0 - cfg.gamma) / (2.0 * r_max);
  if (ratio >= 1.0 - 1e-12) return 1;
  const double h = std::ceil(std::log(ratio) / std::log(cfg.gamma) - 1e-12);
  return std::max<std::size_t>(1, static_cast<std::size_t>(h));
}

// ---------------------------------------------------------------------------
// Overseer contract used by the training loop
// ---------------------------------------------------------------------------

class PreferenceBuffer;

/**
 * @brief Where a training round sends its queries.
 *
 * A synchronous overseer labels every query before returning; an
 * asynchronous one may return with none answered. Labels land in `prefs`.
 */
class Overseer {
 public:
  virtual ~Overseer() = default;
  virtual void submit(std::vector<TeacherQuery> queries, PreferenceBuffer& prefs) = 0;
  [[nodiscard]] virtual bool synchronous() const noexcept = 0;
};

}  // namespace pbmorl
