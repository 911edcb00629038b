#include <gtest/gtest.h>

#include "pbmorl/envs.hpp"
#include "pbmorl/teacher.hpp"

using namespace pbmorl;

namespace {

Segment segment_from(std::vector<Vector> rewards, std::size_t first_state = 0) {
  Segment s;
  for (std::size_t t = 0; t < rewards.size(); ++t) s.steps.push_back(Step{State{first_state + t, {}}, 0});
  s.ground_truth = std::move(rewards);
  return s;
}

Segment constant_stream(const Vector& r, std::size_t length) { return segment_from(std::vector<Vector>(length, r)); }

/// Random walk segment of length h on DST, with its true rewards.
Segment random_dst_segment(Environment& env, std::size_t h, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, 3);
  for (;;) {
    Segment seg;
    State s = env.reset(0);
    for (std::size_t t = 0; t < h; ++t) {
      const std::size_t a = pick(rng);
      const auto out = env.step(a);
      seg.steps.push_back(Step{s, a});
      seg.ground_truth.push_back(out.reward);
      s = out.next_state;
      if (out.terminated || out.truncated) break;
    }
    if (seg.steps.size() == h) return seg;
  }
}

const DiscountConfig kGamma{0.99};

}  // namespace

TEST(ScriptedPreference, IdenticalSegmentsTie) {
  const auto s = segment_from({{1.0, -1.0}, {0.0, -1.0}});
  TeacherQuery q{1, s, s, make_weight({0.5, 0.5}), {}};
  EXPECT_EQ(scripted_preference(q, kGamma), kIndeterminate);
}

TEST(ScriptedPreference, SecondWinsOnFirstObjective) {
  const auto a = segment_from({{1.0, -1.0}, {0.0, -1.0}});
  const auto b = segment_from({{0.0, -1.0}, {2.0, -1.0}});
  TeacherQuery q{1, a, b, make_weight({1.0, 0.0}), {}};
  EXPECT_EQ(scripted_preference(q, kGamma), kSecondPreferred);
  q.weight = make_weight({0.0, 1.0});
  EXPECT_EQ(scripted_preference(q, kGamma), kIndeterminate);
}

TEST(ScriptedPreference, EqualLengthDstSegmentsTieOnTime) {
  auto env = make_environment("dst", {}, kGamma);
  Rng rng(3);
  const auto w = make_weight({0.0, 1.0});
  for (int i = 0; i < 50; ++i) {
    const auto a = random_dst_segment(*env, 7, rng);
    const auto b = random_dst_segment(*env, 7, rng);
    EXPECT_EQ(scripted_label(a, b, w, kGamma), kIndeterminate);
  }
}

TEST(ScriptedPreference, NeedsGroundTruth) {
  auto a = segment_from({{1.0, 0.0}});
  auto b = a;
  b.ground_truth.clear();
  try {
    (void)scripted_label(a, b, make_weight({0.5, 0.5}), kGamma);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingGroundTruth);
  }
}

TEST(ScriptedPreference, TieToleranceIsAbsolute) {
  const auto a = segment_from({{1.0, 0.0}});
  const auto b = segment_from({{1.0 + 1e-13, 0.0}});
  const auto c = segment_from({{1.0 + 1e-10, 0.0}});
  const auto w = make_weight({1.0, 0.0});
  EXPECT_EQ(scripted_label(a, b, w, kGamma), kIndeterminate);
  EXPECT_EQ(scripted_label(a, c, w, kGamma), kSecondPreferred);
  EXPECT_EQ(scripted_label(c, a, w, kGamma), kFirstPreferred);
}

TEST(ScriptedPreference, SwapFlipsLabel) {
  Rng rng(12);
  std::uniform_int_distribution<int> small(-2, 2);
  const ScriptedTeacher teacher(kGamma);
  for (const auto& w : sample_weights(300, 2, 4)) {
    std::vector<Vector> ra, rb;
    for (int t = 0; t < 3; ++t) {
      ra.push_back({double(small(rng)), double(small(rng))});
      rb.push_back({double(small(rng)), double(small(rng))});
    }
    const auto a = segment_from(ra);
    const auto b = segment_from(rb);
    const double ab = teacher.prefer(a, b, w);
    const double ba = teacher.prefer(b, a, w);
    if (ab == kIndeterminate) {
      EXPECT_EQ(ba, kIndeterminate);
    } else {
      EXPECT_EQ(ab + ba, 1.0);
    }
  }
}

TEST(PropertiesCheck, ScriptedTeacherOnDstTriples) {
  auto env = make_environment("dst", {}, kGamma);
  Rng rng(17);
  std::vector<PropertyProbe> probes;
  const auto weights = sample_weights(200, 2, 21);
  for (std::size_t i = 0; i < 200; ++i) {
    probes.push_back({random_dst_segment(*env, 7, rng), random_dst_segment(*env, 7, rng),
                      random_dst_segment(*env, 7, rng), weights[i]});
  }
  const auto report = teacher_properties_check(ScriptedTeacher(kGamma), probes);
  EXPECT_EQ(report.probes, 200u);
  EXPECT_TRUE(report.clean());
}

TEST(PropertiesCheck, AlwaysSecondStubBreaksSymmetry) {
  const FunctionOracle stub([](const Segment&, const Segment&, const Weight&) { return kSecondPreferred; });
  const auto s = segment_from({{1.0, 0.0}});
  const std::vector<PropertyProbe> probes{{s, s, s, make_weight({0.5, 0.5})}};
  const auto report = teacher_properties_check(stub, probes);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Symmetry), 3u);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Transitivity), 1u);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Consistency), 0u);
}

TEST(PropertiesCheck, FlakyStubBreaksConsistency) {
  int calls = 0;
  const FunctionOracle flaky([&](const Segment&, const Segment&, const Weight&) {
    // Pattern per pair: forward, swapped, repeat -> 0, 1, 1.
    const int k = calls++ % 3;
    return k == 0 ? kFirstPreferred : kSecondPreferred;
  });
  const auto s = segment_from({{1.0, 0.0}});
  const std::vector<PropertyProbe> probes{{s, s, s, make_weight({0.5, 0.5})}};
  const auto report = teacher_properties_check(flaky, probes);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Consistency), 3u);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Symmetry), 0u);
  EXPECT_EQ(report.count(PropertyViolation::Kind::Transitivity), 1u);
}

TEST(PropertiesCheck, EmptyProbeList) {
  const auto report = teacher_properties_check(ScriptedTeacher(kGamma), {});
  EXPECT_EQ(report.probes, 0u);
  EXPECT_TRUE(report.clean());
}

TEST(MinSegmentLength, Examples) {
  EXPECT_EQ(min_segment_length(1.0, kGamma, 1.0), 528u);
  EXPECT_EQ(min_segment_length(2.0 * 1.0 / (1.0 - 0.99), kGamma, 1.0), 1u);
  EXPECT_EQ(min_segment_length(1e6, kGamma, 1.0), 1u);
  EXPECT_THROW(min_segment_length(0.0, kGamma, 1.0), Error);
  EXPECT_THROW(min_segment_length(-1.0, kGamma, 1.0), Error);
  EXPECT_THROW(min_segment_length(1.0, kGamma, 0.0), Error);
}

TEST(MinSegmentLength, TruncationKeepsOrderOfConstantStreams) {
  // Streams with per-step weighted rewards x and y differ in full return by
  // |x - y| / (1 - gamma); prefixes of the certified length keep the order.
  const DiscountConfig cfg{0.9};
  const auto w = make_weight({0.5, 0.5});
  const std::size_t full = 2000;
  Rng rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector ra{u(rng), u(rng)};
    const Vector rb{u(rng), u(rng)};
    const double x = dot(ra, w.values());
    const double y = dot(rb, w.values());
    const double gap = std::abs(x - y) / (1.0 - cfg.gamma);
    if (gap < 1e-6) continue;
    const std::size_t h = min_segment_length(gap, cfg, 1.0);
    const double truncated = scripted_label(constant_stream(ra, h), constant_stream(rb, h), w, cfg);
    const double whole = scripted_label(constant_stream(ra, full), constant_stream(rb, full), w, cfg);
    EXPECT_EQ(truncated, whole);
  }
}
