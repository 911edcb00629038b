#include <gtest/gtest.h>

#include "pbmorl/reward_model.hpp"
#include "pbmorl/teacher.hpp"

using namespace pbmorl;

namespace {

const DiscountConfig kGamma{0.99};

/// Reward model over a dense real-valued state (State::features), ignoring the action.
RewardModel dense_model(std::size_t input, std::vector<std::size_t> hidden, Vector bound, std::uint64_t seed,
                        bool zero_output = false, double lr = 1e-2) {
  RewardModelConfig cfg;
  cfg.hidden = std::move(hidden);
  cfg.zero_output_layer = zero_output;
  cfg.learning_rate = lr;
  auto encoder = [input](const State& s, std::size_t) {
    Features f;
    f.dim = input;
    f.dense = s.features;
    return f;
  };
  return RewardModel(encoder, input, 2, cfg, std::move(bound), seed);
}

Segment dense_segment(std::vector<Vector> xs) {
  Segment s;
  for (auto& x : xs) s.steps.push_back(Step{State{0, std::move(x)}, 0});
  return s;
}

/// Linear head r = (c x, 0) with no hidden layer.
RewardModel linear_model(double c) {
  auto m = dense_model(1, {}, {}, 0);
  auto p = m.parameters();
  std::fill(p.begin(), p.end(), 0.0);
  p[0] = c;  // weight row of objective 0
  return m;
}

}  // namespace

TEST(LogisticPreference, Values) {
  EXPECT_DOUBLE_EQ(logistic_preference(0.0), 0.5);
  EXPECT_NEAR(logistic_preference(std::log(3.0)), 0.75, 1e-15);
  EXPECT_NEAR(logistic_preference(-std::log(3.0)), 0.25, 1e-15);
  EXPECT_EQ(logistic_preference(1e6), 1.0);
  EXPECT_EQ(logistic_preference(-1e6), 0.0);
}

TEST(PredictReward, ZeroOutputLayer) {
  auto m = dense_model(3, {8, 8}, {}, 5, true);
  for (double x : {-2.0, 0.0, 1.5}) EXPECT_EQ(m.predict_reward(State{0, {x, 1.0, -x}}, 0), (Vector{0.0, 0.0}));
}

TEST(PredictReward, DeterministicAndInputSensitive) {
  auto m = dense_model(2, {8}, {}, 5);
  const State a{0, {0.3, -0.1}};
  const State b{0, {-0.7, 0.9}};
  EXPECT_EQ(m.predict_reward(a, 0), m.predict_reward(a, 0));
  EXPECT_NE(m.predict_reward(a, 0), m.predict_reward(b, 0));
}

TEST(PredictReward, BoundedHeadStaysInRange) {
  auto m = dense_model(1, {4}, {0.5, 2.0}, 3);
  auto p = m.parameters();
  for (auto& x : p) x *= 50.0;
  for (double x = -5.0; x <= 5.0; x += 0.5) {
    const auto r = m.predict_reward(State{0, {x}}, 0);
    EXPECT_LE(std::abs(r[0]), 0.5);
    EXPECT_LE(std::abs(r[1]), 2.0);
  }
}

TEST(PredictPreference, Examples) {
  auto m = linear_model(1.0);
  const auto w = make_weight({1.0, 0.0});
  const auto s0 = dense_segment({{0.0}});
  const auto s1 = dense_segment({{std::log(3.0)}});
  EXPECT_DOUBLE_EQ(m.predict_preference(s0, s0, w, kGamma), 0.5);
  EXPECT_NEAR(m.predict_preference(s0, s1, w, kGamma), 0.75, 1e-15);
  EXPECT_NEAR(m.predict_preference(s1, s0, w, kGamma), 0.25, 1e-15);
}

TEST(PredictPreference, SwapSumsToOneExactly) {
  auto m = dense_model(2, {6}, {1.0, 1.0}, 9);
  Rng rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const auto& w : sample_weights(100, 2, 2)) {
    const auto a = dense_segment({{n(rng), n(rng)}, {n(rng), n(rng)}});
    const auto b = dense_segment({{n(rng), n(rng)}, {n(rng), n(rng)}});
    EXPECT_EQ(m.predict_preference(a, b, w, kGamma) + m.predict_preference(b, a, w, kGamma), 1.0);
  }
}

TEST(PredictPreference, InvariantToConstantOffsetOnEqualLengths) {
  auto m = dense_model(2, {}, {}, 4);
  auto shifted = m;
  // The head is linear, so adding c to both output biases adds c to every reward.
  auto p = shifted.parameters();
  p[p.size() - 2] += 3.0;
  p[p.size() - 1] -= 1.5;
  Rng rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const auto& w : sample_weights(50, 2, 3)) {
    const auto a = dense_segment({{n(rng), n(rng)}, {n(rng), n(rng)}, {n(rng), n(rng)}});
    const auto b = dense_segment({{n(rng), n(rng)}, {n(rng), n(rng)}, {n(rng), n(rng)}});
    EXPECT_NEAR(m.predict_preference(a, b, w, kGamma), shifted.predict_preference(a, b, w, kGamma), 1e-12);
  }
}

TEST(PreferenceLoss, Examples) {
  auto m = linear_model(1.0);
  const auto w = make_weight({1.0, 0.0});
  const auto s0 = dense_segment({{0.0}});
  const std::vector<PreferenceRecord> tie{make_preference(s0, s0, w, kIndeterminate)};
  EXPECT_NEAR(m.preference_loss(tie, kGamma), 0.693147180559945, 1e-12);

  // S1 - S0 = ln 9 gives P[second] = 0.9.
  const auto s1 = dense_segment({{std::log(9.0)}});
  const std::vector<PreferenceRecord> one{make_preference(s0, s1, w, kSecondPreferred)};
  EXPECT_NEAR(m.preference_loss(one, kGamma), 0.105360515657826, 1e-12);

  try {
    (void)m.preference_loss({}, kGamma);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyBatch);
  }
}

TEST(PreferenceLoss, FloorsVanishingProbability) {
  auto m = linear_model(1.0);
  const auto w = make_weight({1.0, 0.0});
  const std::vector<PreferenceRecord> wrong{
      make_preference(dense_segment({{0.0}}), dense_segment({{1e4}}), w, kFirstPreferred)};
  EXPECT_NEAR(m.preference_loss(wrong, kGamma), -std::log(1e-12), 1e-9);
}

TEST(PreferenceLoss, NonnegativeAndLn2AtHalf) {
  auto m = dense_model(2, {5}, {1.0, 1.0}, 12);
  Rng rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<PreferenceRecord> batch;
  const double labels[] = {kFirstPreferred, kIndeterminate, kSecondPreferred};
  for (const auto& w : sample_weights(30, 2, 5)) {
    const auto a = dense_segment({{n(rng), n(rng)}});
    const auto b = dense_segment({{n(rng), n(rng)}});
    batch.push_back(make_preference(a, b, w, labels[batch.size() % 3]));
  }
  EXPECT_GE(m.preference_loss(batch, kGamma), 0.0);

  auto zero = dense_model(2, {5}, {1.0, 1.0}, 12, true);
  EXPECT_NEAR(zero.preference_loss(batch, kGamma), std::log(2.0), 1e-12);
}

TEST(Gradient, MatchesCentralDifferences) {
  // sizes {1, 2, 2}: 2 + 2 + 4 + 2 = 10 parameters.
  auto m = dense_model(1, {2}, {1.5, 2.5}, 21);
  ASSERT_EQ(m.parameters().size(), 10u);
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<PreferenceRecord> batch;
  const double labels[] = {kFirstPreferred, kIndeterminate, kSecondPreferred};
  for (const auto& w : sample_weights(12, 2, 6)) {
    batch.push_back(make_preference(dense_segment({{n(rng)}, {n(rng)}, {n(rng)}}),
                                    dense_segment({{n(rng)}, {n(rng)}, {n(rng)}}), w, labels[batch.size() % 3]));
  }
  Vector analytic(10, 0.0);
  m.loss_and_gradient(batch, kGamma, analytic);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    auto p = m.parameters();
    const double keep = p[i];
    p[i] = keep + h;
    const double up = m.preference_loss(batch, kGamma);
    p[i] = keep - h;
    const double down = m.preference_loss(batch, kGamma);
    p[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Gradient, IndeterminateTieHasZeroGradient) {
  auto m = dense_model(1, {3}, {1.0, 1.0}, 2);
  const auto s = dense_segment({{0.4}, {-0.2}});
  const std::vector<PreferenceRecord> batch{make_preference(s, s, make_weight({0.3, 0.7}), kIndeterminate)};
  Vector grad(m.parameters().size(), 0.0);
  EXPECT_NEAR(m.loss_and_gradient(batch, kGamma, grad), std::log(2.0), 1e-12);
  for (double g : grad) EXPECT_EQ(g, 0.0);
  Vector wrong_size(3);
  EXPECT_THROW(m.loss_and_gradient(batch, kGamma, wrong_size), Error);
}

TEST(Training, SeparableDataLossDrops) {
  // Ground truth r(x) = (x0 + x1, x0 - 2 x1); 200 labeled pairs of 3-step segments.
  auto truth = [](const Vector& x) { return Vector{x[0] + x[1], x[0] - 2.0 * x[1]}; };
  Rng rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  PreferenceBuffer prefs;
  const auto weights = sample_weights(200, 2, 77);
  for (std::size_t i = 0; i < 200; ++i) {
    Segment a, b;
    for (Segment* s : {&a, &b}) {
      for (int t = 0; t < 3; ++t) {
        Vector x{n(rng), n(rng)};
        s->ground_truth.push_back(truth(x));
        s->steps.push_back(Step{State{0, std::move(x)}, 0});
      }
    }
    prefs.push(make_preference(a, b, weights[i], scripted_label(a, b, weights[i], kGamma)));
  }
  auto m = dense_model(2, {16}, {}, 31);
  Rng train_rng(4);
  const auto report = train_reward_model(m, prefs, 500, train_rng, 64, kGamma);
  EXPECT_EQ(report.steps, 500u);
  EXPECT_EQ(report.validation_records, 20u);
  EXPECT_EQ(report.train_records, 180u);
  EXPECT_LT(report.final_loss, report.initial_loss);
  EXPECT_LT(report.final_loss, 0.2);
  ASSERT_TRUE(report.validation_accuracy.has_value());
  EXPECT_GE(*report.validation_accuracy, 0.85);
}

TEST(Training, ZeroStepsLeaveParameters) {
  PreferenceBuffer prefs;
  const auto s = dense_segment({{0.1}});
  prefs.push(make_preference(s, dense_segment({{0.9}}), make_weight({0.5, 0.5}), kSecondPreferred));
  auto m = dense_model(1, {4}, {1.0, 1.0}, 6);
  const Vector before(m.parameters().begin(), m.parameters().end());
  Rng rng(1);
  const auto report = train_reward_model(m, prefs, 0, rng, 8, kGamma);
  EXPECT_EQ(Vector(m.parameters().begin(), m.parameters().end()), before);
  EXPECT_EQ(report.final_loss, report.initial_loss);

  PreferenceBuffer empty;
  EXPECT_THROW(train_reward_model(m, empty, 1, rng, 8, kGamma), Error);
}

TEST(Accuracy, CountsStrictLabelsOnly) {
  auto m = linear_model(1.0);
  const auto w = make_weight({1.0, 0.0});
  const auto lo = dense_segment({{0.0}});
  const auto hi = dense_segment({{1.0}});
  const std::vector<PreferenceRecord> records{make_preference(lo, hi, w, kSecondPreferred),
                                              make_preference(lo, hi, w, kFirstPreferred),
                                              make_preference(lo, hi, w, kIndeterminate)};
  EXPECT_DOUBLE_EQ(*m.accuracy(records, kGamma), 0.5);
  const std::vector<PreferenceRecord> ties{make_preference(lo, hi, w, kIndeterminate)};
  EXPECT_FALSE(m.accuracy(ties, kGamma).has_value());
}

TEST(Serialization, RoundTripAndArchitectureCheck) {
  auto env = make_environment("dst", {}, kGamma);
  RewardModelConfig cfg;
  cfg.hidden = {8, 8};
  auto a = make_reward_model(*env, cfg, 1);
  auto b = make_reward_model(*env, cfg, 2);
  const State s{13, {}};
  EXPECT_NE(a.predict_reward(s, 2), b.predict_reward(s, 2));
  b.load_json(a.to_json());
  EXPECT_EQ(a.predict_reward(s, 2), b.predict_reward(s, 2));

  cfg.hidden = {4};
  auto c = make_reward_model(*env, cfg, 1);
  EXPECT_THROW(c.load_json(a.to_json()), Error);
  auto broken = a.to_json();
  broken["parameters"].erase(0);
  EXPECT_THROW(b.load_json(broken), Error);
}

TEST(MakeRewardModel, UsesEnvironmentBound) {
  auto env = make_environment("dst", {}, kGamma);
  RewardModelConfig cfg;
  cfg.hidden = {8};
  const auto m = make_reward_model(*env, cfg, 3);
  EXPECT_EQ(m.output_bound(), (Vector{124.0, 1.0}));
  cfg.bounded_output = false;
  EXPECT_TRUE(make_reward_model(*env, cfg, 3).output_bound().empty());
  auto energy = make_environment("energy", {}, kGamma);
  const auto e = make_reward_model(*energy, cfg, 3);
  EXPECT_EQ(e.network().input_size(), 5u);
}

TEST(Snapshot, PublishAndRead) {
  Snapshot<int> snap;
  EXPECT_EQ(snap.get(), nullptr);
  snap.publish(4);
  auto held = snap.get();
  snap.publish(5);
  EXPECT_EQ(*held, 4);
  EXPECT_EQ(*snap.get(), 5);
}
