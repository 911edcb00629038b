#include <gtest/gtest.h>

#include "pbmorl/core.hpp"

using namespace pbmorl;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no pbmorl::Error thrown";
  return Errc::ConfigError;
}

}  // namespace

TEST(MakeWeight, AcceptsSimplexPoints) {
  EXPECT_EQ(make_weight({0.5, 0.5}).values(), (Vector{0.5, 0.5}));
  EXPECT_EQ(make_weight({1.0, 0.0, 0.0}).values(), (Vector{1.0, 0.0, 0.0}));
}

TEST(MakeWeight, RejectsInvalidInput) {
  EXPECT_EQ(code_of([] { make_weight({0.7, 0.7}); }), Errc::NotNormalized);
  EXPECT_EQ(code_of([] { make_weight({1.2, -0.2}); }), Errc::NegativeComponent);
  EXPECT_EQ(code_of([] { make_weight({1.0}); }), Errc::BadDimension);
  EXPECT_EQ(code_of([] { make_weight({std::nan(""), 1.0}); }), Errc::NegativeComponent);
}

TEST(MakeWeight, ToleratesRounding) {
  EXPECT_NO_THROW(make_weight({0.1, 0.2, 0.7 + 5e-10}));
  EXPECT_EQ(code_of([] { make_weight({0.1, 0.2, 0.7 + 1e-8}); }), Errc::NotNormalized);
}

TEST(SampleWeights, Deterministic) {
  EXPECT_EQ(sample_weights(3, 2, 7), sample_weights(3, 2, 7));
  EXPECT_NE(sample_weights(3, 2, 7), sample_weights(3, 2, 8));
}

TEST(SampleWeights, UniformMean) {
  const auto ws = sample_weights(10000, 2, 1);
  double mean = 0.0;
  for (const auto& w : ws) mean += w[0];
  mean /= 10000.0;
  EXPECT_GE(mean, 0.49);
  EXPECT_LE(mean, 0.51);
}

TEST(SampleWeights, ThreeObjectiveMarginals) {
  // Flat Dirichlet(1,1,1): each component has mean 1/3 and P(w_k > 1/2) = 1/4.
  const auto ws = sample_weights(60000, 3, 11);
  for (std::size_t k = 0; k < 3; ++k) {
    double mean = 0.0;
    double above = 0.0;
    for (const auto& w : ws) {
      mean += w[k];
      above += w[k] > 0.5 ? 1.0 : 0.0;
    }
    EXPECT_NEAR(mean / 60000.0, 1.0 / 3.0, 0.005);
    EXPECT_NEAR(above / 60000.0, 0.25, 0.006);
  }
}

TEST(SampleWeights, RejectsSingleObjective) {
  EXPECT_EQ(code_of([] { sample_weights(1, 1, 0); }), Errc::BadDimension);
}

TEST(WeightGrid, Sizes) {
  EXPECT_EQ(weight_grid(2, 100).size(), 101u);
  EXPECT_EQ(weight_grid(3, 10).size(), 66u);
  EXPECT_EQ(weight_grid(6, 5).size(), 252u);
  EXPECT_EQ(evaluation_grid(2).size(), 101u);
  EXPECT_EQ(evaluation_grid(3).size(), 66u);
  EXPECT_EQ(evaluation_grid(6).size(), 252u);
}

TEST(WeightGrid, OrderAndEndpoints) {
  const auto g = weight_grid(2, 10);
  EXPECT_EQ(g.front().values(), (Vector{0.0, 1.0}));
  EXPECT_EQ(g.back().values(), (Vector{1.0, 0.0}));
  EXPECT_DOUBLE_EQ(g[3][0], 0.3);
}

TEST(WeightLattice, NearestSnapsToGrid) {
  WeightLattice lat(2, 10);
  EXPECT_EQ(lat.size(), 11u);
  const auto k = lat.nearest(make_weight({0.34, 0.66}));
  EXPECT_DOUBLE_EQ(lat.point(k)[0], 0.3);
  for (std::size_t i = 0; i < lat.size(); ++i) EXPECT_EQ(lat.nearest(lat.point(i)), i);

  WeightLattice lat3(3, 10);
  const auto j = lat3.nearest(make_weight({0.333, 0.333, 0.334}));
  double sum = 0.0;
  for (double x : lat3.point(j)) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_EQ(lat3.nearest(lat3.point(17)), 17u);
}

TEST(DiscountedReturn, SingleStep) {
  const std::vector<Vector> r{{3.0, -1.0}};
  EXPECT_EQ(discounted_return(r, 1, DiscountConfig{0.99}).values, (Vector{3.0, -1.0}));
}

TEST(DiscountedReturn, TwoSteps) {
  const std::vector<Vector> r{{1.0, 0.0}, {1.0, 0.0}};
  EXPECT_EQ(discounted_return(r, 2, DiscountConfig{0.5}).values, (Vector{1.5, 0.0}));
}

TEST(DiscountedReturn, EmptySegmentRejected) {
  const std::vector<Vector> none;
  EXPECT_EQ(code_of([&] { discounted_return(none, 0, DiscountConfig{}); }), Errc::LengthMismatch);
  const std::vector<Vector> one{{1.0, 0.0}};
  EXPECT_EQ(code_of([&] { discounted_return(one, 2, DiscountConfig{}); }), Errc::LengthMismatch);
}

TEST(DiscountedReturn, ZeroRewardsGiveZero) {
  const std::vector<Vector> r(17, Vector{0.0, 0.0, 0.0});
  EXPECT_EQ(discounted_return(r, 17, DiscountConfig{0.99}).values, (Vector{0.0, 0.0, 0.0}));
}

TEST(DiscountedReturn, TailBoundOnConstantStream) {
  // Constant per-step reward c: truncating at H loses exactly c gamma^H (1 - gamma^(L-H)) / (1 - gamma).
  const DiscountConfig cfg{0.9};
  const double c = 0.75;
  const std::size_t full = 400;
  const std::vector<Vector> r(full, Vector{c, -c});
  const auto whole = discounted_return(r, full, cfg);
  for (std::size_t h : {1u, 5u, 20u, 60u}) {
    const auto part = discounted_return(std::span<const Vector>(r).first(h), h, cfg);
    const double gap = whole[0] - part[0];
    const double closed = c * std::pow(0.9, h) * (1.0 - std::pow(0.9, full - h)) / (1.0 - 0.9);
    EXPECT_NEAR(gap, closed, 1e-9);
    EXPECT_LE(std::abs(gap), std::pow(0.9, h) * c / (1.0 - 0.9) + 1e-12);
  }
}

TEST(WeightedReturn, Examples) {
  EXPECT_DOUBLE_EQ(weighted_return(ReturnVector{{2.0, 4.0}}, make_weight({0.5, 0.5})), 3.0);
  EXPECT_DOUBLE_EQ(weighted_return(ReturnVector{{5.0, -1.0}}, make_weight({1.0, 0.0})), 5.0);
  EXPECT_EQ(code_of([] { (void)weighted_return(ReturnVector{{1.0, 2.0, 3.0}}, make_weight({0.5, 0.5})); }),
            Errc::DimensionMismatch);
}

TEST(WeightedReturn, Linearity) {
  Rng rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  for (const auto& w : sample_weights(50, 3, 9)) {
    ReturnVector a{{n(rng), n(rng), n(rng)}};
    ReturnVector b{{n(rng), n(rng), n(rng)}};
    EXPECT_NEAR(weighted_return(a + b, w), weighted_return(a, w) + weighted_return(b, w), 1e-12);
  }
}

TEST(WeightedDiscountedSum, MatchesVectorForm) {
  const std::vector<Vector> r{{1.0, 2.0}, {-3.0, 0.5}, {4.0, 4.0}};
  const DiscountConfig cfg{0.8};
  const auto w = make_weight({0.25, 0.75});
  EXPECT_NEAR(weighted_discounted_sum(r, w, cfg), weighted_return(discounted_return(r, 3, cfg), w), 1e-12);
}

TEST(Preference, LabelValidation) {
  Segment s;
  EXPECT_EQ(code_of([&] { make_preference(s, s, make_weight({0.5, 0.5}), 0.7); }), Errc::BadLabel);
  EXPECT_NO_THROW(make_preference(s, s, make_weight({0.5, 0.5}), kIndeterminate));
}

TEST(Discount, RangeChecked) {
  EXPECT_EQ(code_of([] { make_discount(1.0); }), Errc::ConfigError);
  EXPECT_EQ(code_of([] { make_discount(0.0); }), Errc::ConfigError);
  EXPECT_DOUBLE_EQ(make_discount(0.99).gamma, 0.99);
}

TEST(MixSeed, SeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(42, 3), mix_seed(42, 3));
}
