/**
 * @file core.hpp
 * @brief Shared domain types: simplex weights, segments, preference records
 *        and discounted-return arithmetic.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pbmorl {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

enum class Errc {
  NegativeComponent,
  NotNormalized,
  BadDimension,
  LengthMismatch,
  DimensionMismatch,
  InvalidCell,
  ActionOutOfRange,
  MissingGroundTruth,
  BadBound,
  EmptyBuffer,
  EmptyBatch,
  InsufficientData,
  EncodingError,
  InsufficientHorizon,
  TooLarge,
  BadReference,
  QueueFull,
  UnknownQuery,
  AlreadyAnswered,
  BadLabel,
  ConfigError,
  ParseError,
  UnknownEnvironment,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::NegativeComponent: return "NegativeComponent";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::BadDimension: return "BadDimension";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidCell: return "InvalidCell";
    case Errc::ActionOutOfRange: return "ActionOutOfRange";
    case Errc::MissingGroundTruth: return "MissingGroundTruth";
    case Errc::BadBound: return "BadBound";
    case Errc::EmptyBuffer: return "EmptyBuffer";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::EncodingError: return "EncodingError";
    case Errc::InsufficientHorizon: return "InsufficientHorizon";
    case Errc::TooLarge: return "TooLarge";
    case Errc::BadReference: return "BadReference";
    case Errc::QueueFull: return "QueueFull";
    case Errc::UnknownQuery: return "UnknownQuery";
    case Errc::AlreadyAnswered: return "AlreadyAnswered";
    case Errc::BadLabel: return "BadLabel";
    case Errc::ConfigError: return "ConfigError";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownEnvironment: return "UnknownEnvironment";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline constexpr double kSimplexTolerance = 1e-9;

/**
 * @brief A point on the probability simplex.
 *
 * Only constructible through make_weight(), which validates instead of
 * renormalizing.
 */
class Weight {
 public:
  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] const Vector& values() const noexcept { return values_; }
  [[nodiscard]] auto begin() const noexcept { return values_.begin(); }
  [[nodiscard]] auto end() const noexcept { return values_.end(); }

  bool operator==(const Weight&) const = default;

 private:
  explicit Weight(Vector v) : values_(std::move(v)) {}
  friend Weight make_weight(Vector raw);

  Vector values_;
};

inline Weight make_weight(Vector raw) {
  if (raw.size() < 2) {
    throw Error(Errc::BadDimension, "weight needs at least 2 components, got " + std::to_string(raw.size()));
  }
  double sum = 0.0;
  for (double x : raw) {
    if (!(x >= 0.0)) throw Error(Errc::NegativeComponent, "weight component " + std::to_string(x));
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw Error(Errc::NotNormalized, "weight components sum to " + std::to_string(sum));
  }
  return Weight(std::move(raw));
}

/// Unit vector e_k, a simplex vertex.
inline Weight unit_weight(std::size_t m, std::size_t k) {
  Vector v(m, 0.0);
  v.at(k) = 1.0;
  return make_weight(std::move(v));
}

/// The m simplex vertices e_1..e_m.
inline std::vector<Weight> identity_weights(std::size_t m) {
  std::vector<Weight> out;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) out.push_back(unit_weight(m, k));
  return out;
}

/// I.i.d. uniform draws on the (m-1)-simplex: normalized standard exponentials.
inline std::vector<Weight> sample_weights(std::size_t count, std::size_t m, Rng& rng) {
  if (m < 2) throw Error(Errc::BadDimension, "sample_weights needs m >= 2");
  std::exponential_distribution<double> expo(1.0);
  std::vector<Weight> out;
  out.reserve(count);
  Vector raw(m);
  for (std::size_t i = 0; i < count; ++i) {
    double sum = 0.0;
    for (auto& x : raw) {
      x = expo(rng);
      sum += x;
    }
    Vector w(m);
    for (std::size_t k = 0; k < m; ++k) w[k] = raw[k] / sum;
    out.push_back(make_weight(std::move(w)));
  }
  return out;
}

inline std::vector<Weight> sample_weights(std::size_t count, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  return sample_weights(count, m, rng);
}

/**
 * @brief Barycentric lattice {k / resolution} on the simplex.
 *
 * Sizes: m=2,res=100 -> 101; m=3,res=10 -> 66; m=6,res=5 -> 252.
 * Points are emitted in lexicographic order of their integer compositions.
 */
inline std::vector<Weight> weight_grid(std::size_t m, std::size_t resolution) {
  if (m < 2) throw Error(Errc::BadDimension, "weight_grid needs m >= 2");
  if (resolution == 0) throw Error(Errc::ConfigError, "weight_grid resolution must be positive");
  std::vector<Weight> out;
  std::vector<std::size_t> parts(m, 0);
  // Enumerate compositions of `resolution` into m nonnegative parts.
  auto recurse = [&](auto&& self, std::size_t pos, std::size_t remaining) -> void {
    if (pos + 1 == m) {
      parts[pos] = remaining;
      Vector w(m);
      for (std::size_t k = 0; k < m; ++k) w[k] = static_cast<double>(parts[k]) / static_cast<double>(resolution);
      // Force exact normalization against rounding in the last component.
      double head = 0.0;
      for (std::size_t k = 0; k + 1 < m; ++k) head += w[k];
      w[m - 1] = std::max(0.0, 1.0 - head);
      out.push_back(make_weight(std::move(w)));
      return;
    }
    for (std::size_t k = remaining + 1; k-- > 0;) {
      parts[pos] = remaining - k;
      self(self, pos + 1, k);
    }
  };
  recurse(recurse, 0, resolution);
  return out;
}

/// Default evaluation grids: 101 weights for m=2, 66 for m=3, 252 for m=6.
inline std::size_t evaluation_resolution(std::size_t m) {
  switch (m) {
    case 2: return 100;
    case 3: return 10;
    case 4: return 6;
    default: return 5;
  }
}

inline std::vector<Weight> evaluation_grid(std::size_t m) {
  return weight_grid(m, evaluation_resolution(m));
}

/**
 * @brief Network input: sparse one-hot positions plus a dense tail.
 *
 * Discrete environments feed a single hot index; the energy task feeds a
 * dense vector. The Q network appends the weight to either form.
 */
struct Features {
  std::size_t dim = 0;
  std::vector<std::size_t> hot;
  std::size_t dense_offset = 0;
  Vector dense;
};

/// Discounted per-objective return.
struct ReturnVector {
  Vector values;

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const ReturnVector&) const = default;

  friend ReturnVector operator+(const ReturnVector& a, const ReturnVector& b) {
    if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "ReturnVector addition");
    ReturnVector out{a.values};
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
  }
};

/**
 * @brief Environment state. Discrete environments use `index`; the energy
 *        task stores its real-valued observation in `features`.
 */
struct State {
  std::size_t index = 0;
  Vector features;

  bool operator==(const State&) const = default;
};

struct Step {
  State state;
  std::size_t action = 0;

  bool operator==(const Step&) const = default;
};

/**
 * @brief Contiguous state-action slice of one episode.
 *
 * `ground_truth` holds the per-step true reward vectors when they are known
 * (scripted teacher); it is empty for segments shown to a human.
 */
struct Segment {
  std::vector<Step> steps;
  std::uint64_t episode_id = 0;
  std::size_t start_step = 0;
  std::vector<Vector> ground_truth;

  [[nodiscard]] std::size_t length() const noexcept { return steps.size(); }
  [[nodiscard]] bool has_ground_truth() const noexcept {
    return !steps.empty() && ground_truth.size() == steps.size();
  }
};

// Label convention, shared by every module: 1 means the second segment is
// strictly preferred, 0 means the first one is, 0.5 is indeterminate.
inline constexpr double kFirstPreferred = 0.0;
inline constexpr double kIndeterminate = 0.5;
inline constexpr double kSecondPreferred = 1.0;

constexpr bool is_valid_label(double label) noexcept {
  return label == kFirstPreferred || label == kIndeterminate || label == kSecondPreferred;
}

struct PreferenceRecord {
  Segment first;
  Segment second;
  Weight weight;
  double label = kIndeterminate;
};

inline PreferenceRecord make_preference(Segment first, Segment second, Weight weight, double label) {
  if (!is_valid_label(label)) throw Error(Errc::BadLabel, "label " + std::to_string(label));
  return PreferenceRecord{std::move(first), std::move(second), std::move(weight), label};
}

struct DiscountConfig {
  double gamma = 0.99;
};

inline DiscountConfig make_discount(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error(Errc::ConfigError, "gamma must lie in (0,1)");
  return DiscountConfig{gamma};
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::DimensionMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

/// Sum of gamma^t r_t with t restarting at zero for the segment.
inline ReturnVector discounted_return(std::span<const Vector> rewards, std::size_t horizon, const DiscountConfig& cfg) {
  if (horizon == 0 || rewards.size() != horizon) {
    throw Error(Errc::LengthMismatch, "rewards length " + std::to_string(rewards.size()) + " for segment length " +
                                          std::to_string(horizon));
  }
  ReturnVector out{Vector(rewards.front().size(), 0.0)};
  double discount = 1.0;
  for (const auto& r : rewards) {
    if (r.size() != out.size()) throw Error(Errc::DimensionMismatch, "reward vector width changed within segment");
    for (std::size_t i = 0; i < r.size(); ++i) out.values[i] += discount * r[i];
    discount *= cfg.gamma;
  }
  return out;
}

inline ReturnVector discounted_return(const Segment& segment, std::span<const Vector> rewards, const DiscountConfig& cfg) {
  return discounted_return(rewards, segment.length(), cfg);
}

inline double weighted_return(const ReturnVector& r, const Weight& w) {
  return dot(r.values, w.values());
}

/// Scalar sum_t gamma^t w.r_t without materializing the vector return.
inline double weighted_discounted_sum(std::span<const Vector> rewards, const Weight& w, const DiscountConfig& cfg) {
  double total = 0.0;
  double discount = 1.0;
  for (const auto& r : rewards) {
    total += discount * dot(r, w.values());
    discount *= cfg.gamma;
  }
  return total;
}

/// SplitMix64 step; derives independent stream seeds from one run seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/**
 * @brief Snaps weights to a barycentric lattice and indexes lattice points.
 */
class WeightLattice {
 public:
  WeightLattice(std::size_t m, std::size_t resolution)
      : m_(m), resolution_(resolution), points_(weight_grid(m, resolution)) {
    for (std::size_t i = 0; i < points_.size(); ++i) index_.emplace(key_of(points_[i]), i);
  }

  [[nodiscard]] std::size_t objectives() const noexcept { return m_; }
  [[nodiscard]] std::size_t resolution() const noexcept { return resolution_; }
  [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
  [[nodiscard]] const std::vector<Weight>& points() const noexcept { return points_; }
  [[nodiscard]] const Weight& point(std::size_t i) const { return points_.at(i); }

  /// Index of the nearest lattice point (largest-remainder rounding).
  [[nodiscard]] std::size_t nearest(const Weight& w) const {
    if (w.size() != m_) throw Error(Errc::DimensionMismatch, "weight dimension vs lattice");
    std::vector<long> counts(m_);
    std::vector<std::pair<double, std::size_t>> remainders(m_);
    long total = 0;
    const auto res = static_cast<double>(resolution_);
    for (std::size_t k = 0; k < m_; ++k) {
      const double scaled = w[k] * res;
      counts[k] = static_cast<long>(std::floor(scaled));
      remainders[k] = {scaled - static_cast<double>(counts[k]), k};
      total += counts[k];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (long left = static_cast<long>(resolution_) - total, j = 0; left > 0; --left, ++j) {
      ++counts[remainders[static_cast<std::size_t>(j) % m_].second];
    }
    std::uint64_t key = 0;
    for (long c : counts) key = key * (resolution_ + 1) + static_cast<std::uint64_t>(c);
    return index_.at(key);
  }

 private:
  [[nodiscard]] std::uint64_t key_of(const Weight& w) const {
    std::uint64_t key = 0;
    for (double x : w) {
      key = key * (resolution_ + 1) + static_cast<std::uint64_t>(std::llround(x * static_cast<double>(resolution_)));
    }
    return key;
  }

  std::size_t m_;
  std::size_t resolution_;
  std::vector<Weight> points_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

}  // namespace pbmorl
