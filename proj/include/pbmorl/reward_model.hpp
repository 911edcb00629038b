/**
 * @file reward_model.hpp
 * @brief Learned vector reward r_hat(s, a) trained with the Bradley-Terry
 *        cross-entropy on weight-conditioned segment preferences.
 */
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include <json.hpp>

#include "pbmorl/envs.hpp"
#include "pbmorl/nn.hpp"
#include "pbmorl/replay.hpp"

namespace pbmorl {

inline constexpr double kProbabilityFloor = 1e-12;

/// P(second preferred) from the score difference S1 - S0; never overflows.
inline double logistic_preference(double score_difference) {
  const double q = 1.0 / (1.0 + std::exp(-std::abs(score_difference)));
  return score_difference >= 0.0 ? q : 1.0 - q;
}

struct RewardModelConfig {
  std::vector<std::size_t> hidden{128, 128};
  bool bounded_output = true;
  bool zero_output_layer = false;
  double learning_rate = 3e-4;
};

class RewardModel {
 public:
  using Encoder = std::function<Features(const State&, std::size_t)>;

  /// `output_bound` empty means an unbounded linear head.
  RewardModel(Encoder encoder, std::size_t input_dim, std::size_t objectives, const RewardModelConfig& cfg,
              Vector output_bound, std::uint64_t seed)
      : encoder_(std::move(encoder)), bound_(std::move(output_bound)) {
    if (objectives < 2) throw Error(Errc::BadDimension, "reward model needs m >= 2");
    if (!bound_.empty() && bound_.size() != objectives) throw Error(Errc::DimensionMismatch, "output bound width");
    for (double b : bound_) {
      if (!(b > 0.0)) throw Error(Errc::ConfigError, "output bound must be positive");
    }
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(objectives);
    net_ = Mlp(std::move(sizes));
    Rng rng(seed);
    net_.initialize(rng, cfg.zero_output_layer);
    adam_ = Adam(net_.parameter_count(), cfg.learning_rate);
  }

  [[nodiscard]] std::size_t objectives() const noexcept { return net_.output_size(); }
  [[nodiscard]] const Mlp& network() const noexcept { return net_; }
  [[nodiscard]] std::span<double> parameters() noexcept { return net_.parameters(); }
  [[nodiscard]] std::span<const double> parameters() const noexcept { return net_.parameters(); }
  [[nodiscard]] const Vector& output_bound() const noexcept { return bound_; }
  [[nodiscard]] Features encode(const State& s, std::size_t action) const { return encoder_(s, action); }
  [[nodiscard]] Adam& optimizer() noexcept { return adam_; }

  [[nodiscard]] Vector predict_reward(const State& s, std::size_t action) const {
    return squash(net_.forward(encoder_(s, action)));
  }

  /// S = sum_t gamma^t w . r_hat(s_t, a_t)
  [[nodiscard]] double segment_score(const Segment& seg, const Weight& w, const DiscountConfig& cfg) const {
    check_weight(w);
    double total = 0.0;
    double discount = 1.0;
    for (const auto& step : seg.steps) {
      total += discount * dot(predict_reward(step.state, step.action), w.values());
      discount *= cfg.gamma;
    }
    return total;
  }

  /// P[second > first | w]
  [[nodiscard]] double predict_preference(const Segment& first, const Segment& second, const Weight& w,
                                          const DiscountConfig& cfg) const {
    return logistic_preference(segment_score(second, w, cfg) - segment_score(first, w, cfg));
  }

  [[nodiscard]] double preference_loss(std::span<const PreferenceRecord> batch, const DiscountConfig& cfg) const {
    return evaluate(batch, cfg, {});
  }

  /// Mean cross-entropy; adds its gradient into `grad` (sized like parameters()).
  double loss_and_gradient(std::span<const PreferenceRecord> batch, const DiscountConfig& cfg,
                           std::span<double> grad) const {
    if (grad.size() != net_.parameter_count()) throw Error(Errc::DimensionMismatch, "gradient buffer size");
    return evaluate(batch, cfg, grad);
  }

  /// Fraction of strict labels whose side the model predicts (P > 0.5 for label 1).
  [[nodiscard]] std::optional<double> accuracy(std::span<const PreferenceRecord> records, const DiscountConfig& cfg) const {
    std::size_t strict = 0;
    std::size_t correct = 0;
    Cache cache;
    for (const auto& r : records) {
      if (r.label == kIndeterminate) continue;
      ++strict;
      const double d = cached_score(r.second, r.weight, cfg, cache) - cached_score(r.first, r.weight, cfg, cache);
      if ((r.label == kSecondPreferred && d > 0.0) || (r.label == kFirstPreferred && d < 0.0)) ++correct;
    }
    if (strict == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(strict);
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"format", "pbmorl.reward_model"},
            {"version", 1},
            {"sizes", net_.sizes()},
            {"output_bound", bound_},
            {"parameters", Vector(net_.parameters().begin(), net_.parameters().end())}};
  }

  /// Loads parameters saved by to_json(); architecture must match.
  void load_json(const nlohmann::json& j) {
    try {
      if (j.at("format").get<std::string>() != "pbmorl.reward_model" || j.at("version").get<int>() != 1) {
        throw Error(Errc::ParseError, "not a version-1 reward model checkpoint");
      }
      if (j.at("sizes").get<std::vector<std::size_t>>() != net_.sizes() ||
          j.at("output_bound").get<Vector>() != bound_) {
        throw Error(Errc::ParseError, "reward model checkpoint architecture differs");
      }
      const auto params = j.at("parameters").get<Vector>();
      if (params.size() != net_.parameter_count()) throw Error(Errc::ParseError, "parameter count");
      std::copy(params.begin(), params.end(), net_.parameters().begin());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, e.what());
    }
  }

 private:
  struct Key {
    std::vector<std::size_t> hot;
    Vector dense;
    auto operator<=>(const Key&) const = default;
  };
  struct Entry {
    Features input;
    Mlp::Tape tape;
    Vector raw;
    Vector reward;
    Vector seed;  // accumulated d loss / d reward
  };
  struct Cache {
    std::map<Key, std::size_t> index;
    std::vector<Entry> entries;
  };

  void check_weight(const Weight& w) const {
    if (w.size() != objectives()) throw Error(Errc::DimensionMismatch, "weight vs reward model objectives");
  }

  [[nodiscard]] Vector squash(Vector z) const {
    for (std::size_t i = 0; i < bound_.size(); ++i) z[i] = bound_[i] * std::tanh(z[i] / bound_[i]);
    return z;
  }

  std::size_t lookup(const Step& step, Cache& cache, bool record_tape) const {
    Features f = encoder_(step.state, step.action);
    Key key{f.hot, f.dense};
    auto [it, inserted] = cache.index.emplace(std::move(key), cache.entries.size());
    if (inserted) {
      Entry e;
      e.raw = net_.forward(f, record_tape ? &e.tape : nullptr);
      e.reward = squash(e.raw);
      e.seed.assign(objectives(), 0.0);
      e.input = std::move(f);
      cache.entries.push_back(std::move(e));
    }
    return it->second;
  }

  double cached_score(const Segment& seg, const Weight& w, const DiscountConfig& cfg, Cache& cache) const {
    check_weight(w);
    double total = 0.0;
    double discount = 1.0;
    for (const auto& step : seg.steps) {
      total += discount * dot(cache.entries[lookup(step, cache, false)].reward, w.values());
      discount *= cfg.gamma;
    }
    return total;
  }

  double evaluate(std::span<const PreferenceRecord> batch, const DiscountConfig& cfg, std::span<double> grad) const {
    if (batch.empty()) throw Error(Errc::EmptyBatch, "preference loss of an empty batch");
    const bool with_grad = !grad.empty();
    Cache cache;
    struct Visit {
      std::vector<std::size_t> first, second;
    };
    std::vector<Visit> visits(batch.size());
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& r = batch[b];
      check_weight(r.weight);
      auto score = [&](const Segment& seg, std::vector<std::size_t>& ids) {
        double total = 0.0;
        double discount = 1.0;
        for (const auto& step : seg.steps) {
          ids.push_back(lookup(step, cache, with_grad));
          total += discount * dot(cache.entries[ids.back()].reward, r.weight.values());
          discount *= cfg.gamma;
        }
        return total;
      };
      const double s0 = score(r.first, visits[b].first);
      const double s1 = score(r.second, visits[b].second);
      const double p1 = logistic_preference(s1 - s0);
      const double p0 = 1.0 - p1;
      loss -= (1.0 - r.label) * std::log(std::max(p0, kProbabilityFloor)) +
              r.label * std::log(std::max(p1, kProbabilityFloor));
      if (!with_grad) continue;
      // d loss / d (S1 - S0), exact away from the probability floor.
      const double dd = (p1 - r.label) * scale;
      auto spread = [&](const std::vector<std::size_t>& ids, double sign) {
        double discount = 1.0;
        for (auto id : ids) {
          auto& seed = cache.entries[id].seed;
          for (std::size_t i = 0; i < seed.size(); ++i) seed[i] += sign * dd * discount * r.weight[i];
          discount *= cfg.gamma;
        }
      };
      spread(visits[b].second, 1.0);
      spread(visits[b].first, -1.0);
    }
    if (with_grad) {
      for (auto& e : cache.entries) {
        Vector g = e.seed;
        for (std::size_t i = 0; i < bound_.size(); ++i) {
          const double t = std::tanh(e.raw[i] / bound_[i]);
          g[i] *= 1.0 - t * t;
        }
        net_.backward(e.input, e.tape, g, grad);
      }
    }
    return loss * scale;
  }

  Encoder encoder_;
  Vector bound_;
  Mlp net_;
  Adam adam_;
};

/// Reward model wired to an environment's state-action encoding.
inline RewardModel make_reward_model(const Environment& env, const RewardModelConfig& cfg, std::uint64_t seed) {
  std::shared_ptr<const Environment> owned = env.clone();
  const auto& spec = owned->spec();
  const std::size_t input = spec.discrete_states() ? spec.state_count * spec.action_count : spec.feature_count + 1;
  Vector bound = cfg.bounded_output ? spec.reward_bound : Vector{};
  for (auto& b : bound) b = std::max(b, 1e-6);
  return RewardModel([owned](const State& s, std::size_t a) { return owned->reward_features(s, a); }, input,
                     spec.objectives, cfg, std::move(bound), seed);
}

struct RewardTrainingReport {
  std::size_t steps = 0;
  std::size_t train_records = 0;
  std::size_t validation_records = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> validation_accuracy;
};

inline constexpr std::size_t kValidationStride = 10;
inline constexpr std::size_t kReportSampleCap = 4096;

/**
 * @brief Adam steps on minibatches of the preference buffer.
 *
 * Every tenth record (index % 10 == 9) is held out for the reported
 * accuracy once the buffer has at least ten records.
 */
inline RewardTrainingReport train_reward_model(RewardModel& model, const PreferenceBuffer& prefs, std::size_t steps,
                                               Rng& rng, std::size_t batch, const DiscountConfig& cfg) {
  const std::size_t n = prefs.size();
  if (n == 0) throw Error(Errc::EmptyBuffer, "no preference records to train on");
  if (batch == 0) throw Error(Errc::ConfigError, "reward batch must be positive");
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> valid_idx;
  for (std::size_t i = 0; i < n; ++i) {
    (n >= kValidationStride && i % kValidationStride == kValidationStride - 1 ? valid_idx : train_idx).push_back(i);
  }
  auto spaced = [](const std::vector<std::size_t>& idx) {
    if (idx.size() <= kReportSampleCap) return idx;
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < kReportSampleCap; ++k) out.push_back(idx[k * idx.size() / kReportSampleCap]);
    return out;
  };
  const auto report_train = prefs.gather(spaced(train_idx));
  RewardTrainingReport report;
  report.steps = steps;
  report.train_records = train_idx.size();
  report.validation_records = valid_idx.size();
  report.initial_loss = model.preference_loss(report_train, cfg);

  std::uniform_int_distribution<std::size_t> pick(0, train_idx.size() - 1);
  std::vector<std::size_t> chosen(std::min(batch, train_idx.size()));
  Vector grad(model.parameters().size());
  for (std::size_t s = 0; s < steps; ++s) {
    for (auto& c : chosen) c = train_idx[pick(rng)];
    const auto records = prefs.gather(chosen);
    std::fill(grad.begin(), grad.end(), 0.0);
    model.loss_and_gradient(records, cfg, grad);
    model.optimizer().step(model.parameters(), grad);
  }

  report.final_loss = steps == 0 ? report.initial_loss : model.preference_loss(report_train, cfg);
  report.train_accuracy = model.accuracy(report_train, cfg);
  if (!valid_idx.empty()) report.validation_accuracy = model.accuracy(prefs.gather(spaced(valid_idx)), cfg);
  return report;
}

/// Mutex-guarded published copy for concurrent readers.
template <typename T>
class Snapshot {
 public:
  void publish(T value) {
    auto next = std::make_shared<const T>(std::move(value));
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }
  [[nodiscard]] std::shared_ptr<const T> get() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const T> current_;
};

}  // namespace pbmorl
