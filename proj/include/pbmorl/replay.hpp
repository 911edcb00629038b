/**
 * @file replay.hpp
 * @brief Transition replay buffer with reward relabeling, the append-only
 *        preference buffer, and query-pair sampling restricted to recent
 *        (near-policy) experience.
 *
 * Both buffers serialize push/sample/relabel behind a mutex so the trainer
 * and the labeling service can share them.
 */
#pragma once

#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "pbmorl/core.hpp"

namespace pbmorl {

struct Transition {
  State state;
  std::size_t action = 0;
  State next_state;
  Vector reward_estimate;
  Vector true_reward;  // kept for the scripted teacher and the oracle baseline
  Weight weight;
  bool terminal = false;
  std::uint64_t episode_id = 0;
  std::size_t step_index = 0;
  std::uint64_t insertion_order = 0;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100'000) : capacity_(capacity) {
    if (capacity_ == 0) throw Error(Errc::ConfigError, "replay capacity must be positive");
  }

  ReplayBuffer(const ReplayBuffer&) = delete;
  ReplayBuffer& operator=(const ReplayBuffer&) = delete;

  /// Stores `t`, stamping its insertion order; evicts the oldest at capacity.
  std::uint64_t push(Transition t) {
    std::lock_guard lock(mutex_);
    t.insertion_order = next_order_++;
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
    return items_.back().insertion_order;
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }

  /// Uniform with replacement.
  [[nodiscard]] std::vector<Transition> sample_minibatch(std::size_t batch, Rng& rng) const {
    std::lock_guard lock(mutex_);
    if (items_.empty()) throw Error(Errc::EmptyBuffer, "cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) out.push_back(items_[pick(rng)]);
    return out;
  }

  [[nodiscard]] std::vector<Transition> sample_minibatch(std::size_t batch, std::uint64_t seed) const {
    Rng rng(seed);
    return sample_minibatch(batch, rng);
  }

  /**
   * @brief Samples `pairs` segment pairs of length `horizon` from the most
   *        recent `window` fraction of the buffer.
   *
   * Slices are contiguous in (episode, step) and never cross an episode
   * boundary; the two slices of a pair are distinct.
   */
  [[nodiscard]] std::vector<std::pair<Segment, Segment>> sample_query_pairs(std::size_t pairs, std::size_t horizon,
                                                                            double window, Rng& rng) const {
    if (horizon == 0) throw Error(Errc::InsufficientData, "segment length must be positive");
    if (!(window > 0.0 && window <= 1.0)) throw Error(Errc::ConfigError, "recency window must lie in (0,1]");
    std::lock_guard lock(mutex_);
    const std::size_t n = items_.size();
    const auto recent = static_cast<std::size_t>(std::ceil(window * static_cast<double>(n) - 1e-9));
    const std::size_t first = n - std::min(n, recent);
    std::vector<std::size_t> starts;
    // Length of the contiguous same-episode run ending at each position.
    std::size_t run = 0;
    for (std::size_t i = first; i < n; ++i) {
      const bool continues = i > first && items_[i].episode_id == items_[i - 1].episode_id &&
                             items_[i].step_index == items_[i - 1].step_index + 1;
      run = continues ? run + 1 : 1;
      if (run >= horizon) starts.push_back(i + 1 - horizon);
    }
    if (starts.size() < 2) {
      throw Error(Errc::InsufficientData, std::to_string(starts.size()) + " usable slices of length " +
                                              std::to_string(horizon) + " in the recency window");
    }
    std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, starts.size() - 2);
    std::vector<std::pair<Segment, Segment>> out;
    out.reserve(pairs);
    for (std::size_t k = 0; k < pairs; ++k) {
      const std::size_t a = pick(rng);
      std::size_t b = pick_other(rng);
      if (b >= a) ++b;
      out.emplace_back(slice(starts[a], horizon), slice(starts[b], horizon));
    }
    return out;
  }

  /// Replaces every reward estimate with model(state, action).
  template <typename RewardFn>
  void relabel_all(RewardFn&& model) {
    std::lock_guard lock(mutex_);
    for (auto& t : items_) t.reward_estimate = model(t.state, t.action);
  }

  /// Copy of the stored transitions, oldest first.
  [[nodiscard]] std::vector<Transition> snapshot() const {
    std::lock_guard lock(mutex_);
    return {items_.begin(), items_.end()};
  }

 private:
  [[nodiscard]] Segment slice(std::size_t start, std::size_t horizon) const {
    Segment seg;
    seg.episode_id = items_[start].episode_id;
    seg.start_step = items_[start].step_index;
    seg.steps.reserve(horizon);
    seg.ground_truth.reserve(horizon);
    for (std::size_t i = start; i < start + horizon; ++i) {
      seg.steps.push_back(Step{items_[i].state, items_[i].action});
      seg.ground_truth.push_back(items_[i].true_reward);
    }
    return seg;
  }

  std::size_t capacity_;
  std::uint64_t next_order_ = 0;
  std::deque<Transition> items_;
  mutable std::mutex mutex_;
};

class PreferenceBuffer {
 public:
  PreferenceBuffer() = default;
  PreferenceBuffer(const PreferenceBuffer&) = delete;
  PreferenceBuffer& operator=(const PreferenceBuffer&) = delete;

  void push(PreferenceRecord record) {
    if (!is_valid_label(record.label)) throw Error(Errc::BadLabel, "label " + std::to_string(record.label));
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(record));
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

  [[nodiscard]] std::vector<PreferenceRecord> snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  /// Copies of the records at `indices`, in that order.
  [[nodiscard]] std::vector<PreferenceRecord> gather(std::span<const std::size_t> indices) const {
    std::lock_guard lock(mutex_);
    std::vector<PreferenceRecord> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(records_.at(i));
    return out;
  }

 private:
  std::vector<PreferenceRecord> records_;
  mutable std::mutex mutex_;
};

}  // namespace pbmorl
