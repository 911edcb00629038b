/**
 * @file eql.hpp
 * @brief Weight-conditioned vector Q functions and the envelope backup.
 *
 * Two realizations share one interface: a table over (state, weight-lattice
 * point, action) for the discrete benchmarks and a feedforward network over
 * (state encoding, weight) for everything else.
 */
#pragma once

#include <functional>
#include <memory>

#include <json.hpp>

#include "pbmorl/envs.hpp"
#include "pbmorl/nn.hpp"
#include "pbmorl/replay.hpp"

namespace pbmorl {

class QFunction {
 public:
  virtual ~QFunction() = default;

  [[nodiscard]] virtual std::size_t objectives() const noexcept = 0;
  [[nodiscard]] virtual std::size_t actions() const noexcept = 0;

  /// Q(s, a, w) for every action a, in action order.
  [[nodiscard]] virtual std::vector<Vector> values(const State& s, const Weight& w) const = 0;

  /**
   * @brief One update towards `targets` (one per transition), evaluated at
   *        each transition's own weight. Returns the loss before the update:
   *        mean of |w.(Q - y)| + 0.5 ||Q - y||^2.
   */
  virtual double td_step(std::span<const Transition> batch, std::span<const Vector> targets,
                         std::span<const std::uint8_t> grounded = {}) = 0;

  /// this <- (1 - tau) this + tau other
  virtual void soft_update_from(const QFunction& other, double tau) = 0;

  [[nodiscard]] virtual std::unique_ptr<QFunction> clone() const = 0;

  /// Weights that give distinct inputs, first occurrences kept in order.
  [[nodiscard]] virtual std::vector<Weight> distinct_inputs(std::span<const Weight> samples) const {
    return {samples.begin(), samples.end()};
  }

  /**
   * @brief True once Q(s, a, w) was last updated towards a grounded target:
   *        one that ends in a terminal state or bootstraps from another
   *        grounded entry. Initial values are not grounded.
   */
  [[nodiscard]] virtual bool grounded(const State&, std::size_t, const Weight&) const { return true; }

  [[nodiscard]] virtual nlohmann::json to_json() const = 0;
  virtual void load_json(const nlohmann::json& j) = 0;
};

inline double td_loss_term(const Vector& q, const Vector& target, const Weight& w) {
  double scalar = 0.0;
  double squared = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = q[i] - target[i];
    scalar += w[i] * d;
    squared += d * d;
  }
  return std::abs(scalar) + 0.5 * squared;
}

/**
 * @brief Q(s, a*, w*) with (a*, w*) = argmax over actions and samples of
 *        w . Q(s, a, w'). Ties go to the lowest action, then lowest sample.
 *
 * Candidates at other weights must be grounded, so an optimistic initial
 * table does not leak across weights; candidates at w itself always count.
 * `grounded` (optional) receives the status of the chosen candidate.
 */
inline Vector envelope_filter(const QFunction& q, const State& s, const Weight& w, std::span<const Weight> samples,
                              bool* grounded = nullptr) {
  if (samples.empty()) throw Error(Errc::EmptyBatch, "envelope filter needs at least one weight sample");
  const auto inputs = q.distinct_inputs(samples);
  const auto own = q.distinct_inputs(std::span<const Weight>(&w, 1)).front();
  Vector best;
  bool best_grounded = false;
  double best_value = -std::numeric_limits<double>::infinity();
  // Scan in (action, sample) order so ties resolve action-first.
  std::vector<std::vector<Vector>> table;
  table.reserve(inputs.size());
  for (const auto& wp : inputs) table.push_back(q.values(s, wp));
  for (std::size_t a = 0; a < q.actions(); ++a) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const bool g = q.grounded(s, a, inputs[k]);
      if (!(inputs[k] == own) && !g) continue;
      const double v = dot(table[k][a], w.values());
      if (v > best_value) {
        best_value = v;
        best = table[k][a];
        best_grounded = g;
      }
    }
  }
  if (grounded) *grounded = best_grounded;
  return best;
}

/// r_hat + gamma * filter(s'), with no bootstrap past a terminal state.
inline Vector envelope_backup(const QFunction& target, const Transition& t, const Weight& w, const DiscountConfig& cfg,
                              std::span<const Weight> samples, bool* grounded = nullptr) {
  Vector y = t.reward_estimate;
  if (grounded) *grounded = true;
  if (t.terminal || cfg.gamma == 0.0) return y;
  const Vector next = envelope_filter(target, t.next_state, w, samples, grounded);
  if (next.size() != y.size()) throw Error(Errc::DimensionMismatch, "reward estimate vs Q width");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += cfg.gamma * next[i];
  return y;
}

/// argmax_a w . Q(s, a, w), lowest index on ties.
inline std::size_t greedy_action(const QFunction& q, const State& s, const Weight& w) {
  const auto vals = q.values(s, w);
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < vals.size(); ++a) {
    const double v = dot(vals[a], w.values());
    if (v > best_value) {
      best_value = v;
      best = a;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Tabular realization
// ---------------------------------------------------------------------------

/**
 * @brief Table Q[state][lattice point][action] of m-vectors; weights are
 *        snapped to the nearest lattice point.
 *
 * td_step moves each entry by `step_size` along the squared-error gradient,
 * then takes a proximal step on |w.(Q - y)| that never overshoots.
 */
class TabularQ final : public QFunction {
 public:
  /// `initial` fills every entry (zeros when empty); an optimistic value drives exploration.
  TabularQ(std::size_t states, std::size_t actions, std::size_t objectives, std::size_t resolution,
           double step_size = 1.0, const Vector& initial = {})
      : states_(states), actions_(actions), lattice_(objectives, resolution), step_size_(step_size) {
    if (states == 0 || actions == 0) throw Error(Errc::ConfigError, "tabular Q needs states and actions");
    if (!(step_size > 0.0 && step_size <= 1.0)) throw Error(Errc::ConfigError, "tabular step size must lie in (0,1]");
    if (!initial.empty() && initial.size() != objectives) throw Error(Errc::DimensionMismatch, "initial Q width");
    table_.assign(states_ * lattice_.size() * actions_ * objectives, 0.0);
    grounded_.assign(states_ * lattice_.size() * actions_, 0);
    if (!initial.empty()) {
      for (std::size_t i = 0; i < table_.size(); ++i) table_[i] = initial[i % objectives];
    }
  }

  [[nodiscard]] std::size_t objectives() const noexcept override { return lattice_.objectives(); }
  [[nodiscard]] std::size_t actions() const noexcept override { return actions_; }
  [[nodiscard]] std::size_t states() const noexcept { return states_; }
  [[nodiscard]] const WeightLattice& lattice() const noexcept { return lattice_; }
  [[nodiscard]] double step_size() const noexcept { return step_size_; }

  [[nodiscard]] std::span<double> entry(std::size_t s, std::size_t lattice_index, std::size_t a) {
    return {table_.data() + offset(s, lattice_index, a), objectives()};
  }
  [[nodiscard]] std::span<const double> entry(std::size_t s, std::size_t lattice_index, std::size_t a) const {
    return {table_.data() + offset(s, lattice_index, a), objectives()};
  }
  [[nodiscard]] std::span<double> raw() noexcept { return table_; }
  [[nodiscard]] std::span<const double> raw() const noexcept { return table_; }

  [[nodiscard]] std::vector<Vector> values(const State& s, const Weight& w) const override {
    const std::size_t k = lattice_.nearest(w);
    std::vector<Vector> out(actions_);
    for (std::size_t a = 0; a < actions_; ++a) {
      const auto e = entry(s.index, k, a);
      out[a].assign(e.begin(), e.end());
    }
    return out;
  }

  double td_step(std::span<const Transition> batch, std::span<const Vector> targets,
                 std::span<const std::uint8_t> grounded = {}) override {
    if (batch.empty()) throw Error(Errc::EmptyBatch, "td_step on an empty minibatch");
    if (targets.size() != batch.size()) throw Error(Errc::LengthMismatch, "one target per transition");
    if (!grounded.empty() && grounded.size() != batch.size()) throw Error(Errc::LengthMismatch, "grounded flags");
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& t = batch[b];
      auto q = entry(t.state.index, lattice_.nearest(t.weight), t.action);
      loss += td_loss_term(Vector(q.begin(), q.end()), targets[b], t.weight);
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& t = batch[b];
      const auto& y = targets[b];
      const std::size_t k = lattice_.nearest(t.weight);
      auto q = entry(t.state.index, k, t.action);
      grounded_[offset(t.state.index, k, t.action) / objectives()] = grounded.empty() ? 1 : grounded[b];
      for (std::size_t i = 0; i < q.size(); ++i) q[i] -= step_size_ * (q[i] - y[i]);
      double scalar = 0.0;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        scalar += t.weight[i] * (q[i] - y[i]);
        norm2 += t.weight[i] * t.weight[i];
      }
      if (scalar == 0.0 || norm2 == 0.0) continue;
      const double shrink = std::min(step_size_, std::abs(scalar) / norm2) * (scalar > 0.0 ? 1.0 : -1.0);
      for (std::size_t i = 0; i < q.size(); ++i) q[i] -= shrink * t.weight[i];
    }
    return loss / static_cast<double>(batch.size());
  }

  void soft_update_from(const QFunction& other, double tau) override {
    const auto* src = dynamic_cast<const TabularQ*>(&other);
    if (!src || src->table_.size() != table_.size()) throw Error(Errc::DimensionMismatch, "soft update between tables");
    grounded_ = src->grounded_;
    if (tau >= 1.0) {
      table_ = src->table_;
      return;
    }
    for (std::size_t i = 0; i < table_.size(); ++i) table_[i] += tau * (src->table_[i] - table_[i]);
  }

  [[nodiscard]] bool grounded(const State& s, std::size_t a, const Weight& w) const override {
    return grounded_[offset(s.index, lattice_.nearest(w), a) / objectives()] != 0;
  }

  [[nodiscard]] std::unique_ptr<QFunction> clone() const override { return std::make_unique<TabularQ>(*this); }

  [[nodiscard]] std::vector<Weight> distinct_inputs(std::span<const Weight> samples) const override {
    std::vector<Weight> out;
    std::vector<bool> seen(lattice_.size(), false);
    for (const auto& w : samples) {
      const std::size_t k = lattice_.nearest(w);
      if (seen[k]) continue;
      seen[k] = true;
      out.push_back(lattice_.point(k));
    }
    return out;
  }

  [[nodiscard]] nlohmann::json to_json() const override {
    return {{"format", "pbmorl.q"},          {"version", 1},
            {"kind", "tabular"},             {"states", states_},
            {"actions", actions_},           {"objectives", objectives()},
            {"resolution", lattice_.resolution()}, {"step_size", step_size_},
            {"values", table_}};
  }

  void load_json(const nlohmann::json& j) override {
    try {
      if (j.at("format").get<std::string>() != "pbmorl.q" || j.at("kind").get<std::string>() != "tabular") {
        throw Error(Errc::ParseError, "not a tabular Q checkpoint");
      }
      if (j.at("states").get<std::size_t>() != states_ || j.at("actions").get<std::size_t>() != actions_ ||
          j.at("objectives").get<std::size_t>() != objectives() ||
          j.at("resolution").get<std::size_t>() != lattice_.resolution()) {
        throw Error(Errc::ParseError, "tabular Q checkpoint shape differs");
      }
      auto values = j.at("values").get<Vector>();
      if (values.size() != table_.size()) throw Error(Errc::ParseError, "tabular Q value count");
      table_ = std::move(values);
      std::fill(grounded_.begin(), grounded_.end(), 1);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, e.what());
    }
  }

 private:
  [[nodiscard]] std::size_t offset(std::size_t s, std::size_t k, std::size_t a) const {
    if (s >= states_ || a >= actions_ || k >= lattice_.size()) {
      throw Error(Errc::EncodingError, "tabular Q index out of range");
    }
    return ((s * lattice_.size() + k) * actions_ + a) * objectives();
  }

  std::size_t states_;
  std::size_t actions_;
  WeightLattice lattice_;
  double step_size_;
  Vector table_;
  std::vector<std::uint8_t> grounded_;
};

// ---------------------------------------------------------------------------
// Network realization
// ---------------------------------------------------------------------------

/// Feedforward Q over (state encoding, weight) emitting |A| * m values.
class NetworkQ final : public QFunction {
 public:
  using StateEncoder = std::function<Features(const State&)>;

  NetworkQ(StateEncoder encoder, std::size_t state_dim, std::size_t actions, std::size_t objectives,
           const std::vector<std::size_t>& hidden, double learning_rate, std::uint64_t seed)
      : encoder_(std::move(encoder)), actions_(actions), objectives_(objectives) {
    std::vector<std::size_t> sizes{state_dim + objectives};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(actions * objectives);
    net_ = Mlp(std::move(sizes));
    Rng rng(seed);
    net_.initialize(rng);
    adam_ = Adam(net_.parameter_count(), learning_rate);
  }

  [[nodiscard]] std::size_t objectives() const noexcept override { return objectives_; }
  [[nodiscard]] std::size_t actions() const noexcept override { return actions_; }
  [[nodiscard]] const Mlp& network() const noexcept { return net_; }
  [[nodiscard]] std::span<double> parameters() noexcept { return net_.parameters(); }

  [[nodiscard]] Features input(const State& s, const Weight& w) const {
    if (w.size() != objectives_) throw Error(Errc::DimensionMismatch, "weight vs Q objectives");
    Features f = encoder_(s);
    f.dense_offset = f.dim - f.dense.size();
    f.dense.insert(f.dense.end(), w.begin(), w.end());
    f.dim += objectives_;
    return f;
  }

  [[nodiscard]] std::vector<Vector> values(const State& s, const Weight& w) const override {
    return split(net_.forward(input(s, w)));
  }

  double td_step(std::span<const Transition> batch, std::span<const Vector> targets,
                 std::span<const std::uint8_t> = {}) override {
    if (batch.empty()) throw Error(Errc::EmptyBatch, "td_step on an empty minibatch");
    if (targets.size() != batch.size()) throw Error(Errc::LengthMismatch, "one target per transition");
    const double scale = 1.0 / static_cast<double>(batch.size());
    Vector grad(net_.parameter_count(), 0.0);
    Vector grad_out(actions_ * objectives_);
    double loss = 0.0;
    Mlp::Tape tape;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& t = batch[b];
      const Features x = input(t.state, t.weight);
      const Vector out = net_.forward(x, &tape);
      const std::size_t base = t.action * objectives_;
      const Vector q(out.begin() + static_cast<std::ptrdiff_t>(base),
                     out.begin() + static_cast<std::ptrdiff_t>(base + objectives_));
      loss += td_loss_term(q, targets[b], t.weight);
      double scalar = 0.0;
      for (std::size_t i = 0; i < objectives_; ++i) scalar += t.weight[i] * (q[i] - targets[b][i]);
      const double sign = scalar > 0.0 ? 1.0 : scalar < 0.0 ? -1.0 : 0.0;
      std::fill(grad_out.begin(), grad_out.end(), 0.0);
      for (std::size_t i = 0; i < objectives_; ++i) {
        grad_out[base + i] = scale * (sign * t.weight[i] + (q[i] - targets[b][i]));
      }
      net_.backward(x, tape, grad_out, grad);
    }
    adam_.step(net_.parameters(), grad);
    return loss * scale;
  }

  void soft_update_from(const QFunction& other, double tau) override {
    const auto* src = dynamic_cast<const NetworkQ*>(&other);
    if (!src || src->net_.parameter_count() != net_.parameter_count()) {
      throw Error(Errc::DimensionMismatch, "soft update between networks");
    }
    auto dst = net_.parameters();
    const auto from = src->net_.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = tau >= 1.0 ? from[i] : dst[i] + tau * (from[i] - dst[i]);
  }

  [[nodiscard]] std::unique_ptr<QFunction> clone() const override { return std::make_unique<NetworkQ>(*this); }

  [[nodiscard]] nlohmann::json to_json() const override {
    return {{"format", "pbmorl.q"},
            {"version", 1},
            {"kind", "network"},
            {"actions", actions_},
            {"objectives", objectives_},
            {"sizes", net_.sizes()},
            {"parameters", Vector(net_.parameters().begin(), net_.parameters().end())}};
  }

  void load_json(const nlohmann::json& j) override {
    try {
      if (j.at("format").get<std::string>() != "pbmorl.q" || j.at("kind").get<std::string>() != "network") {
        throw Error(Errc::ParseError, "not a network Q checkpoint");
      }
      if (j.at("sizes").get<std::vector<std::size_t>>() != net_.sizes()) {
        throw Error(Errc::ParseError, "network Q checkpoint architecture differs");
      }
      const auto params = j.at("parameters").get<Vector>();
      if (params.size() != net_.parameter_count()) throw Error(Errc::ParseError, "parameter count");
      std::copy(params.begin(), params.end(), net_.parameters().begin());
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ParseError, e.what());
    }
  }

 private:
  [[nodiscard]] std::vector<Vector> split(const Vector& out) const {
    std::vector<Vector> vals(actions_);
    for (std::size_t a = 0; a < actions_; ++a) {
      vals[a].assign(out.begin() + static_cast<std::ptrdiff_t>(a * objectives_),
                     out.begin() + static_cast<std::ptrdiff_t>((a + 1) * objectives_));
    }
    return vals;
  }

  StateEncoder encoder_;
  std::size_t actions_;
  std::size_t objectives_;
  Mlp net_;
  Adam adam_;
};

inline std::unique_ptr<NetworkQ> make_network_q(const Environment& env, const std::vector<std::size_t>& hidden,
                                                double learning_rate, std::uint64_t seed) {
  std::shared_ptr<const Environment> owned = env.clone();
  const auto& spec = owned->spec();
  const std::size_t state_dim = spec.discrete_states() ? spec.state_count : spec.feature_count;
  return std::make_unique<NetworkQ>([owned](const State& s) { return owned->state_features(s); }, state_dim,
                                    spec.action_count, spec.objectives, hidden, learning_rate, seed);
}

}  // namespace pbmorl
