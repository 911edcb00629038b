/**
 * @file trainer.hpp
 * @brief The preference-driven training loop on top of envelope Q-learning,
 *        and the same loop on true rewards as the oracle baseline.
 *
 * One iteration is one environment step. Feedback rounds run every K
 * iterations once learning has started; Q updates run every iteration after
 * that. Given a seed and a synchronous teacher the run is deterministic.
 */
#pragma once

#include <functional>
#include <optional>

#include <json.hpp>

#include "pbmorl/metrics.hpp"
#include "pbmorl/reward_model.hpp"

namespace pbmorl {

enum class QRealization { Tabular, Network };

struct TrainerConfig {
  std::size_t feedback_interval = 500;  // K
  std::size_t queries = 300;            // N_s
  std::size_t query_weights = 10;       // N_w
  std::size_t learning_starts = 1000;   // T_0
  double gamma = 0.99;
  std::size_t batch = 256;
  double learning_rate = 3e-4;
  double tau = 1e-4;
  std::size_t total_steps = 1'000'000;
  std::size_t envelope_samples = 16;  // own weight plus up to this many minus one from the minibatch
  std::size_t gradient_steps = 1;     // Q updates per iteration
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.5;
  QRealization realization = QRealization::Tabular;
  std::size_t tabular_resolution = 10;
  double tabular_step_size = 1.0;
  Vector tabular_initial_value;  // empty: zeros
  std::vector<std::size_t> hidden{128, 128};
  std::size_t reward_steps = 200;  // gradient steps per feedback round
  std::size_t reward_batch = 256;
  double reward_learning_rate = 3e-4;
  bool reward_bounded = true;
  double recency_window = 0.1;
  std::size_t replay_capacity = 100'000;
  std::size_t eval_interval = 5000;  // 0: only at the end
  std::size_t eval_weights = 100;
  std::size_t eval_episodes = 1;
  std::uint64_t eval_seed = 12345;
  std::size_t segment_length = 0;  // 0: the environment default
};

namespace detail {

inline const char* realization_name(QRealization r) { return r == QRealization::Tabular ? "tabular" : "network"; }

}  // namespace detail

inline nlohmann::json to_json(const TrainerConfig& c) {
  return {{"feedback_interval", c.feedback_interval},
          {"queries", c.queries},
          {"query_weights", c.query_weights},
          {"learning_starts", c.learning_starts},
          {"gamma", c.gamma},
          {"batch", c.batch},
          {"learning_rate", c.learning_rate},
          {"tau", c.tau},
          {"total_steps", c.total_steps},
          {"envelope_samples", c.envelope_samples},
          {"gradient_steps", c.gradient_steps},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_fraction", c.epsilon_fraction},
          {"realization", detail::realization_name(c.realization)},
          {"tabular_resolution", c.tabular_resolution},
          {"tabular_step_size", c.tabular_step_size},
          {"tabular_initial_value", c.tabular_initial_value},
          {"hidden", c.hidden},
          {"reward_steps", c.reward_steps},
          {"reward_batch", c.reward_batch},
          {"reward_learning_rate", c.reward_learning_rate},
          {"reward_bounded", c.reward_bounded},
          {"recency_window", c.recency_window},
          {"replay_capacity", c.replay_capacity},
          {"eval_interval", c.eval_interval},
          {"eval_weights", c.eval_weights},
          {"eval_episodes", c.eval_episodes},
          {"eval_seed", c.eval_seed},
          {"segment_length", c.segment_length}};
}

inline void validate(const TrainerConfig& c) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(Errc::ConfigError, std::string("trainer.") + name + " must be positive");
  };
  positive(c.feedback_interval, "feedback_interval");
  positive(c.queries, "queries");
  positive(c.query_weights, "query_weights");
  positive(c.batch, "batch");
  positive(c.envelope_samples, "envelope_samples");
  positive(c.reward_batch, "reward_batch");
  positive(c.replay_capacity, "replay_capacity");
  positive(c.eval_weights, "eval_weights");
  positive(c.eval_episodes, "eval_episodes");
  positive(c.tabular_resolution, "tabular_resolution");
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw Error(Errc::ConfigError, "trainer.gamma must lie in (0,1)");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw Error(Errc::ConfigError, "trainer.tau must lie in (0,1]");
  if (!(c.learning_rate > 0.0) || !(c.reward_learning_rate > 0.0)) {
    throw Error(Errc::ConfigError, "learning rates must be positive");
  }
  if (!(c.tabular_step_size > 0.0 && c.tabular_step_size <= 1.0)) {
    throw Error(Errc::ConfigError, "trainer.tabular_step_size must lie in (0,1]");
  }
  if (!(c.recency_window > 0.0 && c.recency_window <= 1.0)) {
    throw Error(Errc::ConfigError, "trainer.recency_window must lie in (0,1]");
  }
  if (!(c.epsilon_fraction >= 0.0 && c.epsilon_fraction <= 1.0) || c.epsilon_start < 0.0 || c.epsilon_start > 1.0 ||
      c.epsilon_end < 0.0 || c.epsilon_end > 1.0) {
    throw Error(Errc::ConfigError, "epsilon schedule outside [0,1]");
  }
  for (auto h : c.hidden) positive(h, "hidden");
}

/// Overlays the keys present in `j` onto `base`; unknown keys are rejected.
inline TrainerConfig trainer_config_from_json(const nlohmann::json& j, TrainerConfig base = {}) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "trainer config must be an object");
  const auto known = to_json(TrainerConfig{});
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.contains(key)) throw Error(Errc::ConfigError, "unknown trainer key '" + key + "'");
    }
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    read("feedback_interval", base.feedback_interval);
    read("queries", base.queries);
    read("query_weights", base.query_weights);
    read("learning_starts", base.learning_starts);
    read("gamma", base.gamma);
    read("batch", base.batch);
    read("learning_rate", base.learning_rate);
    read("tau", base.tau);
    read("total_steps", base.total_steps);
    read("envelope_samples", base.envelope_samples);
    read("gradient_steps", base.gradient_steps);
    read("epsilon_start", base.epsilon_start);
    read("epsilon_end", base.epsilon_end);
    read("epsilon_fraction", base.epsilon_fraction);
    if (j.contains("realization")) {
      const auto r = j.at("realization").get<std::string>();
      if (r == "tabular") {
        base.realization = QRealization::Tabular;
      } else if (r == "network") {
        base.realization = QRealization::Network;
      } else {
        throw Error(Errc::ConfigError, "trainer.realization must be 'tabular' or 'network'");
      }
    }
    read("tabular_resolution", base.tabular_resolution);
    read("tabular_step_size", base.tabular_step_size);
    read("tabular_initial_value", base.tabular_initial_value);
    read("hidden", base.hidden);
    read("reward_steps", base.reward_steps);
    read("reward_batch", base.reward_batch);
    read("reward_learning_rate", base.reward_learning_rate);
    read("reward_bounded", base.reward_bounded);
    read("recency_window", base.recency_window);
    read("replay_capacity", base.replay_capacity);
    read("eval_interval", base.eval_interval);
    read("eval_weights", base.eval_weights);
    read("eval_episodes", base.eval_episodes);
    read("eval_seed", base.eval_seed);
    read("segment_length", base.segment_length);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  validate(base);
  return base;
}

// ---------------------------------------------------------------------------
// Overseers
// ---------------------------------------------------------------------------

/// Labels every query immediately with a synchronous oracle.
class ScriptedOverseer final : public Overseer {
 public:
  explicit ScriptedOverseer(std::shared_ptr<const PreferenceOracle> oracle) : oracle_(std::move(oracle)) {}
  explicit ScriptedOverseer(DiscountConfig cfg) : oracle_(std::make_shared<ScriptedTeacher>(cfg)) {}

  void submit(std::vector<TeacherQuery> queries, PreferenceBuffer& prefs) override {
    for (auto& q : queries) {
      const double label = oracle_->prefer(q.first, q.second, q.weight);
      prefs.push(make_preference(std::move(q.first), std::move(q.second), q.weight, label));
    }
  }
  [[nodiscard]] bool synchronous() const noexcept override { return true; }

 private:
  std::shared_ptr<const PreferenceOracle> oracle_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct RunArtifacts {
  std::unique_ptr<QFunction> q;
  std::optional<RewardModel> reward_model;
  std::vector<nlohmann::json> metrics;  // one record per evaluation
  std::vector<nlohmann::json> events;   // feedback rounds and skips
  std::size_t preference_records = 0;
  std::size_t steps_done = 0;
  double final_eu = 0.0;
  double final_hv = 0.0;
};

struct RunHooks {
  std::function<void(const nlohmann::json&)> on_metric;
  std::function<void(const nlohmann::json&)> on_event;
  std::function<bool()> should_stop;                      // polled once per iteration
  std::function<void(std::size_t step)> on_step;          // after each iteration
  PreferenceBuffer* preference_buffer = nullptr;          // external buffer (HTTP teacher)
  Snapshot<RewardModel>* model_snapshot = nullptr;        // published after each round
  std::function<void(const nlohmann::json&)> on_status;  // latest step/eu/hv
  // After each evaluation; the model is null for the oracle baseline.
  std::function<void(std::size_t step, const QFunction&, const RewardModel*)> on_checkpoint;
};

namespace detail {

// Independent random streams derived from the run seed.
enum Stream : std::uint64_t {
  kActions = 1,
  kEpisodeWeights = 2,
  kMinibatch = 3,
  kRewardTraining = 4,
  kQueries = 5,
  kRewardInit = 6,
  kQInit = 7,
  kEnvironment = 1000,
};

inline std::unique_ptr<QFunction> make_q(const Environment& env, const TrainerConfig& cfg, std::uint64_t seed) {
  const auto& spec = env.spec();
  if (cfg.realization == QRealization::Tabular) {
    if (!spec.discrete_states()) throw Error(Errc::ConfigError, spec.name + " needs the network realization");
    return std::make_unique<TabularQ>(spec.state_count, spec.action_count, spec.objectives, cfg.tabular_resolution,
                                      cfg.tabular_step_size, cfg.tabular_initial_value);
  }
  return make_network_q(env, cfg.hidden, cfg.learning_rate, mix_seed(seed, kQInit));
}

inline double epsilon_at(const TrainerConfig& cfg, std::size_t t) {
  const double span = cfg.epsilon_fraction * static_cast<double>(cfg.total_steps);
  if (span <= 0.0) return cfg.epsilon_end;
  const double frac = static_cast<double>(t) / span;
  if (frac >= 1.0) return cfg.epsilon_end;
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

struct Evaluation {
  double eu = 0.0;
  double hv = 0.0;
  std::vector<ReturnVector> per_weight;
};

inline Evaluation evaluate(const QFunction& q, const Environment& prototype, const TrainerConfig& cfg) {
  const DiscountConfig discount{cfg.gamma};
  const std::size_t m = prototype.spec().objectives;
  auto env = prototype.clone();
  Evaluation ev;
  ev.eu = expected_utility(
      [&](const Weight& w) {
        return weighted_return(evaluate_policy(q, *env, w, discount, cfg.eval_episodes, cfg.eval_seed), w);
      },
      cfg.eval_weights, m, cfg.eval_seed);
  const auto grid = evaluation_grid(m);
  const auto frontier = frontier_from_policy(q, prototype, grid, discount, cfg.eval_episodes, cfg.eval_seed,
                                             &ev.per_weight);
  ev.hv = hypervolume(frontier);
  return ev;
}

inline nlohmann::json metric_record(std::size_t step, const Evaluation& ev) {
  nlohmann::json returns = nlohmann::json::array();
  for (const auto& r : ev.per_weight) returns.push_back(r.values);
  return {{"step", step}, {"eu", ev.eu}, {"hv", ev.hv}, {"returns", returns}};
}

inline std::vector<Weight> shared_envelope_weights(std::span<const Transition> batch, std::size_t cap) {
  std::vector<Weight> out;
  for (const auto& t : batch) {
    if (out.size() + 1 >= cap) break;
    if (std::find(out.begin(), out.end(), t.weight) == out.end()) out.push_back(t.weight);
  }
  return out;
}

inline nlohmann::json round_event(std::size_t step, std::size_t submitted, std::size_t records,
                                  const std::optional<RewardTrainingReport>& report) {
  nlohmann::json e{{"event", "feedback"}, {"step", step}, {"queries", submitted}, {"records", records}};
  if (report) {
    e["initial_loss"] = report->initial_loss;
    e["final_loss"] = report->final_loss;
    if (report->train_accuracy) e["train_accuracy"] = *report->train_accuracy;
    if (report->validation_accuracy) e["validation_accuracy"] = *report->validation_accuracy;
  } else {
    e["skipped"] = "no labels yet";
  }
  return e;
}

/**
 * @brief Shared loop. Without an overseer, transitions carry true rewards
 *        and no reward model is learned (oracle baseline).
 */
inline RunArtifacts run_loop(const Environment& prototype, Overseer* overseer, const TrainerConfig& cfg,
                             std::uint64_t seed, const RunHooks& hooks) {
  validate(cfg);
  const DiscountConfig discount{cfg.gamma};
  const auto& spec = prototype.spec();
  const std::size_t m = spec.objectives;
  const std::size_t horizon = cfg.segment_length ? cfg.segment_length : spec.segment_length;

  auto env = prototype.clone();
  RunArtifacts art;
  art.q = make_q(prototype, cfg, seed);
  std::unique_ptr<QFunction> target = cfg.tau >= 1.0 ? nullptr : art.q->clone();
  // With tau = 1 the target would equal the online table at every backup.
  auto target_q = [&]() -> const QFunction& { return target ? *target : *art.q; };

  if (overseer) {
    RewardModelConfig rcfg;
    rcfg.hidden = cfg.hidden;
    rcfg.bounded_output = cfg.reward_bounded;
    rcfg.learning_rate = cfg.reward_learning_rate;
    art.reward_model.emplace(make_reward_model(prototype, rcfg, mix_seed(seed, kRewardInit)));
  }
  std::optional<WeightLattice> lattice;
  if (cfg.realization == QRealization::Tabular) lattice.emplace(m, cfg.tabular_resolution);

  ReplayBuffer replay(cfg.replay_capacity);
  PreferenceBuffer own_prefs;
  PreferenceBuffer& prefs = hooks.preference_buffer ? *hooks.preference_buffer : own_prefs;

  Rng action_rng(mix_seed(seed, kActions));
  Rng weight_rng(mix_seed(seed, kEpisodeWeights));
  Rng batch_rng(mix_seed(seed, kMinibatch));
  Rng reward_rng(mix_seed(seed, kRewardTraining));
  Rng query_rng(mix_seed(seed, kQueries));
  std::uniform_int_distribution<std::size_t> random_action(0, spec.action_count - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto draw_weight = [&]() {
    Weight w = sample_weights(1, m, weight_rng).front();
    return lattice ? lattice->point(lattice->nearest(w)) : w;
  };
  auto emit_event = [&](nlohmann::json e) {
    if (hooks.on_event) hooks.on_event(e);
    art.events.push_back(std::move(e));
  };
  auto emit_metric = [&](std::size_t step) {
    const auto ev = evaluate(*art.q, prototype, cfg);
    auto record = metric_record(step, ev);
    art.final_eu = ev.eu;
    art.final_hv = ev.hv;
    if (hooks.on_metric) hooks.on_metric(record);
    if (hooks.on_status) hooks.on_status({{"step", step}, {"eu", ev.eu}, {"hv", ev.hv}});
    art.metrics.push_back(std::move(record));
    if (hooks.on_checkpoint) hooks.on_checkpoint(step, *art.q, art.reward_model ? &*art.reward_model : nullptr);
  };

  std::uint64_t episode = 0;
  std::size_t episode_step = 0;
  QueryId next_query = 1;
  Weight w = draw_weight();
  State s = env->reset(mix_seed(seed, kEnvironment + episode));

  for (std::size_t t = 0; t < cfg.total_steps; ++t) {
    if (hooks.should_stop && hooks.should_stop()) {
      emit_event({{"event", "stopped"}, {"step", t}});
      const bool evaluated = !art.metrics.empty() && art.metrics.back()["step"].get<std::size_t>() == t;
      if (t > 0 && !evaluated) emit_metric(t);
      break;
    }
    std::size_t a = 0;
    if (t < cfg.learning_starts || unit(action_rng) < epsilon_at(cfg, t)) {
      a = random_action(action_rng);
    } else {
      a = greedy_action(*art.q, s, w);
    }
    const StepOutcome out = env->step(a);
    replay.push(Transition{.state = s,
                           .action = a,
                           .next_state = out.next_state,
                           .reward_estimate = art.reward_model ? art.reward_model->predict_reward(s, a) : out.reward,
                           .true_reward = out.reward,
                           .weight = w,
                           .terminal = out.terminated,
                           .episode_id = episode,
                           .step_index = episode_step});

    if (out.terminated || out.truncated) {
      ++episode;
      episode_step = 0;
      w = draw_weight();
      s = env->reset(mix_seed(seed, kEnvironment + episode));
    } else {
      ++episode_step;
      s = out.next_state;
    }

    const std::size_t done = t + 1;
    if (overseer && done % cfg.feedback_interval == 0 && done >= cfg.learning_starts) {
      std::vector<std::pair<Segment, Segment>> pairs;
      try {
        pairs = replay.sample_query_pairs(cfg.queries, horizon, cfg.recency_window, query_rng);
      } catch (const Error& e) {
        if (e.code() != Errc::InsufficientData) throw;
        emit_event({{"event", "feedback"}, {"step", done}, {"skipped", e.what()}});
        pairs.clear();
      }
      if (!pairs.empty()) {
        const auto weights = sample_weights(cfg.query_weights, m, query_rng);
        std::vector<TeacherQuery> queries;
        queries.reserve(pairs.size() * weights.size());
        for (const auto& [first, second] : pairs) {
          for (const auto& qw : weights) {
            queries.push_back(TeacherQuery{next_query++, first, second, qw, std::chrono::steady_clock::now()});
          }
        }
        const std::size_t submitted = queries.size();
        overseer->submit(std::move(queries), prefs);
        std::optional<RewardTrainingReport> report;
        if (prefs.size() > 0) {
          report = train_reward_model(*art.reward_model, prefs, cfg.reward_steps, reward_rng, cfg.reward_batch,
                                      discount);
          const RewardModel& model = *art.reward_model;
          replay.relabel_all([&](const State& st, std::size_t act) { return model.predict_reward(st, act); });
          if (hooks.model_snapshot) hooks.model_snapshot->publish(model);
        }
        emit_event(round_event(done, submitted, prefs.size(), report));
      }
    }

    if (done >= cfg.learning_starts) {
      for (std::size_t g = 0; g < cfg.gradient_steps; ++g) {
        const auto batch = replay.sample_minibatch(cfg.batch, batch_rng);
        const auto shared = shared_envelope_weights(batch, cfg.envelope_samples);
        std::vector<Vector> targets;
        std::vector<std::uint8_t> grounded;
        targets.reserve(batch.size());
        grounded.reserve(batch.size());
        const QFunction& tq = target_q();
        std::vector<Weight> samples;
        for (const auto& b : batch) {
          samples.assign(1, b.weight);
          for (const auto& sw : shared) {
            if (!(sw == b.weight)) samples.push_back(sw);
          }
          bool g = true;
          targets.push_back(envelope_backup(tq, b, b.weight, discount, samples, &g));
          grounded.push_back(g ? 1 : 0);
        }
        art.q->td_step(batch, targets, grounded);
        if (target) target->soft_update_from(*art.q, cfg.tau);
      }
    }

    art.steps_done = done;
    if (hooks.on_step) hooks.on_step(done);
    if ((cfg.eval_interval > 0 && done % cfg.eval_interval == 0) || done == cfg.total_steps) emit_metric(done);
  }
  art.preference_records = prefs.size();
  return art;
}

}  // namespace detail

inline RunArtifacts run_pbmorl(const Environment& env, Overseer& overseer, const TrainerConfig& cfg,
                               std::uint64_t seed, const RunHooks& hooks = {}) {
  return detail::run_loop(env, &overseer, cfg, seed, hooks);
}

/// Scripted-teacher convenience overload.
inline RunArtifacts run_pbmorl(const Environment& env, const TrainerConfig& cfg, std::uint64_t seed,
                               const RunHooks& hooks = {}) {
  ScriptedOverseer overseer(DiscountConfig{cfg.gamma});
  return detail::run_loop(env, &overseer, cfg, seed, hooks);
}

/// Same loop on true rewards: no queries, no reward model, no relabeling.
inline RunArtifacts run_eql_oracle(const Environment& env, const TrainerConfig& cfg, std::uint64_t seed,
                                   const RunHooks& hooks = {}) {
  return detail::run_loop(env, nullptr, cfg, seed, hooks);
}

}  // namespace pbmorl
