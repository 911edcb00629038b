/**
 * @file checkpoint.hpp
 * @brief Single-file JSON checkpoints: Q function, reward model, and the
 *        configuration needed to rebuild both. Layout in
 *        docs/checkpoint_format.md.
 */
#pragma once

#include <filesystem>
#include <fstream>

#include "pbmorl/trainer.hpp"

namespace pbmorl {

struct Checkpoint {
  std::string env;
  EnvironmentConfig env_config;
  TrainerConfig trainer;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  nlohmann::json q;
  std::optional<nlohmann::json> reward_model;
};

inline nlohmann::json to_json(const Checkpoint& c) {
  return {{"format", "pbmorl.checkpoint"},
          {"version", 1},
          {"env", c.env},
          {"environment", to_json(c.env_config)},
          {"trainer", to_json(c.trainer)},
          {"seed", c.seed},
          {"step", c.step},
          {"q", c.q},
          {"reward_model", c.reward_model ? *c.reward_model : nlohmann::json(nullptr)}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "pbmorl.checkpoint" || j.value("version", 0) != 1) {
      throw Error(Errc::ParseError, "not a version-1 pbmorl checkpoint");
    }
    Checkpoint c;
    c.env = j.at("env").get<std::string>();
    c.env_config = environment_config_from_json(j.at("environment"));
    c.trainer = trainer_config_from_json(j.at("trainer"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.step = j.at("step").get<std::size_t>();
    c.q = j.at("q");
    if (!j.at("reward_model").is_null()) c.reward_model = j.at("reward_model");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, std::string("checkpoint: ") + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::ConfigError, "cannot write " + tmp);
    out << j.dump(indent) << '\n';
    if (!out) throw Error(Errc::ConfigError, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_json_file(path, to_json(c)); }

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_json(read_json_file(path));
}

/// Rebuilds the checkpointed Q function against a fresh environment.
inline std::unique_ptr<QFunction> restore_q(const Checkpoint& c, const Environment& env) {
  auto q = detail::make_q(env, c.trainer, c.seed);
  q->load_json(c.q);
  return q;
}

inline std::optional<RewardModel> restore_reward_model(const Checkpoint& c, const Environment& env) {
  if (!c.reward_model) return std::nullopt;
  RewardModelConfig rcfg;
  rcfg.hidden = c.trainer.hidden;
  rcfg.bounded_output = c.trainer.reward_bounded;
  rcfg.learning_rate = c.trainer.reward_learning_rate;
  auto model = make_reward_model(env, rcfg, c.seed);
  model.load_json(*c.reward_model);
  return model;
}

}  // namespace pbmorl
