/**
 * @file run_config.hpp
 * @brief Top-level run configuration file: environment choice, seed,
 *        environment parameters and trainer settings. Schema in
 *        docs/config_schema.md.
 */
#pragma once

#include "pbmorl/trainer.hpp"

namespace pbmorl {

struct RunConfig {
  std::string env = "ft";
  std::uint64_t seed = 1;
  EnvironmentConfig environment;
  TrainerConfig trainer;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"env", c.env}, {"seed", c.seed}, {"environment", to_json(c.environment)}, {"trainer", to_json(c.trainer)}};
}

/// Overlays `j` onto `base`. Unknown keys at any level are errors.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "run config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "env" && key != "seed" && key != "environment" && key != "trainer") {
      throw Error(Errc::ConfigError, "unknown run config key '" + key + "'");
    }
  }
  try {
    if (j.contains("env")) base.env = j.at("env").get<std::string>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  if (j.contains("environment")) {
    // Environment sections replace field by field on top of the current values.
    auto merged = to_json(base.environment);
    merged.merge_patch(j.at("environment"));
    base.environment = environment_config_from_json(merged);
  }
  if (j.contains("trainer")) base.trainer = trainer_config_from_json(j.at("trainer"), base.trainer);
  validate(base.trainer);
  return base;
}

/**
 * @brief Applies one `path=value` override, e.g. `trainer.batch=32` or
 *        `environment.dst.segment_length=5`. The value is parsed as JSON and
 *        falls back to a plain string.
 */
inline RunConfig apply_override(const RunConfig& base, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::ConfigError, "override '" + assignment + "' needs key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    value = text;
  }
  nlohmann::json patch = value;
  std::vector<std::string> keys;
  for (std::size_t start = 0;;) {
    const auto dot = path.find('.', start);
    keys.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) {
    if (it->empty()) throw Error(Errc::ConfigError, "empty key in override '" + path + "'");
    patch = nlohmann::json{{*it, patch}};
  }
  return run_config_from_json(patch, base);
}

}  // namespace pbmorl
