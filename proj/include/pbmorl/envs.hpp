/**
 * @file envs.hpp
 * @brief Multi-objective benchmark environments behind one episodic interface:
 *        Deep Sea Treasure, Fruit Tree, Resource Gathering and Energy Storage.
 *
 * Every environment is a deterministic function of (state, action, seed).
 * Layouts and process parameters are configuration data with bundled
 * defaults; see docs/config_schema.md.
 */
#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbmorl/core.hpp"

namespace pbmorl {

struct EnvSpec {
  std::string name;
  std::size_t objectives = 2;
  std::size_t state_count = 0;    // 0 for the real-valued energy state
  std::size_t feature_count = 0;  // width of the real-valued state
  std::size_t action_count = 0;
  std::vector<std::string> action_names;
  std::size_t max_episode_length = 1;
  std::size_t segment_length = 1;
  Vector hv_reference;
  Vector reward_bound;  // max |r_i| per objective

  [[nodiscard]] bool discrete_states() const noexcept { return state_count > 0; }
  /// Largest |w.r| over the simplex and the reward table.
  [[nodiscard]] double reward_magnitude() const {
    return reward_bound.empty() ? 0.0 : *std::max_element(reward_bound.begin(), reward_bound.end());
  }
};

struct StepOutcome {
  State next_state;
  Vector reward;
  bool terminated = false;
  bool truncated = false;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GridCell {
  int row = 0;
  int col = 0;
  bool operator==(const GridCell&) const = default;
};

struct Treasure {
  GridCell cell;
  double value = 0.0;
};

struct DstConfig {
  int rows = 11;
  int cols = 10;
  // Classic layout: one treasure per column, value growing with distance.
  std::vector<Treasure> treasures{{{1, 0}, 1.0},  {{2, 1}, 2.0},  {{3, 2}, 3.0},  {{4, 3}, 5.0},
                                  {{4, 4}, 8.0},  {{4, 5}, 16.0}, {{7, 6}, 24.0}, {{7, 7}, 50.0},
                                  {{9, 8}, 74.0}, {{10, 9}, 124.0}};
  std::size_t max_episode_length = 100;
  std::size_t segment_length = 7;
};

struct FtConfig {
  int depth = 6;
  std::uint64_t leaf_seed = 2024;
  std::size_t segment_length = 6;
};

struct RgConfig {
  int rows = 5;
  int cols = 5;
  GridCell home{4, 2};
  GridCell gold{0, 2};
  GridCell gem{1, 4};
  std::vector<GridCell> enemies{{0, 3}, {1, 2}};
  double death_probability = 0.1;
  std::size_t max_episode_length = 100;
  std::size_t segment_length = 10;
};

struct RandomWalk {
  double low = 0.0;
  double high = 1.0;
  double step = 0.1;
};

struct EnergyConfig {
  double storage_max = 10.0;
  double initial_storage = 5.0;
  double action_bound = 5.0;
  std::vector<double> action_levels{-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0};
  RandomWalk renewable{0.0, 5.0, 1.0};
  RandomWalk demand{0.0, 5.0, 1.0};
  RandomWalk price{0.5, 2.0, 0.25};
  std::size_t max_episode_length = 50;
  std::size_t segment_length = 10;
};

struct EnvironmentConfig {
  DstConfig dst;
  FtConfig ft;
  RgConfig rg;
  EnergyConfig energy;
};

namespace detail {

inline void require_object(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw Error(Errc::ConfigError, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) { return key == k; }) == keys.end()) {
      throw Error(Errc::ConfigError, "unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, where + "." + key + ": " + e.what());
  }
}

inline GridCell read_cell(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw Error(Errc::ConfigError, where + " must be [row, col]");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

inline RandomWalk read_walk(const nlohmann::json& j, const std::string& where) {
  require_object(j, where, {"low", "high", "step"});
  RandomWalk w;
  read_field(j, "low", w.low, where);
  read_field(j, "high", w.high, where);
  read_field(j, "step", w.step, where);
  if (!(w.low <= w.high) || w.step < 0.0) throw Error(Errc::ConfigError, where + " needs low <= high, step >= 0");
  return w;
}

inline nlohmann::json cell_json(GridCell c) { return nlohmann::json::array({c.row, c.col}); }

inline bool in_grid(GridCell c, int rows, int cols) {
  return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
}

}  // namespace detail

inline EnvironmentConfig environment_config_from_json(const nlohmann::json& j) {
  using namespace detail;
  EnvironmentConfig cfg;
  require_object(j, "config", {"dst", "ft", "rg", "energy"});
  if (j.contains("dst")) {
    const auto& d = j["dst"];
    require_object(d, "dst", {"rows", "cols", "treasures", "max_episode_length", "segment_length"});
    read_field(d, "rows", cfg.dst.rows, "dst");
    read_field(d, "cols", cfg.dst.cols, "dst");
    read_field(d, "max_episode_length", cfg.dst.max_episode_length, "dst");
    read_field(d, "segment_length", cfg.dst.segment_length, "dst");
    if (d.contains("treasures")) {
      if (!d["treasures"].is_array() || d["treasures"].empty()) throw Error(Errc::ConfigError, "dst.treasures");
      cfg.dst.treasures.clear();
      for (const auto& t : d["treasures"]) {
        require_object(t, "dst.treasures[]", {"cell", "value"});
        if (!t.contains("cell") || !t.contains("value")) throw Error(Errc::ConfigError, "treasure needs cell and value");
        Treasure tr;
        tr.cell = read_cell(t["cell"], "dst.treasures[].cell");
        read_field(t, "value", tr.value, "dst.treasures[]");
        cfg.dst.treasures.push_back(tr);
      }
    }
  }
  if (j.contains("ft")) {
    const auto& f = j["ft"];
    require_object(f, "ft", {"depth", "leaf_seed", "segment_length"});
    read_field(f, "depth", cfg.ft.depth, "ft");
    read_field(f, "leaf_seed", cfg.ft.leaf_seed, "ft");
    read_field(f, "segment_length", cfg.ft.segment_length, "ft");
  }
  if (j.contains("rg")) {
    const auto& r = j["rg"];
    require_object(r, "rg", {"rows", "cols", "home", "gold", "gem", "enemies", "death_probability",
                             "max_episode_length", "segment_length"});
    read_field(r, "rows", cfg.rg.rows, "rg");
    read_field(r, "cols", cfg.rg.cols, "rg");
    if (r.contains("home")) cfg.rg.home = read_cell(r["home"], "rg.home");
    if (r.contains("gold")) cfg.rg.gold = read_cell(r["gold"], "rg.gold");
    if (r.contains("gem")) cfg.rg.gem = read_cell(r["gem"], "rg.gem");
    if (r.contains("enemies")) {
      if (!r["enemies"].is_array()) throw Error(Errc::ConfigError, "rg.enemies must be an array");
      cfg.rg.enemies.clear();
      for (const auto& e : r["enemies"]) cfg.rg.enemies.push_back(read_cell(e, "rg.enemies[]"));
    }
    read_field(r, "death_probability", cfg.rg.death_probability, "rg");
    read_field(r, "max_episode_length", cfg.rg.max_episode_length, "rg");
    read_field(r, "segment_length", cfg.rg.segment_length, "rg");
  }
  if (j.contains("energy")) {
    const auto& e = j["energy"];
    require_object(e, "energy", {"storage_max", "initial_storage", "action_bound", "action_levels", "renewable",
                                 "demand", "price", "max_episode_length", "segment_length"});
    read_field(e, "storage_max", cfg.energy.storage_max, "energy");
    read_field(e, "initial_storage", cfg.energy.initial_storage, "energy");
    read_field(e, "action_bound", cfg.energy.action_bound, "energy");
    read_field(e, "action_levels", cfg.energy.action_levels, "energy");
    if (e.contains("renewable")) cfg.energy.renewable = read_walk(e["renewable"], "energy.renewable");
    if (e.contains("demand")) cfg.energy.demand = read_walk(e["demand"], "energy.demand");
    if (e.contains("price")) cfg.energy.price = read_walk(e["price"], "energy.price");
    read_field(e, "max_episode_length", cfg.energy.max_episode_length, "energy");
    read_field(e, "segment_length", cfg.energy.segment_length, "energy");
  }
  return cfg;
}

inline nlohmann::json to_json(const EnvironmentConfig& cfg) {
  using detail::cell_json;
  nlohmann::json treasures = nlohmann::json::array();
  for (const auto& t : cfg.dst.treasures) treasures.push_back({{"cell", cell_json(t.cell)}, {"value", t.value}});
  nlohmann::json enemies = nlohmann::json::array();
  for (const auto& e : cfg.rg.enemies) enemies.push_back(cell_json(e));
  auto walk = [](const RandomWalk& w) { return nlohmann::json{{"low", w.low}, {"high", w.high}, {"step", w.step}}; };
  return {
      {"dst",
       {{"rows", cfg.dst.rows},
        {"cols", cfg.dst.cols},
        {"treasures", treasures},
        {"max_episode_length", cfg.dst.max_episode_length},
        {"segment_length", cfg.dst.segment_length}}},
      {"ft", {{"depth", cfg.ft.depth}, {"leaf_seed", cfg.ft.leaf_seed}, {"segment_length", cfg.ft.segment_length}}},
      {"rg",
       {{"rows", cfg.rg.rows},
        {"cols", cfg.rg.cols},
        {"home", cell_json(cfg.rg.home)},
        {"gold", cell_json(cfg.rg.gold)},
        {"gem", cell_json(cfg.rg.gem)},
        {"enemies", enemies},
        {"death_probability", cfg.rg.death_probability},
        {"max_episode_length", cfg.rg.max_episode_length},
        {"segment_length", cfg.rg.segment_length}}},
      {"energy",
       {{"storage_max", cfg.energy.storage_max},
        {"initial_storage", cfg.energy.initial_storage},
        {"action_bound", cfg.energy.action_bound},
        {"action_levels", cfg.energy.action_levels},
        {"renewable", walk(cfg.energy.renewable)},
        {"demand", walk(cfg.energy.demand)},
        {"price", walk(cfg.energy.price)},
        {"max_episode_length", cfg.energy.max_episode_length},
        {"segment_length", cfg.energy.segment_length}}},
  };
}

// ---------------------------------------------------------------------------
// Deep Sea Treasure
// ---------------------------------------------------------------------------

enum class GridAction : std::size_t { Up = 0, Down = 1, Left = 2, Right = 3 };

inline const std::vector<std::string>& grid_action_names() {
  static const std::vector<std::string> names{"up", "down", "left", "right"};
  return names;
}

inline GridCell move_cell(GridCell c, std::size_t action) {
  switch (static_cast<GridAction>(action)) {
    case GridAction::Up: return {c.row - 1, c.col};
    case GridAction::Down: return {c.row + 1, c.col};
    case GridAction::Left: return {c.row, c.col - 1};
    case GridAction::Right: return {c.row, c.col + 1};
  }
  throw Error(Errc::ActionOutOfRange, "grid action " + std::to_string(action));
}

/// Cell classification for the treasure grid: cells below a treasure are seabed.
class DstLayout {
 public:
  enum class Cell { Water, Treasure, Seabed };

  explicit DstLayout(DstConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.rows <= 0 || cfg_.cols <= 0) throw Error(Errc::ConfigError, "dst grid size");
    if (cfg_.max_episode_length < cfg_.segment_length || cfg_.segment_length == 0) {
      throw Error(Errc::ConfigError, "dst needs max_episode_length >= segment_length >= 1");
    }
    cells_.assign(static_cast<std::size_t>(cfg_.rows * cfg_.cols), Cell::Water);
    values_.assign(cells_.size(), 0.0);
    for (const auto& t : cfg_.treasures) {
      if (!detail::in_grid(t.cell, cfg_.rows, cfg_.cols)) throw Error(Errc::ConfigError, "treasure outside grid");
      if (t.cell == GridCell{0, 0}) throw Error(Errc::ConfigError, "treasure on the start cell");
      cells_[flat(t.cell)] = Cell::Treasure;
      values_[flat(t.cell)] = t.value;
      for (int r = t.cell.row + 1; r < cfg_.rows; ++r) cells_[flat({r, t.cell.col})] = Cell::Seabed;
    }
  }

  [[nodiscard]] const DstConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t flat(GridCell c) const {
    return static_cast<std::size_t>(c.row * cfg_.cols + c.col);
  }
  [[nodiscard]] GridCell cell_of(std::size_t index) const {
    return {static_cast<int>(index) / cfg_.cols, static_cast<int>(index) % cfg_.cols};
  }
  [[nodiscard]] Cell kind(GridCell c) const { return cells_.at(flat(c)); }
  [[nodiscard]] double treasure_value(GridCell c) const { return values_.at(flat(c)); }
  [[nodiscard]] bool in_grid(GridCell c) const { return detail::in_grid(c, cfg_.rows, cfg_.cols); }
  [[nodiscard]] double max_treasure() const {
    double best = 0.0;
    for (const auto& t : cfg_.treasures) best = std::max(best, std::abs(t.value));
    return best;
  }

 private:
  DstConfig cfg_;
  std::vector<Cell> cells_;
  std::vector<double> values_;
};

/// One move; reward is (treasure value or 0, -1) and a treasure cell ends the episode.
inline StepOutcome dst_step(const DstLayout& layout, GridCell cell, std::size_t action) {
  if (!layout.in_grid(cell) || layout.kind(cell) != DstLayout::Cell::Water) {
    throw Error(Errc::InvalidCell, "dst cell (" + std::to_string(cell.row) + "," + std::to_string(cell.col) + ")");
  }
  if (action >= 4) throw Error(Errc::ActionOutOfRange, "dst action " + std::to_string(action));
  GridCell next = move_cell(cell, action);
  if (!layout.in_grid(next) || layout.kind(next) == DstLayout::Cell::Seabed) next = cell;
  StepOutcome out;
  out.next_state.index = layout.flat(next);
  const bool treasure = layout.kind(next) == DstLayout::Cell::Treasure;
  out.reward = {treasure ? layout.treasure_value(next) : 0.0, -1.0};
  out.terminated = treasure;
  return out;
}

// ---------------------------------------------------------------------------
// Fruit Tree
// ---------------------------------------------------------------------------

/// Full binary tree in heap order; leaves carry unit-norm nonnegative 6-vectors.
class FruitTree {
 public:
  static constexpr std::size_t kObjectives = 6;

  explicit FruitTree(FtConfig cfg) : cfg_(cfg) {
    if (cfg_.depth < 1 || cfg_.depth > 16) throw Error(Errc::ConfigError, "ft depth must be in [1,16]");
    if (cfg_.segment_length == 0 || cfg_.segment_length > static_cast<std::size_t>(cfg_.depth)) {
      throw Error(Errc::ConfigError, "ft segment_length must be in [1, depth]");
    }
    Rng rng(cfg_.leaf_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    leaves_.resize(leaf_count());
    for (auto& leaf : leaves_) {
      leaf.resize(kObjectives);
      double norm = 0.0;
      do {
        norm = 0.0;
        for (auto& x : leaf) {
          x = unit(rng);
          norm += x * x;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (auto& x : leaf) x /= norm;
    }
  }

  [[nodiscard]] const FtConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] std::size_t internal_count() const noexcept { return (std::size_t{1} << cfg_.depth) - 1; }
  [[nodiscard]] std::size_t leaf_count() const noexcept { return std::size_t{1} << cfg_.depth; }
  [[nodiscard]] std::size_t node_count() const noexcept { return internal_count() + leaf_count(); }
  [[nodiscard]] bool is_leaf(std::size_t node) const noexcept { return node >= internal_count(); }
  [[nodiscard]] const Vector& leaf_reward(std::size_t node) const { return leaves_.at(node - internal_count()); }
  [[nodiscard]] const std::vector<Vector>& leaves() const noexcept { return leaves_; }
  [[nodiscard]] std::size_t depth_of(std::size_t node) const {
    std::size_t d = 0;
    for (std::size_t n = node + 1; n > 1; n >>= 1) ++d;
    return d;
  }

 private:
  FtConfig cfg_;
  std::vector<Vector> leaves_;
};

/// Action 0 descends left (2i+1), action 1 right (2i+2).
inline StepOutcome ft_step(const FruitTree& tree, std::size_t node, std::size_t action) {
  if (node >= tree.node_count() || tree.is_leaf(node)) {
    throw Error(Errc::InvalidCell, "ft node " + std::to_string(node) + " is not an internal node");
  }
  if (action >= 2) throw Error(Errc::ActionOutOfRange, "ft action " + std::to_string(action));
  StepOutcome out;
  const std::size_t next = 2 * node + 1 + action;
  out.next_state.index = next;
  if (tree.is_leaf(next)) {
    out.reward = tree.leaf_reward(next);
    out.terminated = true;
  } else {
    out.reward.assign(FruitTree::kObjectives, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resource Gathering
// ---------------------------------------------------------------------------

struct RgState {
  GridCell position;
  bool gold = false;
  bool gem = false;
  bool operator==(const RgState&) const = default;
};

class RgLayout {
 public:
  explicit RgLayout(RgConfig cfg) : cfg_(std::move(cfg)) {
    auto check = [&](GridCell c, const char* what) {
      if (!detail::in_grid(c, cfg_.rows, cfg_.cols)) throw Error(Errc::ConfigError, std::string("rg ") + what);
    };
    if (cfg_.rows <= 0 || cfg_.cols <= 0) throw Error(Errc::ConfigError, "rg grid size");
    check(cfg_.home, "home");
    check(cfg_.gold, "gold");
    check(cfg_.gem, "gem");
    for (const auto& e : cfg_.enemies) check(e, "enemy");
    if (!(cfg_.death_probability >= 0.0 && cfg_.death_probability <= 1.0)) {
      throw Error(Errc::ConfigError, "rg death_probability must be in [0,1]");
    }
    if (cfg_.max_episode_length < cfg_.segment_length || cfg_.segment_length == 0) {
      throw Error(Errc::ConfigError, "rg needs max_episode_length >= segment_length >= 1");
    }
  }

  [[nodiscard]] const RgConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] bool in_grid(GridCell c) const { return detail::in_grid(c, cfg_.rows, cfg_.cols); }
  [[nodiscard]] bool is_enemy(GridCell c) const {
    return std::find(cfg_.enemies.begin(), cfg_.enemies.end(), c) != cfg_.enemies.end();
  }
  [[nodiscard]] std::size_t state_count() const { return static_cast<std::size_t>(cfg_.rows * cfg_.cols) * 4; }
  [[nodiscard]] std::size_t index_of(const RgState& s) const {
    const auto cell = static_cast<std::size_t>(s.position.row * cfg_.cols + s.position.col);
    return (cell * 2 + (s.gold ? 1 : 0)) * 2 + (s.gem ? 1 : 0);
  }
  [[nodiscard]] RgState state_of(std::size_t index) const {
    RgState s;
    s.gem = (index % 2) == 1;
    s.gold = ((index / 2) % 2) == 1;
    const auto cell = static_cast<int>(index / 4);
    s.position = {cell / cfg_.cols, cell % cfg_.cols};
    return s;
  }

 private:
  RgConfig cfg_;
};

/**
 * @brief One move of the gathering task. `draw` is the injected uniform in
 *        [0,1) that decides the enemy encounter.
 */
inline StepOutcome rg_step(const RgLayout& layout, const RgState& state, std::size_t action, double draw) {
  if (!layout.in_grid(state.position)) throw Error(Errc::InvalidCell, "rg position outside the grid");
  if (action >= 4) throw Error(Errc::ActionOutOfRange, "rg action " + std::to_string(action));
  const auto& cfg = layout.config();
  RgState next = state;
  GridCell target = move_cell(state.position, action);
  if (layout.in_grid(target)) next.position = target;

  StepOutcome out;
  out.reward = {0.0, 0.0, 0.0};
  if (layout.is_enemy(next.position) && draw < cfg.death_probability) {
    next.gold = false;
    next.gem = false;
    out.reward[0] = -1.0;
    out.terminated = true;
  } else {
    if (next.position == cfg.gold) next.gold = true;
    if (next.position == cfg.gem) next.gem = true;
    if (next.position == cfg.home && (next.gold || next.gem)) {
      out.reward[1] = next.gold ? 1.0 : 0.0;
      out.reward[2] = next.gem ? 1.0 : 0.0;
      out.terminated = true;
    }
  }
  out.next_state.index = layout.index_of(next);
  return out;
}

// ---------------------------------------------------------------------------
// Energy storage
// ---------------------------------------------------------------------------

struct EnergyState {
  double storage = 0.0;
  double renewable = 0.0;
  double demand = 0.0;
  double price = 0.0;

  [[nodiscard]] Vector as_vector() const { return {storage, renewable, demand, price}; }
  static EnergyState from_vector(const Vector& v) {
    if (v.size() != 4) throw Error(Errc::DimensionMismatch, "energy state needs 4 features");
    return {v[0], v[1], v[2], v[3]};
  }
};

struct EnergyStepResult {
  Vector reward;
  double next_storage = 0.0;
  double charge_purchase = 0.0;
  double demand_purchase = 0.0;
};

inline double positive_part(double x) { return std::max(x, 0.0); }

/**
 * @brief Storage dynamics and purchase accounting for one discharge level `a`
 *        (negative values charge).
 *
 * r1 is the negated purchase cost so that larger is better; r2 = -1 when a
 * discharge actually happens (a > 0 with energy in storage).
 */
inline EnergyStepResult energy_step(const EnergyConfig& cfg, const EnergyState& s, double a) {
  if (!(std::abs(a) <= cfg.action_bound)) {
    throw Error(Errc::ActionOutOfRange, "energy action " + std::to_string(a));
  }
  EnergyStepResult out;
  out.charge_purchase = a < 0.0 ? positive_part(-a - positive_part(s.renewable - s.demand))
                                : positive_part(a - s.storage);
  out.demand_purchase = positive_part(positive_part(s.demand - s.renewable) - positive_part(a));
  const double cost = s.price * (out.demand_purchase + out.charge_purchase);
  const bool discharged = a > 0.0 && s.storage > 0.0;
  out.reward = {cost == 0.0 ? 0.0 : -cost, discharged ? -1.0 : 0.0};
  out.next_storage = std::min(cfg.storage_max, positive_part(s.storage - a));
  return out;
}

// ---------------------------------------------------------------------------
// Episodic interface
// ---------------------------------------------------------------------------

class Environment {
 public:
  virtual ~Environment() = default;

  [[nodiscard]] const EnvSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const State& current() const noexcept { return current_; }
  [[nodiscard]] std::size_t elapsed() const noexcept { return elapsed_; }

  virtual State reset(std::uint64_t seed) = 0;

  StepOutcome step(std::size_t action) {
    if (action >= spec_.action_count) throw Error(Errc::ActionOutOfRange, "action " + std::to_string(action));
    StepOutcome out = transition(action);
    ++elapsed_;
    out.truncated = !out.terminated && elapsed_ >= spec_.max_episode_length;
    current_ = out.next_state;
    return out;
  }

  [[nodiscard]] virtual std::unique_ptr<Environment> clone() const = 0;
  [[nodiscard]] virtual bool deterministic() const noexcept = 0;

  /// Reward-model input for a state-action pair.
  [[nodiscard]] virtual Features reward_features(const State& s, std::size_t action) const {
    if (s.index >= spec_.state_count || action >= spec_.action_count) {
      throw Error(Errc::EncodingError, "state/action outside " + spec_.name);
    }
    Features f;
    f.dim = spec_.state_count * spec_.action_count;
    f.hot = {s.index * spec_.action_count + action};
    return f;
  }

  /// Q-network state input; the weight is appended by the caller.
  [[nodiscard]] virtual Features state_features(const State& s) const {
    if (s.index >= spec_.state_count) throw Error(Errc::EncodingError, "state outside " + spec_.name);
    Features f;
    f.dim = spec_.state_count;
    f.hot = {s.index};
    return f;
  }

  [[nodiscard]] virtual std::string describe_state(const State& s) const = 0;
  [[nodiscard]] virtual std::optional<GridCell> grid_position(const State&) const { return std::nullopt; }

 protected:
  virtual StepOutcome transition(std::size_t action) = 0;

  EnvSpec spec_;
  State current_;
  std::size_t elapsed_ = 0;
};

class DeepSeaTreasureEnv final : public Environment {
 public:
  DeepSeaTreasureEnv(DstConfig cfg, const DiscountConfig& discount) : layout_(std::move(cfg)) {
    const auto& c = layout_.config();
    spec_.name = "dst";
    spec_.objectives = 2;
    spec_.state_count = static_cast<std::size_t>(c.rows * c.cols);
    spec_.action_count = 4;
    spec_.action_names = grid_action_names();
    spec_.max_episode_length = c.max_episode_length;
    spec_.segment_length = c.segment_length;
    const double horizon = static_cast<double>(c.max_episode_length);
    spec_.hv_reference = {0.0, -(1.0 - std::pow(discount.gamma, horizon)) / (1.0 - discount.gamma)};
    spec_.reward_bound = {layout_.max_treasure(), 1.0};
  }

  State reset(std::uint64_t) override {
    elapsed_ = 0;
    current_ = State{layout_.flat({0, 0}), {}};
    return current_;
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override {
    return std::make_unique<DeepSeaTreasureEnv>(*this);
  }
  [[nodiscard]] bool deterministic() const noexcept override { return true; }
  [[nodiscard]] const DstLayout& layout() const noexcept { return layout_; }

  [[nodiscard]] std::string describe_state(const State& s) const override {
    const auto c = layout_.cell_of(s.index);
    return "cell(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
  }
  [[nodiscard]] std::optional<GridCell> grid_position(const State& s) const override {
    return layout_.cell_of(s.index);
  }

 protected:
  StepOutcome transition(std::size_t action) override {
    return dst_step(layout_, layout_.cell_of(current_.index), action);
  }

 private:
  DstLayout layout_;
};

class FruitTreeEnv final : public Environment {
 public:
  explicit FruitTreeEnv(FtConfig cfg) : tree_(cfg) {
    spec_.name = "ft";
    spec_.objectives = FruitTree::kObjectives;
    spec_.state_count = tree_.node_count();
    spec_.action_count = 2;
    spec_.action_names = {"left", "right"};
    spec_.max_episode_length = static_cast<std::size_t>(cfg.depth);
    spec_.segment_length = cfg.segment_length;
    spec_.hv_reference.assign(FruitTree::kObjectives, 0.0);
    spec_.reward_bound.assign(FruitTree::kObjectives, 0.0);
    for (const auto& leaf : tree_.leaves()) {
      for (std::size_t i = 0; i < leaf.size(); ++i) spec_.reward_bound[i] = std::max(spec_.reward_bound[i], leaf[i]);
    }
  }

  State reset(std::uint64_t) override {
    elapsed_ = 0;
    current_ = State{0, {}};
    return current_;
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override { return std::make_unique<FruitTreeEnv>(*this); }
  [[nodiscard]] bool deterministic() const noexcept override { return true; }
  [[nodiscard]] const FruitTree& tree() const noexcept { return tree_; }

  [[nodiscard]] std::string describe_state(const State& s) const override {
    return "node " + std::to_string(s.index) + " (depth " + std::to_string(tree_.depth_of(s.index)) + ")";
  }

 protected:
  StepOutcome transition(std::size_t action) override { return ft_step(tree_, current_.index, action); }

 private:
  FruitTree tree_;
};

class ResourceGatheringEnv final : public Environment {
 public:
  explicit ResourceGatheringEnv(RgConfig cfg) : layout_(std::move(cfg)) {
    const auto& c = layout_.config();
    spec_.name = "rg";
    spec_.objectives = 3;
    spec_.state_count = layout_.state_count();
    spec_.action_count = 4;
    spec_.action_names = grid_action_names();
    spec_.max_episode_length = c.max_episode_length;
    spec_.segment_length = c.segment_length;
    spec_.hv_reference = {-1.0, 0.0, 0.0};
    spec_.reward_bound = {1.0, 1.0, 1.0};
  }

  State reset(std::uint64_t seed) override {
    rng_.seed(seed);
    elapsed_ = 0;
    current_ = State{layout_.index_of(RgState{layout_.config().home, false, false}), {}};
    return current_;
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override {
    return std::make_unique<ResourceGatheringEnv>(*this);
  }
  [[nodiscard]] bool deterministic() const noexcept override { return false; }
  [[nodiscard]] const RgLayout& layout() const noexcept { return layout_; }

  [[nodiscard]] std::string describe_state(const State& s) const override {
    const auto st = layout_.state_of(s.index);
    return "cell(" + std::to_string(st.position.row) + "," + std::to_string(st.position.col) +
           ") gold=" + (st.gold ? "1" : "0") + " gem=" + (st.gem ? "1" : "0");
  }
  [[nodiscard]] std::optional<GridCell> grid_position(const State& s) const override {
    return layout_.state_of(s.index).position;
  }

 protected:
  StepOutcome transition(std::size_t action) override {
    // One draw per step, consumed whether or not an enemy is met, keeps
    // trajectories replayable from the reset seed.
    const double draw = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    return rg_step(layout_, layout_.state_of(current_.index), action, draw);
  }

 private:
  RgLayout layout_;
  Rng rng_{0};
};

class EnergyStorageEnv final : public Environment {
 public:
  explicit EnergyStorageEnv(EnergyConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.action_levels.empty()) throw Error(Errc::ConfigError, "energy.action_levels is empty");
    for (double a : cfg_.action_levels) {
      if (std::abs(a) > cfg_.action_bound) throw Error(Errc::ConfigError, "energy action level beyond bound");
    }
    if (!(cfg_.storage_max > 0.0) || cfg_.initial_storage < 0.0 || cfg_.initial_storage > cfg_.storage_max) {
      throw Error(Errc::ConfigError, "energy storage limits");
    }
    if (cfg_.renewable.low < 0.0 || cfg_.demand.low < 0.0 || cfg_.price.low < 0.0) {
      throw Error(Errc::ConfigError, "energy processes must be nonnegative");
    }
    if (cfg_.max_episode_length < cfg_.segment_length || cfg_.segment_length == 0) {
      throw Error(Errc::ConfigError, "energy needs max_episode_length >= segment_length >= 1");
    }
    spec_.name = "energy";
    spec_.objectives = 2;
    spec_.state_count = 0;
    spec_.feature_count = 4;
    spec_.action_count = cfg_.action_levels.size();
    for (double a : cfg_.action_levels) {
      spec_.action_names.push_back((a > 0 ? "discharge " : a < 0 ? "charge " : "idle ") + std::to_string(std::abs(a)));
    }
    spec_.max_episode_length = cfg_.max_episode_length;
    spec_.segment_length = cfg_.segment_length;
    const double worst_cost = cfg_.price.high * (cfg_.demand.high + cfg_.action_bound);
    const double horizon = static_cast<double>(cfg_.max_episode_length);
    spec_.hv_reference = {-worst_cost * horizon, -horizon};
    spec_.reward_bound = {worst_cost, 1.0};
  }

  State reset(std::uint64_t seed) override {
    rng_.seed(seed);
    elapsed_ = 0;
    auto init = [&](const RandomWalk& w) { return std::uniform_real_distribution<double>(w.low, w.high)(rng_); };
    EnergyState s{cfg_.initial_storage, 0.0, 0.0, 0.0};
    s.renewable = init(cfg_.renewable);
    s.demand = init(cfg_.demand);
    s.price = init(cfg_.price);
    current_ = State{0, s.as_vector()};
    return current_;
  }

  [[nodiscard]] std::unique_ptr<Environment> clone() const override {
    return std::make_unique<EnergyStorageEnv>(*this);
  }
  [[nodiscard]] bool deterministic() const noexcept override { return false; }
  [[nodiscard]] const EnergyConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] double action_level(std::size_t action) const { return cfg_.action_levels.at(action); }

  [[nodiscard]] Features reward_features(const State& s, std::size_t action) const override {
    if (action >= spec_.action_count) throw Error(Errc::EncodingError, "energy action index");
    Features f = state_features(s);
    f.dense.push_back(cfg_.action_levels[action] / cfg_.action_bound);
    f.dim = f.dense.size();
    return f;
  }

  [[nodiscard]] Features state_features(const State& s) const override {
    if (s.features.size() != 4) throw Error(Errc::EncodingError, "energy state needs 4 features");
    auto scale = [](double x, const RandomWalk& w) { return w.high > w.low ? (x - w.low) / (w.high - w.low) : 0.0; };
    Features f;
    f.dense = {s.features[0] / cfg_.storage_max, scale(s.features[1], cfg_.renewable),
               scale(s.features[2], cfg_.demand), scale(s.features[3], cfg_.price)};
    f.dim = f.dense.size();
    return f;
  }

  [[nodiscard]] std::string describe_state(const State& s) const override {
    const auto e = EnergyState::from_vector(s.features);
    return "storage=" + std::to_string(e.storage) + " renewable=" + std::to_string(e.renewable) +
           " demand=" + std::to_string(e.demand) + " price=" + std::to_string(e.price);
  }

 protected:
  StepOutcome transition(std::size_t action) override {
    const auto s = EnergyState::from_vector(current_.features);
    const auto result = energy_step(cfg_, s, cfg_.action_levels.at(action));
    EnergyState next{result.next_storage, advance(s.renewable, cfg_.renewable), advance(s.demand, cfg_.demand),
                     advance(s.price, cfg_.price)};
    StepOutcome out;
    out.next_state = State{0, next.as_vector()};
    out.reward = result.reward;
    return out;
  }

 private:
  double advance(double x, const RandomWalk& w) {
    const double delta = std::uniform_real_distribution<double>(-w.step, w.step)(rng_);
    return std::clamp(x + delta, w.low, w.high);
  }

  EnergyConfig cfg_;
  Rng rng_{0};
};

inline const std::vector<std::string>& environment_names() {
  static const std::vector<std::string> names{"dst", "ft", "rg", "energy"};
  return names;
}

inline std::unique_ptr<Environment> make_environment(const std::string& name, const EnvironmentConfig& cfg,
                                                     const DiscountConfig& discount) {
  if (name == "dst") return std::make_unique<DeepSeaTreasureEnv>(cfg.dst, discount);
  if (name == "ft") return std::make_unique<FruitTreeEnv>(cfg.ft);
  if (name == "rg") return std::make_unique<ResourceGatheringEnv>(cfg.rg);
  if (name == "energy") return std::make_unique<EnergyStorageEnv>(cfg.energy);
  throw Error(Errc::UnknownEnvironment, "unknown environment '" + name + "' (available: dst, ft, rg, energy)");
}

}  // namespace pbmorl
