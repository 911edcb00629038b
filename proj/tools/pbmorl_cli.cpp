// pbmorl command-line tool: train, eval, pareto, serve.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>

#include "pbmorl/pbmorl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pbmorl;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Options shared by train and serve.
struct RunOptions {
  std::string config_path;
  std::string env;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> eval_interval;
  std::string realization;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_path, "Run config JSON (see docs/config_schema.md)")->check(CLI::ExistingFile);
  cmd->add_option("--env", o.env, "Environment: dst, ft, rg, energy");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--steps", o.steps, "Total environment steps");
  cmd->add_option("--eval-interval", o.eval_interval, "Steps between evaluations (0: end only)");
  cmd->add_option("--realization", o.realization, "Q realization")->check(CLI::IsMember({"tabular", "network"}));
  cmd->add_option("--set", o.overrides, "Override a config field, e.g. trainer.batch=32 (repeatable)");
  cmd->add_option("--out", o.out, "Run directory (default runs/<env>-<mode>-s<seed>)");
  cmd->add_flag("--force", o.force, "Reuse an existing run directory");
}

RunConfig effective_config(const RunOptions& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = run_config_from_json(read_json_file(o.config_path));
  if (!o.env.empty()) cfg.env = o.env;
  if (o.seed) cfg.seed = *o.seed;
  if (o.steps) cfg.trainer.total_steps = *o.steps;
  if (o.eval_interval) cfg.trainer.eval_interval = *o.eval_interval;
  if (!o.realization.empty()) {
    cfg.trainer.realization = o.realization == "network" ? QRealization::Network : QRealization::Tabular;
  }
  for (const auto& s : o.overrides) cfg = apply_override(cfg, s);
  validate(cfg.trainer);
  return cfg;
}

// Artifacts a run leaves behind; --force clears exactly these.
const char* const kRunFiles[] = {"manifest.json", "config.json", "metrics.jsonl", "events.jsonl", "checkpoints"};

fs::path prepare_run_dir(const std::string& requested, const std::string& fallback, bool force) {
  const fs::path dir = requested.empty() ? fs::path("runs") / fallback : fs::path(requested);
  if (fs::exists(dir / "manifest.json")) {
    if (!force) throw Error(Errc::ConfigError, dir.string() + " already holds a run; pass --force to reuse it");
    for (const char* name : kRunFiles) fs::remove_all(dir / name);
  }
  fs::create_directories(dir / "checkpoints");
  return dir;
}

class JsonLines {
 public:
  explicit JsonLines(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) throw Error(Errc::ConfigError, "cannot open " + path.string());
  }
  void write(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct RunContext {
  fs::path dir;
  RunConfig cfg;
  std::unique_ptr<Environment> env;
};

RunContext start_run(const RunOptions& opts, const std::string& command, const std::string& mode,
                     const std::string& teacher, int argc, char** argv) {
  RunContext ctx;
  ctx.cfg = effective_config(opts);
  ctx.env = make_environment(ctx.cfg.env, ctx.cfg.environment, DiscountConfig{ctx.cfg.trainer.gamma});
  ctx.dir = prepare_run_dir(opts.out, ctx.cfg.env + "-" + mode + "-s" + std::to_string(ctx.cfg.seed), opts.force);

  const json config = to_json(ctx.cfg);
  const std::string canonical = config.dump();
  write_json_file(ctx.dir / "config.json", config, 2);
  json args = json::array();
  for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
  write_json_file(ctx.dir / "manifest.json",
                  {{"command", command},
                   {"mode", mode},
                   {"teacher", teacher.empty() ? json(nullptr) : json(teacher)},
                   {"env", ctx.cfg.env},
                   {"seed", ctx.cfg.seed},
                   {"config_path", opts.config_path.empty() ? json(nullptr) : json(opts.config_path)},
                   {"config_sha256", sha256_hex(canonical)},
                   {"output_dir", ctx.dir.string()},
                   {"argv", args},
                   {"created_at", utc_now()}},
                  2);
  return ctx;
}

Checkpoint make_checkpoint(const RunContext& ctx, std::size_t step, const QFunction& q, const RewardModel* model) {
  Checkpoint c;
  c.env = ctx.cfg.env;
  c.env_config = ctx.cfg.environment;
  c.trainer = ctx.cfg.trainer;
  c.seed = ctx.cfg.seed;
  c.step = step;
  c.q = q.to_json();
  if (model) c.reward_model = model->to_json();
  return c;
}

std::string checkpoint_name(std::size_t step) {
  std::ostringstream s;
  s << "step_" << std::setw(9) << std::setfill('0') << step << ".json";
  return s.str();
}

/// Hooks that stream metrics/events to disk and progress to stderr.
RunHooks file_hooks(const RunContext& ctx, JsonLines& metrics, JsonLines& events, const char* tag) {
  RunHooks hooks;
  const auto started = std::chrono::steady_clock::now();
  const std::size_t total = ctx.cfg.trainer.total_steps;
  hooks.on_metric = [&metrics, started, total, tag](const json& m) {
    metrics.write(m);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::fprintf(stderr, "[%s] step %zu/%zu  eu %.4f  hv %.4f  (%.1fs)\n", tag, m["step"].get<std::size_t>(), total,
                 m["eu"].get<double>(), m["hv"].get<double>(), secs);
  };
  hooks.on_event = [&events](const json& e) { events.write(e); };
  hooks.should_stop = [] { return g_stop.load(); };
  hooks.on_checkpoint = [&ctx](std::size_t step, const QFunction& q, const RewardModel* model) {
    save_checkpoint(ctx.dir / "checkpoints" / checkpoint_name(step), make_checkpoint(ctx, step, q, model));
  };
  return hooks;
}

void finish_run(const RunContext& ctx, const RunArtifacts& art) {
  const RewardModel* model = art.reward_model ? &*art.reward_model : nullptr;
  save_checkpoint(ctx.dir / "checkpoints" / "final.json", make_checkpoint(ctx, art.steps_done, *art.q, model));
  std::fprintf(stderr, "run directory: %s\n", ctx.dir.string().c_str());
  std::cout << json{{"steps", art.steps_done},
                    {"eu", art.final_eu},
                    {"hv", art.final_hv},
                    {"preference_records", art.preference_records},
                    {"output_dir", ctx.dir.string()}}
                   .dump()
            << '\n';
}

// ---------------------------------------------------------------------------

int cmd_train(const RunOptions& opts, const std::string& teacher, bool oracle, int argc, char** argv) {
  const std::string mode = oracle ? "oracle" : "pbmorl";
  auto ctx = start_run(opts, "train", mode, oracle ? "" : teacher, argc, argv);
  JsonLines metrics(ctx.dir / "metrics.jsonl");
  JsonLines events(ctx.dir / "events.jsonl");
  auto hooks = file_hooks(ctx, metrics, events, mode.c_str());
  const auto art = oracle ? run_eql_oracle(*ctx.env, ctx.cfg.trainer, ctx.cfg.seed, hooks)
                          : run_pbmorl(*ctx.env, ctx.cfg.trainer, ctx.cfg.seed, hooks);
  finish_run(ctx, art);
  return kOk;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t capacity = 10'000;
  double expiry_s = 0.0;
  double wait_s = 0.0;
  std::string static_dir;
};

int cmd_serve(const RunOptions& opts, const ServeOptions& so, int argc, char** argv) {
  auto ctx = start_run(opts, "serve", "pbmorl", "http", argc, argv);
  JsonLines metrics(ctx.dir / "metrics.jsonl");
  JsonLines events(ctx.dir / "events.jsonl");

  PreferenceBuffer prefs;
  QueryQueue queue({so.capacity, std::chrono::milliseconds(static_cast<long>(so.expiry_s * 1000.0))}, prefs);
  StatusBoard status;
  status.merge({{"step", 0}, {"total_steps", ctx.cfg.trainer.total_steps}, {"state", "training"}});
  PreferenceServer server(queue, *ctx.env, prefs, &status);
  if (!so.static_dir.empty() && !server.mount_static(so.static_dir)) {
    throw Error(Errc::ConfigError, "static directory " + so.static_dir + " not found");
  }
  server.start(so.host, so.port);
  std::fprintf(stderr, "preference service on http://%s:%d\n", so.host.c_str(), server.port());

  QueueOverseer overseer(queue, std::chrono::milliseconds(static_cast<long>(so.wait_s * 1000.0)));
  auto hooks = file_hooks(ctx, metrics, events, "serve");
  hooks.preference_buffer = &prefs;
  hooks.on_status = [&status](const json& s) { status.merge(s); };
  hooks.on_step = [&status](std::size_t step) {
    if (step % 100 == 0) status.merge({{"step", step}});
  };
  const auto art = run_pbmorl(*ctx.env, overseer, ctx.cfg.trainer, ctx.cfg.seed, hooks);
  status.merge({{"step", art.steps_done}, {"state", g_stop ? "stopped" : "finished"}});
  server.stop();
  finish_run(ctx, art);
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalOptions {
  std::string checkpoint;
  std::optional<std::size_t> weights;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
  std::string export_format;
  std::string out;
};

int cmd_eval(const EvalOptions& o) {
  std::vector<fs::path> files;
  if (fs::is_directory(o.checkpoint)) {
    const fs::path dir = fs::is_directory(fs::path(o.checkpoint) / "checkpoints") ? fs::path(o.checkpoint) / "checkpoints"
                                                                                   : fs::path(o.checkpoint);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("step_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty() && fs::exists(dir / "final.json")) files.push_back(dir / "final.json");
  } else if (fs::exists(o.checkpoint)) {
    files.push_back(o.checkpoint);
  }
  if (files.empty()) throw Error(Errc::ParseError, "no checkpoint at " + o.checkpoint);

  std::vector<std::array<double, 3>> rows;
  for (const auto& path : files) {
    const auto ck = load_checkpoint(path);
    auto cfg = ck.trainer;
    if (o.weights) cfg.eval_weights = *o.weights;
    if (o.episodes) cfg.eval_episodes = *o.episodes;
    if (o.seed) cfg.eval_seed = *o.seed;
    validate(cfg);
    const auto env = make_environment(ck.env, ck.env_config, DiscountConfig{cfg.gamma});
    const auto q = restore_q(ck, *env);
    const auto ev = detail::evaluate(*q, *env, cfg);
    rows.push_back({static_cast<double>(ck.step), ev.eu, ev.hv});
    std::cout << json{{"checkpoint", path.string()}, {"step", ck.step}, {"eu", ev.eu}, {"hv", ev.hv}}.dump() << '\n';
  }

  if (o.export_format == "csv") {
    std::ostringstream csv;
    csv << "step,eu,hv\n" << std::setprecision(17);
    for (const auto& r : rows) csv << static_cast<std::size_t>(r[0]) << ',' << r[1] << ',' << r[2] << '\n';
    if (o.out.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream f(o.out, std::ios::trunc);
      if (!(f << csv.str())) throw Error(Errc::ConfigError, "cannot write " + o.out);
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct ParetoOptions {
  std::string env;
  std::string instance;
  std::string algo = "nonconvex";
  bool check = false;
  std::string out;
  double gamma = 0.99;
  std::size_t horizon = 0;
  std::size_t resolution = 0;
};

FinitePolicySet load_instance(const std::string& path) {
  const auto j = read_json_file(path);
  if (!j.is_object() || !j.contains("returns") || !j["returns"].is_array() || j["returns"].empty()) {
    throw Error(Errc::ParseError, path + ": expected {\"returns\": [[...], ...]}");
  }
  std::vector<ReturnVector> returns;
  for (const auto& r : j["returns"]) {
    if (!r.is_array() || r.empty()) throw Error(Errc::ParseError, path + ": each return must be a non-empty array");
    Vector v;
    for (const auto& x : r) {
      if (!x.is_number()) throw Error(Errc::ParseError, path + ": non-numeric return component");
      v.push_back(x.get<double>());
    }
    returns.push_back(ReturnVector{std::move(v)});
  }
  return FinitePolicySet::from_returns(returns);
}

int cmd_pareto(const ParetoOptions& o) {
  const DiscountConfig discount{o.gamma};
  FinitePolicySet ps;
  if (!o.instance.empty()) {
    ps = load_instance(o.instance);
  } else {
    const auto env = make_environment(o.env, EnvironmentConfig{}, discount);
    ps = enumerate_policies(*env);
  }
  const auto returns = policy_returns(ps, discount);
  const ScriptedTeacher teacher(discount);
  const FrontierOptions fo{o.horizon, discount};

  std::vector<std::size_t> frontier;
  if (o.algo == "brute") {
    frontier = brute_force_frontier(returns);
  } else if (o.algo == "nonconvex") {
    frontier = nonconvex_frontier(ps, teacher, fo);
  } else if (o.algo == "pairwise") {
    frontier = pairwise_frontier(ps, teacher, fo);
  } else {
    const auto grid = o.resolution ? weight_grid(ps.objectives, o.resolution) : evaluation_grid(ps.objectives);
    frontier = convex_frontier(ps, grid, teacher, fo);
  }

  json names = json::array();
  json points = json::array();
  for (auto i : frontier) {
    names.push_back(ps.policies[i].name);
    points.push_back(returns[i].values);
  }
  json result{{"algo", o.algo}, {"policies", ps.size()}, {"frontier", frontier}, {"names", names}, {"returns", points}};

  int code = kOk;
  if (o.check) {
    const auto oracle = brute_force_frontier(returns);
    // The convex construction may omit points off the convex hull, so it is held to inclusion only.
    const bool ok = o.algo == "convex" ? std::includes(oracle.begin(), oracle.end(), frontier.begin(), frontier.end())
                                       : frontier == oracle;
    result["check"] = {{"oracle", oracle}, {"ok", ok}};
    if (!ok) {
      std::fprintf(stderr, "pareto --check: %s frontier differs from the brute-force oracle\n", o.algo.c_str());
      code = kRuntime;
    }
  }
  std::cout << result.dump() << '\n';
  if (!o.out.empty()) write_json_file(o.out, result, 2);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference-based multi-objective RL toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pbmorl 0.1.0");

  RunOptions train_opts;
  std::string teacher = "scripted";
  bool oracle = false;
  auto* train = app.add_subcommand("train", "Train with a scripted teacher, or the oracle baseline");
  add_run_options(train, train_opts);
  train->add_option("--teacher", teacher, "Teacher mode")->check(CLI::IsMember({"scripted"}));
  train->add_flag("--oracle", oracle, "Learn from true rewards (no teacher, no reward model)");

  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Expected utility and hypervolume of checkpoints");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file or run directory")->required();
  eval->add_option("--weights", eval_opts.weights, "Simplex draws for expected utility");
  eval->add_option("--episodes", eval_opts.episodes, "Episodes per weight");
  eval->add_option("--seed", eval_opts.seed, "Evaluation seed");
  eval->add_option("--export", eval_opts.export_format, "Export curve data")->check(CLI::IsMember({"csv"}));
  eval->add_option("--out", eval_opts.out, "Export file (default: standard output)");

  ParetoOptions pareto_opts;
  auto* pareto = app.add_subcommand("pareto", "Frontier of an enumerable environment or an instance file");
  auto* penv = pareto->add_option("--env", pareto_opts.env, "Enumerable environment: dst, ft");
  auto* pinst = pareto->add_option("--instance", pareto_opts.instance, "JSON file {\"returns\": [[...], ...]}");
  penv->excludes(pinst);
  pareto->add_option("--algo", pareto_opts.algo, "convex, nonconvex, pairwise, brute")
      ->check(CLI::IsMember({"convex", "nonconvex", "pairwise", "brute"}));
  pareto->add_flag("--check", pareto_opts.check, "Compare against the brute-force oracle");
  pareto->add_option("--out", pareto_opts.out, "Write the result JSON here");
  pareto->add_option("--gamma", pareto_opts.gamma, "Discount factor")->check(CLI::Range(1e-9, 1.0 - 1e-9));
  pareto->add_option("--horizon", pareto_opts.horizon, "Segment length (0: smallest certified)");
  pareto->add_option("--resolution", pareto_opts.resolution, "Weight grid resolution for convex (0: default)");

  RunOptions serve_opts;
  ServeOptions so;
  auto* serve = app.add_subcommand("serve", "Train with labels posted over HTTP");
  add_run_options(serve, serve_opts);
  serve->add_option("--host", so.host, "Bind address");
  serve->add_option("--port", so.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--capacity", so.capacity, "Maximum pending queries")->check(CLI::PositiveNumber);
  serve->add_option("--expiry", so.expiry_s, "Seconds before a pending query expires (0: never)")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--wait", so.wait_s, "Seconds each round waits for its labels (0: never block)")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--static", so.static_dir, "Directory served at / (labeling UI)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (pareto->parsed() && pareto_opts.env.empty() && pareto_opts.instance.empty()) {
    std::cerr << "pareto needs --env or --instance\n";
    return kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  try {
    if (train->parsed()) return cmd_train(train_opts, teacher, oracle, argc, argv);
    if (eval->parsed()) return cmd_eval(eval_opts);
    if (pareto->parsed()) return cmd_pareto(pareto_opts);
    if (serve->parsed()) return cmd_serve(serve_opts, so, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
