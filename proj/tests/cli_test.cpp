#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`; stderr is discarded.
Outcome run(const std::string& args) {
  const std::string cmd = std::string(PBMORL_CLI) + " " + args + " 2>/dev/null";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("pbmorl_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

const std::string kSmallFt =
    "--env ft --steps 2000 --eval-interval 1000 --set trainer.hidden=[16] --set trainer.queries=20 "
    "--set trainer.reward_steps=20 --set trainer.eval_weights=20";

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("pareto").code, 1);
  EXPECT_EQ(run("pareto --env ft --algo magic").code, 1);
  EXPECT_EQ(run("train --realization quantum").code, 1);
  EXPECT_EQ(run("eval").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, ParetoCheckOnFruitTree) {
  for (const char* algo : {"nonconvex", "pairwise", "convex", "brute"}) {
    const auto r = run(std::string("pareto --env ft --check --algo ") + algo);
    ASSERT_EQ(r.code, 0) << algo;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["policies"], 64);
    EXPECT_EQ(j["check"]["ok"], true);
    EXPECT_EQ(j["names"].size(), j["frontier"].size());
  }
}

TEST(Cli, ParetoInstanceFile) {
  const auto dir = scratch("instance");
  std::ofstream(dir / "inst.json") << R"({"returns": [[2, 1], [1, 2], [0.5, 0.5], [1.4, 1.4]]})";
  auto r = run("pareto --instance " + (dir / "inst.json").string() + " --check --out " + (dir / "res.json").string());
  ASSERT_EQ(r.code, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["frontier"], (nlohmann::json{0, 1, 3}));
  EXPECT_TRUE(fs::exists(dir / "res.json"));

  r = run("pareto --algo convex --instance " + (dir / "inst.json").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["frontier"], (nlohmann::json{0, 1}));

  std::ofstream(dir / "bad.json") << R"({"returns": [[1, "x"]]})";
  EXPECT_EQ(run("pareto --instance " + (dir / "bad.json").string()).code, 2);
  EXPECT_EQ(run("pareto --env ft --instance " + (dir / "inst.json").string()).code, 1);
  EXPECT_EQ(run("pareto --env rg").code, 2);
  fs::remove_all(dir);
}

TEST(Cli, TrainWritesRunDirectoryAndRefusesOverwrite) {
  const auto dir = scratch("train");
  const auto out = (dir / "run").string();
  auto r = run("train " + kSmallFt + " --out " + out);
  ASSERT_EQ(r.code, 0);
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["steps"], 2000);
  EXPECT_GT(summary["preference_records"].get<std::size_t>(), 0u);
  for (const char* f : {"manifest.json", "config.json", "metrics.jsonl", "events.jsonl", "checkpoints/final.json",
                        "checkpoints/step_000001000.json", "checkpoints/step_000002000.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
  std::ifstream manifest_file(fs::path(out) / "manifest.json");
  const auto manifest = nlohmann::json::parse(manifest_file);
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["mode"], "pbmorl");
  EXPECT_EQ(manifest["teacher"], "scripted");
  EXPECT_EQ(manifest["config_sha256"].get<std::string>().size(), 64u);
  std::ifstream metrics_file(fs::path(out) / "metrics.jsonl");
  const std::string metrics((std::istreambuf_iterator<char>(metrics_file)), {});
  EXPECT_EQ(lines_of(metrics).size(), 2u);

  EXPECT_EQ(run("train " + kSmallFt + " --out " + out).code, 2);
  EXPECT_EQ(run("train " + kSmallFt + " --out " + out + " --force").code, 0);
  std::ifstream again(fs::path(out) / "metrics.jsonl");
  const std::string metrics2((std::istreambuf_iterator<char>(again)), {});
  EXPECT_EQ(metrics2, metrics);  // same seed, fresh files
  fs::remove_all(dir);
}

TEST(Cli, OracleRunHasNoRewardModel) {
  const auto dir = scratch("oracle");
  const auto out = (dir / "run").string();
  ASSERT_EQ(run("train --oracle --env ft --steps 1500 --eval-interval 0 --set trainer.eval_weights=10 --out " + out).code, 0);
  std::ifstream f(fs::path(out) / "checkpoints/final.json");
  const auto ck = nlohmann::json::parse(f);
  EXPECT_FALSE(ck.contains("reward_model") && !ck["reward_model"].is_null());
  fs::remove_all(dir);
}

TEST(Cli, EvalExportsCsv) {
  const auto dir = scratch("eval");
  const auto out = (dir / "run").string();
  ASSERT_EQ(run("train " + kSmallFt + " --out " + out).code, 0);
  const auto csv = (dir / "curve.csv").string();
  const auto r = run("eval --checkpoint " + out + " --weights 20 --export csv --out " + csv);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(lines_of(r.out).size(), 2u);
  std::ifstream f(csv);
  const auto rows = lines_of(std::string((std::istreambuf_iterator<char>(f)), {}));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "step,eu,hv");
  EXPECT_EQ(rows[1].rfind("1000,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("2000,", 0), 0u);

  const auto single = run("eval --checkpoint " + out + "/checkpoints/final.json --weights 20");
  ASSERT_EQ(single.code, 0);
  EXPECT_EQ(nlohmann::json::parse(single.out)["step"], 2000);
  EXPECT_EQ(run("eval --checkpoint " + (dir / "nothing").string()).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, ServeWithoutLabelerRunsToCompletion) {
  const auto dir = scratch("serve");
  const auto out = (dir / "run").string();
  const auto r = run("serve --env dst --port 0 --wait 0 --steps 1500 --eval-interval 0 --set trainer.eval_weights=5 "
                     "--set trainer.hidden=[8] --out " + out);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(nlohmann::json::parse(r.out)["preference_records"], 0);
  std::ifstream f(fs::path(out) / "events.jsonl");
  const auto events = lines_of(std::string((std::istreambuf_iterator<char>(f)), {}));
  ASSERT_FALSE(events.empty());
  for (const auto& e : events) EXPECT_TRUE(nlohmann::json::parse(e).contains("skipped"));
  fs::remove_all(dir);
}
