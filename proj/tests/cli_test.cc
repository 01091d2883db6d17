// Copyright 2026 The symflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.h"
#include "config.h"
#include "symflow/errors.h"

namespace symflow {
namespace {

namespace fs = std::filesystem;

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// A fresh directory per test case.
struct Sandbox {
  fs::path dir;
  std::string out, err;

  explicit Sandbox(const std::string& name)
      : dir(fs::temp_directory_path() / ("symflow_cli_test_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  std::string Path(const std::string& leaf) const { return (dir / leaf).string(); }

  int Run(std::vector<std::string> args) {
    args.insert(args.begin(), {"--out", dir.string()});
    std::ostringstream o, e;
    const int code = RunCli(args, o, e);
    out = o.str();
    err = e.str();
    return code;
  }
};

// Small networks so that training runs take a fraction of a second.
const std::vector<std::string> kTiny = {
    "--set", "network.width=16",     "--set", "network.depth=1",
    "--set", "equivariant_network.width=8", "--set", "equivariant_network.depth=1",
    "--set", "train.batch_size=8",   "--set", "train.probe_every=10",
    "--set", "train.probe_size=8"};

std::vector<std::string> Tiny(std::vector<std::string> args) {
  args.insert(args.begin(), kTiny.begin(), kTiny.end());
  return args;
}

TEST_CASE("config round-trips through its text form") {
  ExperimentConfig c;
  c.env.id = "box";
  c.difficulty = Difficulty::kWide;
  c.env.reach.x_lo = 0.1 + 0.2;  // not exactly representable in short form
  c.env.box.target_angle_deg = -1.0 / 3.0;
  c.train.strategy = Strategy::kEquivReg;
  c.train.lambda = 2.5e-7;
  c.train.network.variant = NetworkVariant::kEquivariantTransformer;
  c.train.seed = 18446744073709551615ULL;
  c.data.tag = ConfigTag::kGr;
  c.eval.seeds = {4, 5};
  c.eval.methods = {Strategy::kEquivNet, Strategy::kBaseline};
  c.eval.lambdas = {0.1, 1e3};
  c.paths.reports = "some dir/reports";
  const std::string text = SerializeConfig(c);
  const ExperimentConfig back = ParseConfig(text);
  CHECK(SerializeConfig(back) == text);
  CHECK(back.env.reach.x_lo == c.env.reach.x_lo);
  CHECK(back.env.box.target_angle_deg == c.env.box.target_angle_deg);
  CHECK(back.train.seed == c.train.seed);
  CHECK(back.eval.lambdas == c.eval.lambdas);
  CHECK(SerializeConfig(ParseConfig(SerializeConfig(ExperimentConfig{}))) ==
        SerializeConfig(ExperimentConfig{}));
}

TEST_CASE("config keeps defaults for absent keys") {
  const ExperimentConfig c = ParseConfig("[train]\nlambda = 10\n");
  CHECK(c.train.lambda == 10.0);
  CHECK(c.train.steps == TrainConfig{}.steps);
  CHECK(c.env.id == "reach");
}

TEST_CASE("config rejects unknown and malformed entries") {
  CHECK_THROWS_AS(ParseConfig("[train]\nlamda = 1\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[trian]\nlambda = 1\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("lambda = 1\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[train]\nlambda = one\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[train]\nsteps = 1.5\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[train]\nseed = -1\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[train]\nsteps = -1\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[env]\nid = cube\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[window]\nexec = 9\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[eval]\nseeds = 1,,2\n"), ValidationError);
  CHECK_THROWS_AS(ParseConfig("[train]\nlambda = 1\nlambda = 2\n"), ValidationError);
  ExperimentConfig c;
  CHECK_THROWS_AS(SetConfigValue(&c, "train.lambda"), ValidationError);
  CHECK_THROWS_AS(SetConfigValue(&c, "lambda=1"), ValidationError);
  SetConfigValue(&c, "train.lambda=0.5");
  CHECK(c.train.lambda == 0.5);
}

TEST_CASE("output paths default under the output directory") {
  const PathSettings p = ResolvePaths({.out = "x"});
  CHECK(p.dataset == "x/dataset.jsonl");
  CHECK(p.checkpoint == "x/policy.json");
  CHECK(p.reports == "x/reports");
  CHECK(ResolvePaths({.out = "x", .dataset = "d.jsonl"}).dataset == "d.jsonl");
}

TEST_CASE("config file, --set and --seed layer in order") {
  Sandbox box("layers");
  std::ofstream(box.Path("c.ini")) << "[train]\nlambda = 3\nseed = 9\n[eval]\nseeds = 1,2\n";
  REQUIRE(box.Run({"--config", box.Path("c.ini"), "--print-config", "check"}) == kExitOk);
  ExperimentConfig c = ParseConfig(box.out);
  CHECK(c.train.lambda == 3.0);
  CHECK(c.train.seed == 9);
  CHECK(c.eval.seeds == std::vector<uint64_t>{1, 2});
  REQUIRE(box.Run({"--config", box.Path("c.ini"), "--set", "train.lambda=4", "--seed",
                   "7", "--print-config", "check"}) == kExitOk);
  c = ParseConfig(box.out);
  CHECK(c.train.lambda == 4.0);
  CHECK(c.train.seed == 7);
  CHECK(c.data.seed == 7);
  CHECK(c.eval.seeds == std::vector<uint64_t>{7});
}

TEST_CASE("usage and validation errors map to exit codes") {
  Sandbox box("codes");
  CHECK(box.Run({"gen-data", "--n", "0"}) == kExitUsage);
  CHECK(box.Run({}) == kExitUsage);
  CHECK(box.Run({"fly"}) == kExitUsage);
  CHECK(box.Run({"eval", "--protocol", "nope"}) == kExitUsage);
  CHECK(box.Run({"--set", "train.nope=1", "check"}) == kExitValidation);
  CHECK(box.Run({"train"}) == kExitValidation);  // no dataset yet
  CHECK(box.err.find("dataset not found") != std::string::npos);
  CHECK(box.Run({"--help"}) == kExitOk);
}

TEST_CASE("gen-data writes the requested tag and is reproducible") {
  Sandbox box("gen");
  REQUIRE(box.Run({"gen-data", "--env", "reach", "--n", "6", "--tag", "g_r"}) == kExitOk);
  CHECK(box.out.find("episodes: 6") != std::string::npos);
  CHECK(box.out.find("tags: g_r=6") != std::string::npos);
  const std::string first = Slurp(box.Path("dataset.jsonl"));
  const Dataset data = ReadDataset(box.Path("dataset.jsonl"));
  REQUIRE(data.trajectories.size() == 6);
  for (const Trajectory& t : data.trajectories) CHECK(t.config_tag == "g_r");
  REQUIRE(box.Run({"gen-data", "--env", "reach", "--n", "6", "--tag", "g_r"}) == kExitOk);
  CHECK(Slurp(box.Path("dataset.jsonl")) == first);
  REQUIRE(box.Run({"--seed", "1", "gen-data", "--n", "6", "--tag", "g_r"}) == kExitOk);
  CHECK(Slurp(box.Path("dataset.jsonl")) != first);
}

TEST_CASE("train is deterministic and reports divergence") {
  Sandbox box("train");
  REQUIRE(box.Run({"gen-data", "--n", "4"}) == kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "30", "--checkpoint", box.Path("a.json")})) ==
          kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "30", "--checkpoint", box.Path("b.json")})) ==
          kExitOk);
  CHECK(Slurp(box.Path("a.json")) == Slurp(box.Path("b.json")));
  CHECK(fs::exists(box.Path("a.json.log.csv")));
  CHECK(box.Run(Tiny({"--set", "train.lr=1e4", "train", "--steps", "30"})) ==
        kExitDivergence);
}

TEST_CASE("equiv-reg with lambda 0 matches the baseline parameters") {
  Sandbox box("lambda0");
  REQUIRE(box.Run({"gen-data", "--n", "4"}) == kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "30", "--checkpoint", box.Path("base.json")})) ==
          kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "30", "--strategy", "equiv-reg", "--lambda", "0",
                        "--checkpoint", box.Path("reg.json")})) == kExitOk);
  const auto base = nlohmann::json::parse(Slurp(box.Path("base.json")));
  const auto reg = nlohmann::json::parse(Slurp(box.Path("reg.json")));
  CHECK(base["params"] == reg["params"]);
}

TEST_CASE("equiv-net checkpoints stay exactly equivariant") {
  Sandbox box("equivnet");
  REQUIRE(box.Run({"gen-data", "--n", "4"}) == kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "20", "--strategy", "equiv-net"})) == kExitOk);
  FlowPolicy policy = LoadPolicy(box.Path("policy.json"));
  for (double scale : {1.0, 100.0}) {
    CHECK(MeasureEquivGap(&policy.net(), 1000, scale, 3).max <= 1e-8);
  }
}

TEST_CASE("eval runs the expert and rejects mismatched checkpoints") {
  Sandbox box("eval");
  REQUIRE(box.Run({"eval", "--expert", "--episodes", "20"}) == kExitOk);
  CHECK(box.out.find("expert: 1.00 / 1.00 / 1.00") != std::string::npos);
  const std::string csv = Slurp(box.Path("reports/episodes.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 41);
  REQUIRE(box.Run({"gen-data", "--n", "4"}) == kExitOk);
  REQUIRE(box.Run(Tiny({"train", "--steps", "5"})) == kExitOk);
  REQUIRE(box.Run({"eval", "--episodes", "2"}) == kExitOk);
  CHECK(Slurp(box.Path("reports/zero_shot.csv")).rfind("method,rate_e", 0) == 0);
  CHECK(box.Run({"eval", "--env", "box", "--episodes", "2"}) == kExitValidation);
  CHECK(box.err.find("trained on env 'reach'") != std::string::npos);
}

TEST_CASE("efficiency protocol with one size and one method gives one row") {
  Sandbox box("efficiency");
  REQUIRE(box.Run(Tiny({"--set", "eval.dataset_sizes=3", "--set", "eval.methods=baseline",
                        "--set", "eval.seeds=0", "--set", "eval.held_out_demos=2",
                        "--set", "train.steps=5", "eval", "--protocol", "efficiency",
                        "--episodes", "2"})) == kExitOk);
  const std::string csv = Slurp(box.Path("reports/efficiency.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("sweep writes every protocol table and the lambda sweep") {
  Sandbox box("sweep");
  REQUIRE(box.Run(Tiny({"--set", "eval.dataset_sizes=2,3", "--set", "eval.seeds=0",
                        "--set", "eval.n_train=2", "--set", "eval.difficulty_n=2",
                        "--set", "eval.held_out_demos=2", "--set", "eval.gap_probes=10",
                        "--set", "eval.episodes=2", "--set", "eval.lambdas=0,1",
                        "--set", "train.steps=3", "--set", "train.equiv_net_steps=2",
                        "sweep"})) == kExitOk);
  for (const char* name : {"zero_shot.csv", "gaps.csv", "efficiency.csv",
                           "efficiency_reach.csv", "difficulty.csv", "lambda_sweep.csv"}) {
    CHECK_MESSAGE(fs::exists(box.Path(std::string("reports/") + name)), name);
  }
  const std::string sweep = Slurp(box.Path("reports/lambda_sweep.csv"));
  CHECK(sweep.rfind("lambda,rate_e,rate_gr,rate_total,gap_held_out_1,gap_gaussian_100\n0,", 0) ==
        0);
  CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 3);
}

TEST_CASE("check passes, repeats exactly and names a corrupted invariant") {
  Sandbox box("check");
  REQUIRE(box.Run({"check"}) == kExitOk);
  const std::string first = box.out;
  CHECK(nlohmann::json::parse(first)["passed"] == true);
  REQUIRE(box.Run({"check"}) == kExitOk);
  CHECK(box.out == first);
  REQUIRE(box.Run({"check", "--corrupt", "obs-rep"}) == kExitFailure);
  const auto report = nlohmann::json::parse(box.out);
  CHECK(report["passed"] == false);
  CHECK(report["suites"][0]["detail"].get<std::string>().find(
            "reach observation representation") != std::string::npos);
}

}  // namespace
}  // namespace symflow
