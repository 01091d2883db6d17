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

#include "commands.h"

#include <filesystem>
#include <map>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.h"
#include "symflow/checks.h"
#include "symflow/errors.h"

namespace symflow {
namespace {

namespace fs = std::filesystem;

void EnsureParent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string Fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string Sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Flag values that override the config file after it is loaded.
struct GlobalFlags {
  std::string config_path;
  std::vector<std::string> sets;
  uint64_t seed = 0;
  int jobs = 0;
  std::string out;
  bool print_config = false;
};

struct Overrides {
  std::string env, tag, difficulty, dataset, checkpoint, strategy, protocol, corrupt;
  int n = 0, steps = 0, episodes = 0;
  double lambda = -1.0;
  bool expert = false;
};

ExperimentConfig BuildConfig(const GlobalFlags& g, const CLI::App& app, const Overrides& o) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : LoadConfig(g.config_path);
  for (const std::string& s : g.sets) SetConfigValue(&c, s);
  if (app.count("--seed") > 0) {
    c.train.seed = g.seed;
    c.data.seed = g.seed;
    c.eval.seeds = {g.seed};
  }
  if (g.jobs > 0) c.eval.jobs = g.jobs;
  if (!g.out.empty()) c.paths.out = g.out;
  if (!o.env.empty()) c.env.id = o.env;
  if (!o.difficulty.empty()) c.difficulty = ParseDifficulty(o.difficulty);
  if (!o.tag.empty()) c.data.tag = ParseConfigTag(o.tag);
  if (o.n > 0) c.data.n = o.n;
  if (!o.dataset.empty()) c.paths.dataset = o.dataset;
  if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
  if (!o.strategy.empty()) c.train.strategy = ParseStrategy(o.strategy);
  if (o.steps > 0) {
    c.train.steps = o.steps;
    c.train.equiv_net_steps = o.steps;
  }
  if (o.lambda >= 0.0) c.train.lambda = o.lambda;
  if (o.episodes > 0) c.eval.episodes = o.episodes;
  c.paths = ResolvePaths(c.paths);
  c.Validate();
  return c;
}

// ------------------------------------------------------------------ gen-data

int GenData(const ExperimentConfig& c, std::ostream& out) {
  const auto env = MakeEnv(c.env, c.difficulty);
  const auto expert = MakeExpert(*env);
  const Dataset data = GenerateDataset(*env, *expert, c.data.n, c.data.tag, c.data.seed);
  EnsureParent(c.paths.dataset);
  WriteDataset(data, *env, c.paths.dataset);
  std::map<std::string, int> tags;
  double steps = 0.0;
  for (const Trajectory& t : data.trajectories) {
    ++tags[t.config_tag];
    steps += t.length();
  }
  out << "wrote " << c.paths.dataset << "\n"
      << "episodes: " << data.trajectories.size() << "\n"
      << "mean length: " << Fixed(steps / data.trajectories.size(), 1) << "\n"
      << "tags:";
  for (const auto& [tag, count] : tags) out << ' ' << tag << '=' << count;
  out << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------- train

Dataset LoadTrainingData(const ExperimentConfig& c, const Env& env) {
  if (!fs::exists(c.paths.dataset)) {
    throw ValidationError("dataset not found: " + c.paths.dataset);
  }
  Dataset data = ReadDataset(c.paths.dataset);
  if (data.env != env.id()) {
    throw ValidationError("dataset is for env '" + data.env + "', config has '" +
                          env.id() + "'");
  }
  return data;
}

int TrainCommand(const ExperimentConfig& c, std::ostream& out) {
  const auto env = MakeEnv(c.env, c.difficulty);
  const Dataset data = LoadTrainingData(c, *env);
  const TrainResult result = TrainOn(*env, data, c.train);
  EnsureParent(c.paths.checkpoint);
  SavePolicy(result, c.paths.checkpoint,
             {{"env", env->id()},
              {"difficulty", DifficultyName(c.difficulty)},
              {"strategy", StrategyName(c.train.strategy)},
              {"lambda", c.train.lambda},
              {"seed", c.train.seed}});
  const std::string log = c.paths.checkpoint + ".log.csv";
  WriteTrainLog(result.log, log);
  out << "wrote " << c.paths.checkpoint << " and " << log << '\n';
  if (!result.log.empty()) out << "final loss: " << Sci(result.log.back().loss) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------- eval

void PrintTriple(const MethodRates& r, std::ostream& out) {
  out << StrategyName(r.method) << ": " << Fixed(r.rate_e, 2) << " / "
      << Fixed(r.rate_gr, 2) << " / " << Fixed(r.rate_total, 2) << "  (e / g_r / total)\n";
}

MethodRates RatesOf(Strategy method, int n, Difficulty level, const RolloutReport& rep) {
  MethodRates r;
  r.method = method;
  r.n = n;
  r.level = level;
  r.n_e = rep.n_e;
  r.n_gr = rep.n_gr;
  r.k_e = rep.successes_e;
  r.k_gr = rep.successes_gr;
  r.rate_e = rep.success_rate_e;
  r.rate_gr = rep.success_rate_gr;
  r.rate_total = rep.success_rate_total;
  r.per_seed_total = {rep.success_rate_total};
  return r;
}

// Evaluates one policy on both tags and writes episodes.csv and a one-row
// zero_shot.csv.
int EvalPolicy(const ExperimentConfig& c, bool expert, std::ostream& out) {
  const auto env = MakeEnv(c.env, c.difficulty);
  std::unique_ptr<ChunkPolicy> policy;
  Strategy method = Strategy::kBaseline;
  std::string label = "expert";
  if (expert) {
    policy = std::make_unique<ExpertChunkPolicy>(*env, c.train.window);
  } else {
    if (!fs::exists(c.paths.checkpoint)) {
      throw ValidationError("checkpoint not found: " + c.paths.checkpoint);
    }
    nlohmann::json extra;
    FlowPolicy flow = LoadPolicy(c.paths.checkpoint, c.eval.ode_steps, &extra);
    if (extra.contains("env") && extra["env"] != env->id()) {
      throw ValidationError("checkpoint was trained on env '" +
                            extra["env"].get<std::string>() + "', config has '" +
                            env->id() + "'");
    }
    if (extra.contains("strategy")) {
      method = ParseStrategy(extra["strategy"].get<std::string>());
    }
    label = StrategyName(method);
    policy = std::make_unique<FlowChunkPolicy>(std::move(flow));
  }
  RolloutOptions options;
  options.noise_seed = c.eval.seeds.front();
  options.jobs = c.eval.jobs;
  const auto episodes =
      RunEpisodes(*env, *policy,
                  EvalEpisodes(c.eval.episodes, {ConfigTag::kE, ConfigTag::kGr},
                               c.eval.eval_seed_base),
                  options);
  const RolloutReport report = Summarize(episodes);
  fs::create_directories(c.paths.reports);
  WriteEpisodesCsv(episodes, c.paths.reports + "/episodes.csv");
  ZeroShotTable table;
  table.rows.push_back(RatesOf(method, 0, c.difficulty, report));
  WriteZeroShotCsv(table, c.paths.reports + "/zero_shot.csv");
  out << label << ": " << Fixed(report.success_rate_e, 2) << " / "
      << Fixed(report.success_rate_gr, 2) << " / " << Fixed(report.success_rate_total, 2)
      << "  (e / g_r / total)\n"
      << "wrote " << c.paths.reports << "/episodes.csv\n";
  return kExitOk;
}

void WriteReachCsv(const EfficiencyCurves& curves, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "method,reaches_baseline_at\n";
  for (const auto& [method, n] : curves.reach) {
    f << StrategyName(method) << ',' << (n ? std::to_string(*n) : "") << '\n';
  }
}

ProtocolConfig ProtocolOf(const ExperimentConfig& c, std::ostream& err) {
  ProtocolConfig p = c.Protocol();
  p.progress = [&err](const std::string& line) { err << line << std::endl; };
  return p;
}

void RunZeroShot(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const ZeroShotTable table = ZeroShotProtocol(ProtocolOf(c, err));
  WriteZeroShotCsv(table, c.paths.reports + "/zero_shot.csv");
  WriteGapCsv(table.gaps, c.paths.reports + "/gaps.csv");
  out << "zero-shot (" << c.env.id << ", " << DifficultyName(c.difficulty) << "):\n";
  for (const MethodRates& r : table.rows) PrintTriple(r, out);
}

void RunEfficiency(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const EfficiencyCurves curves = SampleEfficiencyProtocol(ProtocolOf(c, err));
  WriteEfficiencyCsv(curves, c.paths.reports + "/efficiency.csv");
  WriteReachCsv(curves, c.paths.reports + "/efficiency_reach.csv");
  out << "sample efficiency (" << c.env.id << "):\n";
  for (const MethodRates& r : curves.rows) {
    out << StrategyName(r.method) << " N=" << r.n << ": " << Fixed(r.rate_total, 2) << '\n';
  }
}

void RunDifficulty(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  const DifficultyTable table = DifficultyProtocol(ProtocolOf(c, err));
  WriteDifficultyCsv(table, c.paths.reports + "/difficulty.csv");
  out << "difficulty (" << c.env.id << "):\n";
  for (const MethodRates& r : table.rows) {
    out << StrategyName(r.method) << ' ' << DifficultyName(r.level) << ": "
        << Fixed(r.rate_total, 2) << " (delta " << Fixed(table.Delta(r.method, r.level), 2)
        << ")\n";
  }
}

int EvalCommand(const ExperimentConfig& c, const Overrides& o, std::ostream& out,
                std::ostream& err) {
  if (o.protocol.empty()) return EvalPolicy(c, o.expert, out);
  fs::create_directories(c.paths.reports);
  if (o.protocol == "zero-shot") {
    RunZeroShot(c, out, err);
  } else if (o.protocol == "efficiency") {
    RunEfficiency(c, out, err);
  } else {
    RunDifficulty(c, out, err);
  }
  return kExitOk;
}

// --------------------------------------------------------------------- sweep

// Equiv-reg zero-shot runs at every lambda in [eval] lambdas.
void RunLambdaSweep(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  std::ofstream f(c.paths.reports + "/lambda_sweep.csv");
  if (!f) throw std::runtime_error("cannot write lambda_sweep.csv");
  f << "lambda,rate_e,rate_gr,rate_total,gap_held_out_1,gap_gaussian_100\n";
  out << "lambda sweep (equiv-reg):\n";
  for (double lambda : c.eval.lambdas) {
    ProtocolConfig p = ProtocolOf(c, err);
    p.methods = {Strategy::kEquivReg};
    p.train.lambda = lambda;
    const ZeroShotTable table = ZeroShotProtocol(p);
    double held = 0.0, wide = 0.0;
    int n_held = 0, n_wide = 0;
    for (const GapRow& g : table.gaps) {
      if (g.probes == "held-out" && g.scale == 1.0) {
        held += g.gap.mean;
        ++n_held;
      }
      if (g.probes == "gaussian" && g.scale == 100.0) {
        wide += g.gap.mean;
        ++n_wide;
      }
    }
    const MethodRates& r = table.rows.front();
    char line[256];
    std::snprintf(line, sizeof line, "%g,%.4f,%.4f,%.4f,%.6e,%.6e\n", lambda, r.rate_e,
                  r.rate_gr, r.rate_total, held / std::max(n_held, 1),
                  wide / std::max(n_wide, 1));
    f << line;
    out << "lambda=" << lambda << ": ";
    PrintTriple(r, out);
  }
}

int SweepCommand(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  fs::create_directories(c.paths.reports);
  RunZeroShot(c, out, err);
  RunEfficiency(c, out, err);
  RunDifficulty(c, out, err);
  RunLambdaSweep(c, out, err);
  return kExitOk;
}

// --------------------------------------------------------------------- check

int CheckCommand(const ExperimentConfig& c, const Overrides& o, std::ostream& out) {
  CheckOptions options;
  options.seed = c.train.seed;
  options.corrupt = o.corrupt;
  const nlohmann::json report = ChecksToJson(RunChecks(options));
  out << report.dump(2) << '\n';
  return report["passed"].get<bool>() ? kExitOk : kExitFailure;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Symmetry-aware flow-matching policies on planar C2-symmetric tasks",
               "symflow"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalFlags g;
  Overrides o;
  app.add_option("--config", g.config_path, "INI experiment config")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override one key, section.key=value (repeatable)");
  app.add_option("--seed", g.seed, "Overrides train.seed, data.seed and eval.seeds");
  app.add_option("--jobs", g.jobs, "Evaluation worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory (default $SYMFLOW_OUT_DIR or symflow_out)");
  app.add_flag("--print-config", g.print_config, "Print the resolved config and exit");

  CLI::App* gen = app.add_subcommand("gen-data", "Generate expert demonstrations");
  gen->add_option("--env", o.env, "reach or box");
  gen->add_option("--n", o.n, "Number of trajectories")->check(CLI::PositiveNumber);
  gen->add_option("--tag", o.tag, "Reset half: e or g_r");
  gen->add_option("--difficulty", o.difficulty, "narrow or wide");
  gen->add_option("--dataset", o.dataset, "Output JSONL path");

  CLI::App* train = app.add_subcommand("train", "Train a flow-matching policy");
  train->add_option("--env", o.env, "reach or box");
  train->add_option("--difficulty", o.difficulty, "narrow or wide");
  train->add_option("--dataset", o.dataset, "Input JSONL path");
  train->add_option("--checkpoint", o.checkpoint, "Output checkpoint path");
  train->add_option("--strategy", o.strategy, "baseline, sym-aug, equiv-reg or equiv-net");
  train->add_option("--lambda", o.lambda, "Regularizer weight")->check(CLI::NonNegativeNumber);
  train->add_option("--steps", o.steps, "Optimizer steps")->check(CLI::PositiveNumber);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint or run a protocol");
  eval->add_option("--env", o.env, "reach or box");
  eval->add_option("--difficulty", o.difficulty, "narrow or wide");
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate");
  eval->add_flag("--expert", o.expert, "Evaluate the scripted expert");
  eval->add_option("--protocol", o.protocol, "zero-shot, efficiency or difficulty")
      ->check(CLI::IsMember({"zero-shot", "efficiency", "difficulty"}));
  eval->add_option("--episodes", o.episodes, "Episodes per tag")->check(CLI::PositiveNumber);

  CLI::App* sweep = app.add_subcommand("sweep", "Run every protocol and the lambda sweep");
  sweep->add_option("--env", o.env, "reach or box");

  CLI::App* check = app.add_subcommand("check", "Run the invariant suites");
  check->add_option("--corrupt", o.corrupt)->group("");  // test hook

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const ExperimentConfig c = BuildConfig(g, app, o);
    if (g.print_config) {
      out << SerializeConfig(c);
      return kExitOk;
    }
    if (gen->parsed()) return GenData(c, out);
    if (train->parsed()) return TrainCommand(c, out);
    if (eval->parsed()) {
      if (o.protocol.empty() && !o.expert && o.checkpoint.empty() &&
          !fs::exists(c.paths.checkpoint)) {
        err << "error: eval needs --checkpoint, --expert or --protocol\n";
        return kExitUsage;
      }
      return EvalCommand(c, o, out, err);
    }
    if (sweep->parsed()) return SweepCommand(c, out, err);
    return CheckCommand(c, o, out);
  } catch (const ValidationError& e) {
    err << "invalid: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace symflow
