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

// Acceptance suite: one pass/fail line per criterion. Criteria 5 to 8
// train full-size policies and take about an hour on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "commands.h"
#include "symflow/checks.h"
#include "symflow/eval.h"

namespace symflow {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool passed = false;
  std::string detail;
};

double Since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void Log(const std::string& line) { std::cerr << "  " << line << std::endl; }

// A suite from the check command, with its own runtime bound.
Verdict Suite(const std::function<SuiteResult(const CheckOptions&)>& run, double limit_s) {
  const SuiteResult r = run({});
  const bool fast = r.seconds < limit_s;
  std::string detail = "worst " + Format("%.3e", r.worst) + " (tol " +
                       Format("%.0e", r.tolerance) + "), " + Format("%.2f", r.seconds) +
                       " s (limit " + Format("%g", limit_s) + " s)";
  if (!r.passed) detail += ", " + r.detail;
  return {r.passed && fast, detail};
}

struct Context {
  std::string reports;
  int jobs = 1;
  ProtocolConfig Base(const std::string& env) const {
    ProtocolConfig p;
    p.env.id = env;
    p.jobs = jobs;
    p.progress = Log;
    return p;
  }
  std::map<std::string, ZeroShotTable> zero_shot;  // filled by criterion 5
};

const MethodRates& Row(const std::vector<MethodRates>& rows, Strategy method) {
  for (const MethodRates& r : rows) {
    if (r.method == method) return r;
  }
  throw std::runtime_error("missing row");
}

bool IsSymmetric(Strategy s) { return s != Strategy::kBaseline; }

Verdict ZeroShot(Context* ctx) {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  for (const std::string env : {"reach", "box"}) {
    const ZeroShotTable table = ZeroShotProtocol(ctx->Base(env));
    WriteZeroShotCsv(table, ctx->reports + "/zero_shot_" + env + ".csv");
    WriteGapCsv(table.gaps, ctx->reports + "/gaps_" + env + ".csv");
    ctx->zero_shot[env] = table;
    detail += env + ":";
    for (const MethodRates& r : table.rows) {
      const bool row_ok = IsSymmetric(r.method)
                              ? std::abs(r.rate_gr - r.rate_e) <= 0.15 && r.rate_gr >= 0.6
                              : r.rate_gr <= 0.1;
      ok = ok && row_ok;
      detail += std::string(" ") + StrategyName(r.method) + " " + Format("%.2f", r.rate_e) +
                "/" + Format("%.2f", r.rate_gr) + "/" + Format("%.2f", r.rate_total) +
                (row_ok ? "" : "(x)");
    }
    detail += "; ";
  }
  const double seconds = Since(start);
  ok = ok && seconds <= 30 * 60;
  return {ok, detail + Format("%.0f", seconds) + " s (limit 1800 s)"};
}

Verdict Efficiency(const Context& ctx) {
  const auto start = Clock::now();
  const EfficiencyCurves curves = SampleEfficiencyProtocol(ctx.Base("reach"));
  WriteEfficiencyCsv(curves, ctx.reports + "/efficiency_reach.csv");
  const double seconds = Since(start);
  int reached = 0;
  std::string detail = "baseline@200 " +
                       Format("%.2f", [&] {
                         for (const MethodRates& r : curves.rows) {
                           if (r.method == Strategy::kBaseline && r.n == 200) {
                             return r.rate_total;
                           }
                         }
                         return -1.0;
                       }()) +
                       ";";
  for (const auto& [method, n] : curves.reach) {
    if (!IsSymmetric(method)) continue;
    if (n && *n <= 100) ++reached;
    detail += std::string(" ") + StrategyName(method) + " reaches at " +
              (n ? std::to_string(*n) : "never") + ";";
  }
  return {reached >= 2 && seconds <= 3600,
          detail + " " + std::to_string(reached) + "/3 by N<=100, " +
              Format("%.0f", seconds) + " s (limit 3600 s)"};
}

Verdict DifficultyScaling(const Context& ctx) {
  const DifficultyTable table = DifficultyProtocol(ctx.Base("reach"));
  WriteDifficultyCsv(table, ctx.reports + "/difficulty_reach.csv");
  int larger = 0;
  std::string detail;
  for (Strategy m : {Strategy::kSymAug, Strategy::kEquivReg, Strategy::kEquivNet}) {
    const double narrow = table.Delta(m, Difficulty::kNarrow);
    const double wide = table.Delta(m, Difficulty::kWide);
    if (wide > narrow) ++larger;
    detail += std::string(StrategyName(m)) + " delta narrow " + Format("%+.2f", narrow) +
              " wide " + Format("%+.2f", wide) + "; ";
  }
  return {larger >= 2, detail + std::to_string(larger) + "/3 larger when wide"};
}

double MeanGap(const ZeroShotTable& t, Strategy method, const std::string& probes,
               double scale) {
  double sum = 0.0;
  int n = 0;
  for (const GapRow& g : t.gaps) {
    if (g.method == method && g.probes == probes && g.scale == scale) {
      sum += g.gap.mean;
      ++n;
    }
  }
  if (n == 0) throw std::runtime_error("missing gap rows");
  return sum / n;
}

Verdict EquivRegEffect(Context* ctx) {
  if (ctx->zero_shot.empty()) ZeroShot(ctx);
  bool ok = true;
  std::string detail;
  for (const auto& [env, t] : ctx->zero_shot) {
    const double base = MeanGap(t, Strategy::kBaseline, "held-out", 1.0);
    const double reg = MeanGap(t, Strategy::kEquivReg, "held-out", 1.0);
    const double reg100 = MeanGap(t, Strategy::kEquivReg, "held-out", 100.0);
    const double net100 = MeanGap(t, Strategy::kEquivNet, "held-out", 100.0);
    const double ratio1 = base / reg;
    const double ratio100 = reg100 / std::max(net100, 1e-300);
    ok = ok && ratio1 >= 10.0 && ratio100 >= 1e3;
    detail += env + ": baseline/reg at 1 = " + Format("%.1f", ratio1) + "x (" +
              Format("%.2e", base) + " vs " + Format("%.2e", reg) + "), reg/net at 100 = " +
              Format("%.1e", ratio100) + "x; ";
  }
  return {ok, detail + "need >= 10x and >= 1e3x"};
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Drops the wall_ms column, the one output that measures time.
std::string WithoutWallClock(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  int drop = -1;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (drop < 0) {
      for (size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "wall_ms") drop = static_cast<int>(i);
      }
    }
    for (size_t i = 0; i < cells.size(); ++i) {
      if (static_cast<int>(i) != drop) out += cells[i] + ',';
    }
    out += '\n';
  }
  return out;
}

// Every file under `dir`, keyed by relative path.
std::map<std::string, std::string> Snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = fs::relative(entry.path(), dir).string();
    const std::string text = Slurp(entry.path());
    files[name] = name.ends_with(".log.csv") ? WithoutWallClock(text) : text;
  }
  return files;
}

Verdict Determinism(const Context& ctx) {
  const std::vector<std::vector<std::string>> commands = {
      {"gen-data", "--n", "6"},
      {"gen-data", "--env", "box", "--n", "3", "--tag", "g_r", "--dataset", "{out}/box.jsonl"},
      {"train", "--steps", "40"},
      {"train", "--steps", "20", "--strategy", "equiv-reg", "--checkpoint", "{out}/reg.json"},
      {"eval", "--episodes", "10"},
      {"eval", "--expert", "--env", "box", "--episodes", "5", "--set",
       "paths.reports={out}/expert"},
      {"--set", "eval.seeds=0,1", "--set", "eval.n_train=4", "--set", "train.steps=10",
       "--set", "train.equiv_net_steps=10", "eval", "--protocol", "zero-shot", "--episodes",
       "4"},
      {"check"},
  };
  const std::vector<std::string> small = {
      "--set", "network.width=32", "--set", "equivariant_network.width=8",
      "--set", "equivariant_network.depth=1", "--set", "eval.held_out_demos=3",
      "--set", "eval.gap_probes=50", "--jobs", std::to_string(ctx.jobs)};
  std::map<std::string, std::string> runs[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = fs::path(ctx.reports) / ("determinism_" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (std::vector<std::string> args : commands) {
      for (std::string& a : args) {
        if (const auto pos = a.find("{out}"); pos != std::string::npos) {
          a.replace(pos, 5, dir.string());
        }
      }
      args.insert(args.begin(), small.begin(), small.end());
      args.insert(args.begin(), {"--out", dir.string(), "--seed", "5"});
      std::ostringstream out, err;
      if (const int code = RunCli(args, out, err); code != kExitOk) {
        return {false, "command failed with exit " + std::to_string(code) + ": " + err.str()};
      }
      std::string text = out.str();
      for (size_t pos; (pos = text.find(dir.string())) != std::string::npos;) {
        text.replace(pos, dir.string().size(), "{out}");
      }
      runs[run]["stdout of command " + std::to_string(runs[run].size())] = text;
    }
    for (auto& [name, text] : Snapshot(dir)) runs[run][name] = text;
  }
  std::vector<std::string> differing;
  for (const auto& [name, text] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != text) differing.push_back(name);
  }
  int csv = 0;
  for (const auto& [name, text] : runs[0]) csv += name.ends_with(".csv");
  if (!differing.empty()) return {false, "differs: " + differing.front()};
  return {runs[0].size() == runs[1].size(),
          std::to_string(commands.size()) + " commands twice, " +
              std::to_string(runs[0].size()) + " outputs (" + std::to_string(csv) +
              " CSV) identical, train-log wall_ms excluded"};
}

}  // namespace
}  // namespace symflow

int main(int argc, char** argv) {
  using namespace symflow;
  CLI::App app{"Acceptance suite", "acceptance"};
  std::set<int> only, known;
  Context ctx;
  ctx.reports = "acceptance_reports";
  app.add_option("--only", only, "Criteria to run (default all)")->delimiter(',');
  app.add_option("--known-failure", known,
                 "Criteria whose failure is documented; reported but not fatal")
      ->delimiter(',');
  app.add_option("--reports", ctx.reports, "Directory for the protocol CSVs");
  app.add_option("--jobs", ctx.jobs, "Evaluation worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(ctx.reports);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"group and representation suite",
       [] { return Suite(CheckGroups, 1.0); }},
      {"exact EquivNet equivariance at scales 1 and 100",
       [] { return Suite(CheckLayerEquivariance, 10.0); }},
      {"finite-difference gradients",
       [] { return Suite(CheckGradients, 60.0); }},
      {"environment and expert symmetry, reflected replay",
       [] { return Suite(CheckEnvironments, 30.0); }},
      {"zero-shot pattern on reach then box", [&] { return ZeroShot(&ctx); }},
      {"sample-efficiency pattern on reach", [&] { return Efficiency(ctx); }},
      {"difficulty scaling on reach", [&] { return DifficultyScaling(ctx); }},
      {"EquivReg gap effect (lambda 1)", [&] { return EquivRegEffect(&ctx); }},
      {"determinism of CLI outputs", [&] { return Determinism(ctx); }},
  };
  int fatal = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && only.count(id) == 0) continue;
    std::cerr << "criterion " << id << ": running" << std::endl;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const bool excused = !v.passed && known.count(id) > 0;
    if (!v.passed && !excused) ++fatal;
    std::cout << "criterion " << id << ": " << (v.passed ? "PASS" : "FAIL")
              << (excused ? " (known)" : "") << "  " << criteria[i].first << "  ["
              << v.detail << "]" << std::endl;
  }
  return fatal == 0 ? 0 : 1;
}
