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

#include "symflow/eval.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "symflow/errors.h"

namespace symflow {
namespace {

std::string Format(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::ofstream OpenCsv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Flattens the last H observations, repeating the first one before the
// episode had H of them.
RowVector HistoryRow(const std::vector<Vector>& obs, int history) {
  const int dim = static_cast<int>(obs.front().size());
  RowVector row(history * dim);
  const int n = static_cast<int>(obs.size());
  for (int h = 0; h < history; ++h) {
    const int idx = std::max(0, n - history + h);
    row.segment(h * dim, dim) = obs[idx].transpose();
  }
  return row;
}

void RunGroup(const Env& env, ChunkPolicy& policy,
              const std::vector<EpisodeSpec>& specs, size_t begin, size_t end,
              const RolloutOptions& options, std::vector<EpisodeRecord>* records) {
  const WindowSpec w = policy.window();
  const Representation& rep_act = env.act_space().rep();
  const int dim_a = env.act_space().dim();
  const int n = static_cast<int>(end - begin);

  std::vector<Vector> state(n);
  std::vector<std::vector<Vector>> obs(n);
  std::vector<ConfigTag> tag(n);
  std::vector<std::mt19937_64> noise(n);
  std::vector<int> t(n, 0);
  std::vector<bool> done(n, false), success(n, false);
  std::vector<std::vector<Vector>> visited(n);
  for (int i = 0; i < n; ++i) {
    const EpisodeSpec& spec = specs[begin + i];
    state[i] = env.Reset(spec.seed, spec.tag, &tag[i]);
    obs[i].push_back(env.Observe(state[i]));
    noise[i].seed(SplitMix64(options.noise_seed ^ SplitMix64(spec.seed)));
    if (options.traces != nullptr) visited[i].push_back(state[i]);
  }

  std::vector<int> active;
  for (;;) {
    active.clear();
    for (int i = 0; i < n; ++i) {
      if (!done[i]) active.push_back(i);
    }
    if (active.empty()) break;
    const int m = static_cast<int>(active.size());
    Matrix history(m, w.history * env.obs_space().dim());
    Matrix a0(m, w.chunk * dim_a);
    for (int j = 0; j < m; ++j) {
      const int i = active[j];
      history.row(j) = HistoryRow(obs[i], w.history);
      std::normal_distribution<double> normal;
      for (Eigen::Index c = 0; c < a0.cols(); ++c) a0(j, c) = normal(noise[i]);
      if (tag[i] == ConfigTag::kGr) {
        a0.row(j) = ActFlatRows(rep_act, kReflection, a0.row(j));
      }
    }
    const Matrix chunks = policy.Plan(history, a0);
    if (chunks.rows() != m || chunks.cols() != w.chunk * dim_a) {
      throw ValidationError("policy returned chunks of the wrong shape");
    }
    for (int j = 0; j < m; ++j) {
      const int i = active[j];
      for (int e = 0; e < w.exec && !done[i]; ++e) {
        const Vector a = chunks.row(j).segment(e * dim_a, dim_a).transpose();
        const StepResult r = env.Step(state[i], a, t[i]);
        state[i] = r.state;
        ++t[i];
        obs[i].push_back(env.Observe(state[i]));
        if (options.traces != nullptr) visited[i].push_back(state[i]);
        if (r.done) {
          done[i] = true;
          success[i] = r.success;
        }
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    EpisodeRecord& rec = (*records)[begin + i];
    rec.seed = specs[begin + i].seed;
    rec.config_tag = ConfigTagName(tag[i]);
    rec.success = success[i];
    rec.steps = t[i];
    rec.final_error = env.FinalError(state[i]);
    if (options.traces != nullptr) {
      Matrix& trace = (*options.traces)[begin + i];
      trace.resize(visited[i].size(), env.state_dim());
      for (size_t s = 0; s < visited[i].size(); ++s) {
        trace.row(s) = visited[i][s].transpose();
      }
    }
  }
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct Accumulator {
  MethodRates rates;
  std::vector<double> e, gr;

  void Add(const RolloutReport& r) {
    rates.n_e += r.n_e;
    rates.n_gr += r.n_gr;
    rates.k_e += r.successes_e;
    rates.k_gr += r.successes_gr;
    e.push_back(r.success_rate_e);
    gr.push_back(r.success_rate_gr);
    rates.per_seed_total.push_back(r.success_rate_total);
  }
  MethodRates Finish() {
    rates.rate_e = Mean(e);
    rates.rate_gr = Mean(gr);
    rates.rate_total = Mean(rates.per_seed_total);
    return rates;
  }
};

struct Outcome {
  RolloutReport report;
  std::vector<GapRow> gaps;
};

Dataset HeldOut(const Env& env, const ExpertPolicy& expert,
                const ProtocolConfig& config, ConfigTag tag, uint64_t seed) {
  return GenerateDataset(env, expert, config.held_out_demos, tag,
                         config.held_out_seed_base + seed);
}

Outcome TrainAndEvaluate(const Env& env, const Dataset& data,
                         const Dataset& held_out, const ProtocolConfig& config,
                         Strategy method, uint64_t seed,
                         const std::vector<EpisodeSpec>& episodes) {
  TrainConfig tc = config.train;
  tc.strategy = method;
  tc.seed = seed;
  const TrainingSet probe_set = MakeTrainingSet(held_out, env, tc.window);
  TrainResult trained = Train(MakeTrainingSet(data, env, tc.window), tc, &probe_set);
  Outcome out;
  for (double scale : {1.0, 100.0}) {
    const uint64_t probe_seed = seed + 77;
    out.gaps.push_back(
        {method, seed, "held-out", scale,
         MeasureEquivGap(trained.net.get(),
                         DataProbes(probe_set, config.gap_probes, scale, probe_seed))});
    out.gaps.push_back({method, seed, "gaussian", scale,
                        MeasureEquivGap(trained.net.get(), config.gap_probes, scale,
                                        probe_seed)});
  }
  FlowChunkPolicy policy(FlowPolicy(std::move(trained.net), trained.norm,
                                    trained.window, config.ode_steps));
  RolloutOptions opts;
  opts.noise_seed = seed;
  opts.jobs = config.jobs;
  out.report = Summarize(RunEpisodes(env, policy, episodes, opts));
  out.report.gap_scale_1 = out.gaps[0].gap;
  out.report.gap_scale_100 = out.gaps[2].gap;
  return out;
}

void Report(const ProtocolConfig& config, const std::string& what,
            const RolloutReport& r) {
  if (!config.progress) return;
  std::ostringstream os;
  os << what << ": e " << r.success_rate_e << " g_r " << r.success_rate_gr
     << " total " << r.success_rate_total;
  config.progress(os.str());
}

}  // namespace

// ---------------------------------------------------------------- policies

FlowChunkPolicy::FlowChunkPolicy(FlowPolicy policy) : policy_(std::move(policy)) {}

Matrix FlowChunkPolicy::Plan(const Matrix& history, const Matrix& a0) {
  return policy_.Sample(history, a0);
}

std::unique_ptr<ChunkPolicy> FlowChunkPolicy::Clone() const {
  return std::make_unique<FlowChunkPolicy>(FlowPolicy(
      policy_.net().Clone(), policy_.norm(), policy_.window(), policy_.ode_steps()));
}

ExpertChunkPolicy::ExpertChunkPolicy(const Env& env, WindowSpec window)
    : env_(env), expert_(MakeExpert(env)), window_(window) {
  window_.Validate();
}

Matrix ExpertChunkPolicy::Plan(const Matrix& history, const Matrix& a0) {
  const int dim_o = env_.obs_space().dim();
  const int dim_a = env_.act_space().dim();
  Matrix chunks(history.rows(), window_.chunk * dim_a);
  for (Eigen::Index r = 0; r < history.rows(); ++r) {
    Vector s = history.row(r)
                   .segment((window_.history - 1) * dim_o, env_.state_dim())
                   .transpose();
    for (int c = 0; c < window_.chunk; ++c) {
      const Vector a = expert_->Act(s);
      chunks.row(r).segment(c * dim_a, dim_a) = a.transpose();
      s = env_.Step(s, a, 0).state;
    }
  }
  (void)a0;
  return chunks;
}

std::unique_ptr<ChunkPolicy> ExpertChunkPolicy::Clone() const {
  return std::make_unique<ExpertChunkPolicy>(env_, window_);
}

// ---------------------------------------------------------------- rollouts

RolloutReport Summarize(std::vector<EpisodeRecord> episodes) {
  RolloutReport r;
  double steps = 0.0;
  for (const EpisodeRecord& e : episodes) {
    if (e.config_tag == "g_r") {
      ++r.n_gr;
      r.successes_gr += e.success;
    } else {
      ++r.n_e;
      r.successes_e += e.success;
    }
    steps += e.steps;
  }
  const int n = r.n_e + r.n_gr;
  r.success_rate_e = r.n_e ? static_cast<double>(r.successes_e) / r.n_e : 0.0;
  r.success_rate_gr = r.n_gr ? static_cast<double>(r.successes_gr) / r.n_gr : 0.0;
  r.success_rate_total =
      n ? static_cast<double>(r.successes_e + r.successes_gr) / n : 0.0;
  r.mean_steps = n ? steps / n : 0.0;
  r.episodes = std::move(episodes);
  return r;
}

std::vector<EpisodeRecord> RunEpisodes(const Env& env, const ChunkPolicy& policy,
                                       const std::vector<EpisodeSpec>& specs,
                                       const RolloutOptions& options) {
  const WindowSpec w = policy.window();
  w.Validate();
  if (options.group_size < 1) throw ValidationError("group_size must be >= 1");
  std::vector<EpisodeRecord> records(specs.size());
  if (options.traces != nullptr) options.traces->assign(specs.size(), Matrix());
  const size_t group = static_cast<size_t>(options.group_size);
  const size_t n_groups = (specs.size() + group - 1) / group;

  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    std::unique_ptr<ChunkPolicy> own = policy.Clone();
    for (size_t g; (g = next++) < n_groups;) {
      try {
        RunGroup(env, *own, specs, g * group, std::min(specs.size(), (g + 1) * group),
                 options, &records);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(n_groups)));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
  if (error) std::rethrow_exception(error);
  return records;
}

EpisodeRecord Rollout(const Env& env, const ChunkPolicy& policy, uint64_t seed,
                      ConfigTag tag, uint64_t noise_seed) {
  RolloutOptions opts;
  opts.noise_seed = noise_seed;
  return RunEpisodes(env, policy, {{seed, tag}}, opts).front();
}

std::vector<EpisodeSpec> EvalEpisodes(int n, const std::vector<ConfigTag>& tags,
                                      uint64_t base) {
  std::vector<EpisodeSpec> specs;
  for (ConfigTag tag : tags) {
    for (int i = 0; i < n; ++i) specs.push_back({base + i, tag});
  }
  return specs;
}

Interval Wilson(int k, int n, double z) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(k) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// --------------------------------------------------------------- protocols

TrainResult TrainOn(const Env& env, const Dataset& data, const TrainConfig& config,
                    const Dataset* held_out) {
  if (held_out == nullptr) {
    return Train(MakeTrainingSet(data, env, config.window), config);
  }
  const TrainingSet probe_set = MakeTrainingSet(*held_out, env, config.window);
  return Train(MakeTrainingSet(data, env, config.window), config, &probe_set);
}

ZeroShotTable ZeroShotProtocol(const ProtocolConfig& config) {
  const auto env = MakeEnv(config.env, config.difficulty);
  const auto expert = MakeExpert(*env);
  const auto episodes = EvalEpisodes(config.n_eval, {ConfigTag::kE, ConfigTag::kGr},
                                     config.eval_seed_base);
  std::vector<Accumulator> acc(config.methods.size());
  ZeroShotTable table;
  for (uint64_t seed : config.seeds) {
    const Dataset data = GenerateDataset(*env, *expert, config.n_train, ConfigTag::kE, seed);
    const Dataset held_out = HeldOut(*env, *expert, config, ConfigTag::kE, seed);
    for (size_t m = 0; m < config.methods.size(); ++m) {
      const Strategy method = config.methods[m];
      const Outcome out =
          TrainAndEvaluate(*env, data, held_out, config, method, seed, episodes);
      acc[m].rates.method = method;
      acc[m].rates.n = config.n_train;
      acc[m].rates.level = config.difficulty;
      acc[m].Add(out.report);
      table.gaps.insert(table.gaps.end(), out.gaps.begin(), out.gaps.end());
      Report(config, "zero-shot " + config.env.id + " seed " + std::to_string(seed) +
                         " " + StrategyName(method), out.report);
    }
  }
  for (Accumulator& a : acc) table.rows.push_back(a.Finish());
  return table;
}

EfficiencyCurves SampleEfficiencyProtocol(const ProtocolConfig& config) {
  if (config.dataset_sizes.empty()) throw ValidationError("no dataset sizes");
  const auto env = MakeEnv(config.env, config.difficulty);
  const auto expert = MakeExpert(*env);
  const auto episodes = EvalEpisodes(config.n_eval, {ConfigTag::kE, ConfigTag::kGr},
                                     config.eval_seed_base);
  const int n_max = *std::max_element(config.dataset_sizes.begin(),
                                      config.dataset_sizes.end());
  const size_t cells = config.methods.size() * config.dataset_sizes.size();
  std::vector<Accumulator> acc(cells);
  for (uint64_t seed : config.seeds) {
    // Smaller datasets are prefixes of the largest one.
    const Dataset full = GenerateDataset(*env, *expert, n_max, ConfigTag::kBoth, seed);
    const Dataset held_out = HeldOut(*env, *expert, config, ConfigTag::kBoth, seed);
    for (size_t s = 0; s < config.dataset_sizes.size(); ++s) {
      const int n = config.dataset_sizes[s];
      Dataset data = full;
      data.trajectories.resize(n);
      for (size_t m = 0; m < config.methods.size(); ++m) {
        const Outcome out = TrainAndEvaluate(*env, data, held_out, config,
                                             config.methods[m], seed, episodes);
        Accumulator& a = acc[m * config.dataset_sizes.size() + s];
        a.rates.method = config.methods[m];
        a.rates.n = n;
        a.rates.level = config.difficulty;
        a.Add(out.report);
        Report(config, "efficiency " + config.env.id + " N " + std::to_string(n) +
                           " seed " + std::to_string(seed) + " " +
                           StrategyName(config.methods[m]), out.report);
      }
    }
  }
  EfficiencyCurves curves;
  for (Accumulator& a : acc) curves.rows.push_back(a.Finish());
  std::optional<double> target;
  for (const MethodRates& r : curves.rows) {
    if (r.method == Strategy::kBaseline && r.n == n_max) target = r.rate_total;
  }
  for (Strategy method : config.methods) {
    std::optional<int> reach;
    if (target) {
      for (const MethodRates& r : curves.rows) {
        if (r.method == method && r.rate_total >= *target - 1e-12 &&
            (!reach || r.n < *reach)) {
          reach = r.n;
        }
      }
    }
    curves.reach.emplace_back(method, reach);
  }
  return curves;
}

double DifficultyTable::Delta(Strategy method, Difficulty level) const {
  std::optional<double> rate, base;
  for (const MethodRates& r : rows) {
    if (r.level != level) continue;
    if (r.method == method) rate = r.rate_total;
    if (r.method == Strategy::kBaseline) base = r.rate_total;
  }
  if (!rate || !base) throw ValidationError("difficulty table lacks a row");
  return *rate - *base;
}

DifficultyTable DifficultyProtocol(const ProtocolConfig& config) {
  DifficultyTable table;
  for (Difficulty level : {Difficulty::kNarrow, Difficulty::kWide}) {
    const auto env = MakeEnv(config.env, level);
    const auto expert = MakeExpert(*env);
    const auto episodes = EvalEpisodes(
        config.n_eval, {ConfigTag::kE, ConfigTag::kGr}, config.eval_seed_base);
    std::vector<Accumulator> acc(config.methods.size());
    for (uint64_t seed : config.seeds) {
      const Dataset data =
          GenerateDataset(*env, *expert, config.difficulty_n, ConfigTag::kBoth, seed);
      const Dataset held_out = HeldOut(*env, *expert, config, ConfigTag::kBoth, seed);
      for (size_t m = 0; m < config.methods.size(); ++m) {
        const Outcome out = TrainAndEvaluate(*env, data, held_out, config,
                                             config.methods[m], seed, episodes);
        acc[m].rates.method = config.methods[m];
        acc[m].rates.n = config.difficulty_n;
        acc[m].rates.level = level;
        acc[m].Add(out.report);
        Report(config, std::string("difficulty ") + config.env.id + " " +
                           DifficultyName(level) + " seed " + std::to_string(seed) +
                           " " + StrategyName(config.methods[m]), out.report);
      }
    }
    for (Accumulator& a : acc) table.rows.push_back(a.Finish());
  }
  return table;
}

// --------------------------------------------------------------------- CSV

void WriteZeroShotCsv(const ZeroShotTable& table, const std::string& path) {
  std::ofstream out = OpenCsv(path);
  out << "method,rate_e,rate_gr,rate_total,ci_lo,ci_hi\n";
  for (const MethodRates& r : table.rows) {
    const Interval ci = Wilson(r.k_e + r.k_gr, r.n_e + r.n_gr);
    out << StrategyName(r.method) << ',' << Format("%.4f", r.rate_e) << ','
        << Format("%.4f", r.rate_gr) << ',' << Format("%.4f", r.rate_total) << ','
        << Format("%.4f", ci.lo) << ',' << Format("%.4f", ci.hi) << '\n';
  }
}

void WriteGapCsv(const std::vector<GapRow>& gaps, const std::string& path) {
  std::ofstream out = OpenCsv(path);
  out << "method,seed,probes,scale,mean,max\n";
  for (const GapRow& g : gaps) {
    out << StrategyName(g.method) << ',' << g.seed << ',' << g.probes << ','
        << Format("%g", g.scale)
        << ',' << Format("%.6e", g.gap.mean) << ',' << Format("%.6e", g.gap.max)
        << '\n';
  }
}

void WriteEfficiencyCsv(const EfficiencyCurves& curves, const std::string& path) {
  std::ofstream out = OpenCsv(path);
  out << "method,N,rate,ci_lo,ci_hi\n";
  for (const MethodRates& r : curves.rows) {
    const Interval ci = Wilson(r.k_e + r.k_gr, r.n_e + r.n_gr);
    out << StrategyName(r.method) << ',' << r.n << ',' << Format("%.4f", r.rate_total)
        << ',' << Format("%.4f", ci.lo) << ',' << Format("%.4f", ci.hi) << '\n';
  }
}

void WriteDifficultyCsv(const DifficultyTable& table, const std::string& path) {
  std::ofstream out = OpenCsv(path);
  out << "method,level,rate,ci_lo,ci_hi,delta\n";
  for (const MethodRates& r : table.rows) {
    const Interval ci = Wilson(r.k_e + r.k_gr, r.n_e + r.n_gr);
    out << StrategyName(r.method) << ',' << DifficultyName(r.level) << ','
        << Format("%.4f", r.rate_total) << ',' << Format("%.4f", ci.lo) << ','
        << Format("%.4f", ci.hi) << ','
        << Format("%.4f", table.Delta(r.method, r.level)) << '\n';
  }
}

void WriteEpisodesCsv(const std::vector<EpisodeRecord>& episodes,
                      const std::string& path) {
  std::ofstream out = OpenCsv(path);
  out << "seed,config_tag,success,steps,final_error\n";
  for (const EpisodeRecord& e : episodes) {
    out << e.seed << ',' << e.config_tag << ',' << e.success << ',' << e.steps << ','
        << Format("%.6e", e.final_error) << '\n';
  }
}

}  // namespace symflow
