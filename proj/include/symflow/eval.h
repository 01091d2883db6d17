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

#ifndef SYMFLOW_EVAL_H_
#define SYMFLOW_EVAL_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "symflow/cfm.h"
#include "symflow/envs.h"
#include "symflow/types.h"

namespace symflow {

// Anything that maps observation histories to action chunks.
class ChunkPolicy {
 public:
  virtual ~ChunkPolicy() = default;
  // history: B x H*dim_o raw observations, oldest first. a0: B x A*dim_a
  // noise, already coupled to the episode's tag. Returns raw action chunks.
  virtual Matrix Plan(const Matrix& history, const Matrix& a0) = 0;
  virtual std::unique_ptr<ChunkPolicy> Clone() const = 0;
  virtual WindowSpec window() const = 0;
};

class FlowChunkPolicy : public ChunkPolicy {
 public:
  explicit FlowChunkPolicy(FlowPolicy policy);
  Matrix Plan(const Matrix& history, const Matrix& a0) override;
  std::unique_ptr<ChunkPolicy> Clone() const override;
  WindowSpec window() const override { return policy_.window(); }

 private:
  FlowPolicy policy_;
};

// The scripted expert planning a chunk by simulating itself. The state is
// read from the leading entries of the latest observation.
class ExpertChunkPolicy : public ChunkPolicy {
 public:
  ExpertChunkPolicy(const Env& env, WindowSpec window);
  Matrix Plan(const Matrix& history, const Matrix& a0) override;
  std::unique_ptr<ChunkPolicy> Clone() const override;
  WindowSpec window() const override { return window_; }

 private:
  const Env& env_;
  std::unique_ptr<ExpertPolicy> expert_;
  WindowSpec window_;
};

struct EpisodeSpec {
  uint64_t seed = 0;
  ConfigTag tag = ConfigTag::kE;
};

struct EpisodeRecord {
  uint64_t seed = 0;
  std::string config_tag;
  bool success = false;
  int steps = 0;
  double final_error = 0.0;
};

struct RolloutReport {
  std::vector<EpisodeRecord> episodes;
  int n_e = 0, n_gr = 0;
  int successes_e = 0, successes_gr = 0;
  double success_rate_e = 0.0;
  double success_rate_gr = 0.0;
  double success_rate_total = 0.0;
  double mean_steps = 0.0;
  std::optional<GapStats> gap_scale_1, gap_scale_100;
};

RolloutReport Summarize(std::vector<EpisodeRecord> episodes);

struct RolloutOptions {
  uint64_t noise_seed = 0;
  int jobs = 1;
  // Episodes run in lockstep groups of this size; results do not depend on
  // `jobs`.
  int group_size = 50;
  // When set, receives every episode's visited states (T+1 x dim_s).
  std::vector<Matrix>* traces = nullptr;
};

// Receding-horizon rollouts: sample a chunk of A actions, execute the first
// E, re-observe. Episode i draws its noise from a stream keyed by
// (noise_seed, seed); g_r episodes act on g_r applied to that noise, so an
// episode and its mirror are coupled.
std::vector<EpisodeRecord> RunEpisodes(const Env& env, const ChunkPolicy& policy,
                                       const std::vector<EpisodeSpec>& specs,
                                       const RolloutOptions& options = {});

EpisodeRecord Rollout(const Env& env, const ChunkPolicy& policy, uint64_t seed,
                      ConfigTag tag, uint64_t noise_seed = 0);

// n episodes per listed tag, seeds base .. base+n-1 shared across tags.
std::vector<EpisodeSpec> EvalEpisodes(int n, const std::vector<ConfigTag>& tags,
                                      uint64_t base);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Wilson score interval (95%) for k successes in n trials.
Interval Wilson(int k, int n, double z = 1.959963984540054);

// ---------------------------------------------------------------- protocols

struct ProtocolConfig {
  EnvSettings env;
  Difficulty difficulty = Difficulty::kNarrow;
  TrainConfig train;  // strategy and seed are set per run
  std::vector<Strategy> methods = {Strategy::kBaseline, Strategy::kSymAug,
                                   Strategy::kEquivReg, Strategy::kEquivNet};
  std::vector<uint64_t> seeds = {0, 1, 2};
  int n_train = 100;
  int n_eval = 50;  // per tag
  std::vector<int> dataset_sizes = {10, 25, 50, 100, 200};
  int difficulty_n = 25;
  int ode_steps = 10;
  int jobs = 1;
  uint64_t eval_seed_base = 1000000;
  int gap_probes = 1000;
  // Demonstrations kept out of training for the equivariance gap, drawn
  // with the training tag from seeds held_out_seed_base + training seed.
  int held_out_demos = 20;
  uint64_t held_out_seed_base = 1ULL << 32;
  std::function<void(const std::string&)> progress;
};

struct MethodRates {
  Strategy method = Strategy::kBaseline;
  int n = 0;                 // dataset size or training demos
  Difficulty level = Difficulty::kNarrow;
  int n_e = 0, n_gr = 0, k_e = 0, k_gr = 0;  // pooled over seeds
  double rate_e = 0.0, rate_gr = 0.0, rate_total = 0.0;  // mean over seeds
  std::vector<double> per_seed_total;
};

struct GapRow {
  Strategy method = Strategy::kBaseline;
  uint64_t seed = 0;
  std::string probes;  // "held-out" demonstration windows or "gaussian"
  double scale = 1.0;
  GapStats gap;
};

struct ZeroShotTable {
  std::vector<MethodRates> rows;
  std::vector<GapRow> gaps;
};

struct EfficiencyCurves {
  std::vector<MethodRates> rows;  // one per (method, N)
  // Smallest N at which each method reaches the baseline's rate at N_max;
  // empty when never reached.
  std::vector<std::pair<Strategy, std::optional<int>>> reach;
};

struct DifficultyTable {
  std::vector<MethodRates> rows;  // one per (method, level)
  // Symmetry-over-baseline success delta per (method, level).
  double Delta(Strategy method, Difficulty level) const;
};

ZeroShotTable ZeroShotProtocol(const ProtocolConfig& config);
EfficiencyCurves SampleEfficiencyProtocol(const ProtocolConfig& config);
DifficultyTable DifficultyProtocol(const ProtocolConfig& config);

TrainResult TrainOn(const Env& env, const Dataset& data, const TrainConfig& config,
                    const Dataset* held_out = nullptr);

void WriteZeroShotCsv(const ZeroShotTable& table, const std::string& path);
void WriteGapCsv(const std::vector<GapRow>& gaps, const std::string& path);
void WriteEfficiencyCsv(const EfficiencyCurves& curves, const std::string& path);
void WriteDifficultyCsv(const DifficultyTable& table, const std::string& path);
void WriteEpisodesCsv(const std::vector<EpisodeRecord>& episodes,
                      const std::string& path);

}  // namespace symflow

#endif  // SYMFLOW_EVAL_H_
