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

#ifndef SYMFLOW_TOOLS_CONFIG_H_
#define SYMFLOW_TOOLS_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "symflow/cfm.h"
#include "symflow/envs.h"
#include "symflow/eval.h"

namespace symflow {

struct DataSettings {
  int n = 100;
  ConfigTag tag = ConfigTag::kE;
  uint64_t seed = 0;
};

struct EvalSettings {
  int episodes = 50;  // per tag
  std::vector<uint64_t> seeds = {0, 1, 2};
  int ode_steps = 10;
  int jobs = 1;
  int n_train = 100;
  std::vector<int> dataset_sizes = {10, 25, 50, 100, 200};
  int difficulty_n = 25;
  int held_out_demos = 20;
  int gap_probes = 1000;
  uint64_t eval_seed_base = 1000000;
  std::vector<Strategy> methods = {Strategy::kBaseline, Strategy::kSymAug,
                                   Strategy::kEquivReg, Strategy::kEquivNet};
  std::vector<double> lambdas = {0.1, 1.0, 10.0};
};

// Empty paths resolve under the output directory.
struct PathSettings {
  std::string out;
  std::string dataset;
  std::string checkpoint;
  std::string reports;
};

// Everything that determines a run, loaded from one INI file.
struct ExperimentConfig {
  EnvSettings env;
  Difficulty difficulty = Difficulty::kNarrow;
  TrainConfig train;
  DataSettings data;
  EvalSettings eval;
  PathSettings paths;

  // Throws ValidationError on out-of-range values.
  void Validate() const;
  ProtocolConfig Protocol() const;
};

// Parses INI text. Unknown sections or keys and malformed values throw
// ValidationError. Keys absent from the text keep their defaults.
ExperimentConfig ParseConfig(const std::string& text);
ExperimentConfig LoadConfig(const std::string& path);
// Every key, one section per block; ParseConfig(Serialize(c)) reproduces c.
std::string SerializeConfig(const ExperimentConfig& config);
// Applies "section.key=value".
void SetConfigValue(ExperimentConfig* config, const std::string& assignment);

// $SYMFLOW_OUT_DIR, or "symflow_out".
std::string DefaultOutDir();
// Fills empty paths from the output directory.
PathSettings ResolvePaths(const PathSettings& paths);

}  // namespace symflow

#endif  // SYMFLOW_TOOLS_CONFIG_H_
