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

#ifndef SYMFLOW_CFM_H_
#define SYMFLOW_CFM_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "symflow/envs.h"
#include "symflow/spaces.h"
#include "symflow/types.h"
#include "symflow/velocity_net.h"

namespace symflow {

enum class Strategy { kBaseline, kSymAug, kEquivReg, kEquivNet };

const char* StrategyName(Strategy s);
Strategy ParseStrategy(const std::string& name);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Cosine decay of the learning rate to zero over the run.
  bool cosine = true;
};

struct TrainConfig {
  Strategy strategy = Strategy::kBaseline;
  double lambda = 1.0;  // equiv-reg only
  int batch_size = 64;
  int steps = 10000;
  int equiv_net_steps = 6000;  // replaces `steps` for equiv-net
  AdamConfig adam;
  uint64_t seed = 0;
  WindowSpec window;
  NetworkConfig network;  // baseline, sym-aug and equiv-reg
  NetworkConfig equivariant{.variant = NetworkVariant::kEquivariantTransformer,
                            .width = 32,
                            .depth = 2,
                            .heads = 2};  // equiv-net
  int probe_every = 100;  // equivariance gap logging period
  int probe_size = 256;

  // Throws ValidationError on out-of-range values.
  void Validate() const;
};

// The network actually trained: equiv-net forces the transformer.
NetworkConfig ResolveNetwork(const TrainConfig& config);
int ResolveSteps(const TrainConfig& config);

// One conditional flow-matching target on the linear path.
struct FlowSample {
  Vector a0, a1, ak, u;
  double k = 0.0;
};

FlowSample MakeFlowSample(const Vector& a1, double k, const Vector& a0);
FlowSample MakeFlowSample(const Vector& a1, std::mt19937_64& rng);

// A batch of flow samples with their (flattened) histories.
struct FlowBatch {
  Matrix obs;  // B x H*dim_o
  Matrix a0, a1, ak, u;  // B x A*dim_a
  Vector k;
};

FlowBatch MakeFlowBatch(const Matrix& obs, const Matrix& a1, const Vector& k,
                        const Matrix& a0);
FlowBatch MakeFlowBatch(const Matrix& obs, const Matrix& a1,
                        std::mt19937_64& rng);

// Per-channel scales taken from the SpaceSpecs. Orbit-constant scales make
// the normalization commute with the group action.
struct Normalizer {
  Vector obs_scale;  // dim_o
  Vector act_scale;  // dim_a

  static Normalizer FromSpaces(const SpaceSpec& obs, const SpaceSpec& act);
  Matrix Obs(const Matrix& rows) const;
  Matrix Act(const Matrix& rows) const;
  Matrix Unact(const Matrix& rows) const;
};

// Windowed, normalized training pairs.
struct TrainingSet {
  Matrix obs;  // N x H*dim_o
  Matrix act;  // N x A*dim_a
  FlowShape shape;
  Representation rep_obs, rep_act;
  Normalizer norm;
};

TrainingSet MakeTrainingSet(const Dataset& data, const Env& env,
                            const WindowSpec& window);

// Mean over the batch of |v(a_k, O, k) - u*|^2. Accumulates parameter
// gradients scaled by `weight` when `weight` is nonzero.
double CfmLoss(VelocityNetwork* net, const FlowBatch& batch, double weight = 0.0);

// Mean over the batch of |g_r v(a_k, O, k) - v(g_r a_k, g_r O, k)|^2, with
// gradients scaled by `weight` as above.
double EquivReg(VelocityNetwork* net, const FlowBatch& batch, double weight = 0.0);

// cfm + lambda * reg in one stacked forward pass, gradients accumulated.
struct LossTerms {
  double cfm = 0.0;
  double reg = 0.0;
};
LossTerms CfmWithReg(VelocityNetwork* net, const FlowBatch& batch, double lambda);

// Reflects each (obs, a1) row by its own element of `elements`.
void ApplyElements(const Representation& rep_obs, const Representation& rep_act,
                   const std::vector<int>& elements, Matrix* obs, Matrix* a1);

// Draws e or g_r per row with probability 1/2 and applies it. Returns the
// elements drawn.
std::vector<int> AugmentBatch(const Representation& rep_obs,
                              const Representation& rep_act, Matrix* obs,
                              Matrix* a1, std::mt19937_64& rng);

struct GapStats {
  double mean = 0.0;
  double max = 0.0;
};

// Network inputs in normalized coordinates.
struct ProbeBatch {
  Matrix obs;
  Matrix a;
  Vector k;
};

// Standard normal inputs times `scale`, k uniform.
ProbeBatch GaussianProbes(const FlowShape& shape, int n, double scale,
                          uint64_t seed);
// Windows drawn from `set` with fresh noise and k, both inputs times `scale`.
ProbeBatch DataProbes(const TrainingSet& set, int n, double scale, uint64_t seed);

// |g_r v(a, O, k) - v(g_r a, g_r O, k)| per probe.
GapStats MeasureEquivGap(VelocityNetwork* net, const ProbeBatch& probes);
GapStats MeasureEquivGap(VelocityNetwork* net, int n_probes, double scale,
                         uint64_t seed);

class Adam {
 public:
  Adam(const AdamConfig& config, int size);
  // `lr_scale` multiplies the configured learning rate for this step.
  void Step(nnet::ParameterStore* store, double lr_scale = 1.0);

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  int t_ = 0;
};

struct LogRow {
  int step = 0;
  double loss = 0.0;
  double equiv_gap = -1.0;  // negative when not probed at this step
  double wall_ms = 0.0;
};

struct TrainResult {
  std::unique_ptr<VelocityNetwork> net;
  Normalizer norm;
  WindowSpec window;
  std::vector<LogRow> log;
};

// Throws DivergenceError when the loss is non-finite or exceeds 1e6. The
// logged gap uses windows of `held_out` when given, Gaussian probes
// otherwise.
TrainResult Train(const TrainingSet& data, const TrainConfig& config,
                  const TrainingSet* held_out = nullptr);

void WriteTrainLog(const std::vector<LogRow>& log, const std::string& path);

// Euler integration of the velocity field from a0 over n_steps. Throws
// DivergenceError on a non-finite iterate.
Matrix SampleActionChunk(VelocityNetwork* net, const Matrix& obs,
                         const Matrix& a0, int n_steps);
Matrix SampleActionChunk(VelocityNetwork* net, const Matrix& obs, int n_steps,
                         std::mt19937_64& rng);

// A trained network with its normalization, acting on raw observations.
class FlowPolicy {
 public:
  FlowPolicy(std::unique_ptr<VelocityNetwork> net, Normalizer norm,
             WindowSpec window, int ode_steps = 10);

  // history: B x H*dim_o raw observations; a0: B x A*dim_a standard normal
  // noise. Returns B x A*dim_a raw actions.
  Matrix Sample(const Matrix& history, const Matrix& a0);

  VelocityNetwork& net() { return *net_; }
  const VelocityNetwork& net() const { return *net_; }
  const WindowSpec& window() const { return window_; }
  const Normalizer& norm() const { return norm_; }
  int ode_steps() const { return ode_steps_; }

 private:
  std::unique_ptr<VelocityNetwork> net_;
  Normalizer norm_;
  WindowSpec window_;
  int ode_steps_;
};

// Checkpoint with the normalization and window in its "extra" field.
void SavePolicy(const TrainResult& result, const std::string& path,
                nlohmann::json extra = nlohmann::json::object());
FlowPolicy LoadPolicy(const std::string& path, int ode_steps = 10,
                      nlohmann::json* extra = nullptr);

}  // namespace symflow

#endif  // SYMFLOW_CFM_H_
