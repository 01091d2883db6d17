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

#ifndef SYMFLOW_VELOCITY_NET_H_
#define SYMFLOW_VELOCITY_NET_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "symflow/group.h"
#include "symflow/nnet.h"
#include "symflow/types.h"

namespace symflow {

enum class NetworkVariant { kMlp, kEquivariantTransformer };

const char* NetworkVariantName(NetworkVariant v);
NetworkVariant ParseNetworkVariant(const std::string& name);

struct NetworkConfig {
  NetworkVariant variant = NetworkVariant::kMlp;
  int width = 256;  // MLP hidden width, or transformer channels
  int depth = 3;    // MLP hidden layers, or transformer blocks
  int heads = 4;
  int mlp_ratio = 2;
  int time_features = 8;
  uint64_t seed = 0;
};

// History length, chunk length and the two space dimensions.
struct FlowShape {
  int history = 2;
  int chunk = 8;
  int obs_dim = 0;
  int act_dim = 0;

  int obs_width() const { return history * obs_dim; }
  int act_width() const { return chunk * act_dim; }
  bool operator==(const FlowShape&) const = default;
};

// Velocity field v(a_k, O, k). Inputs are batched row-wise: a_k is
// B x (A * dim_a), O is B x (H * dim_o), k has B entries in [0, 1].
class VelocityNetwork {
 public:
  VelocityNetwork(NetworkConfig config, FlowShape shape, Representation rep_obs,
                  Representation rep_act);
  virtual ~VelocityNetwork() = default;

  // Throws ValidationError on shape mismatch, non-finite input or k
  // outside [0, 1].
  Matrix Forward(const Matrix& a, const Matrix& obs, const Vector& k);
  // Accumulates parameter gradients for d(loss)/d(velocity).
  void Backward(const Matrix& d_velocity);

  virtual std::unique_ptr<VelocityNetwork> Clone() const = 0;

  nnet::ParameterStore& params() { return store_; }
  const nnet::ParameterStore& params() const { return store_; }
  const NetworkConfig& config() const { return config_; }
  const FlowShape& shape() const { return shape_; }
  const Representation& rep_obs() const { return rep_obs_; }
  const Representation& rep_act() const { return rep_act_; }

 protected:
  virtual Matrix DoForward(const Matrix& a, const Matrix& obs,
                           const Vector& k) = 0;
  virtual void DoBackward(const Matrix& d_velocity) = 0;

  NetworkConfig config_;
  FlowShape shape_;
  Representation rep_obs_, rep_act_;
  nnet::ParameterStore store_;
  bool has_forward_ = false;
};

// [flatten(O), flatten(a_k), time features] -> depth x (Dense, tanh) -> Dense.
class MlpVelocityNetwork : public VelocityNetwork {
 public:
  MlpVelocityNetwork(NetworkConfig config, FlowShape shape,
                     Representation rep_obs, Representation rep_act);
  std::unique_ptr<VelocityNetwork> Clone() const override;

 protected:
  Matrix DoForward(const Matrix& a, const Matrix& obs,
                   const Vector& k) override;
  void DoBackward(const Matrix& d_velocity) override;

 private:
  std::vector<nnet::Dense> dense_;
  std::vector<nnet::Tanh> act_;
};

// Transformer whose every module commutes with the group action.
//
// Tokens per sample: one per history step, one per chunk step and one for
// the flow time. Hidden channels carry copies of the regular representation.
// Embeddings, attention projections, MLP blocks and the output head are
// EquivariantLinear; positional encodings live in the invariant subspace;
// the flow time enters as an invariant token and as per-orbit gains on the
// normalized residual stream. tanh is odd, so it commutes with signed
// permutations, and RMS normalization uses no mean subtraction.
class EquivariantTransformer : public VelocityNetwork {
 public:
  EquivariantTransformer(NetworkConfig config, FlowShape shape,
                         Representation rep_obs, Representation rep_act);
  std::unique_ptr<VelocityNetwork> Clone() const override;

  const Representation& hidden_rep() const { return hidden_; }
  int tokens() const { return shape_.history + shape_.chunk + 1; }

 protected:
  Matrix DoForward(const Matrix& a, const Matrix& obs,
                   const Vector& k) override;
  void DoBackward(const Matrix& d_velocity) override;

 private:
  struct Block {
    nnet::OrbitRmsNorm norm1, norm2;
    nnet::Dense gain1, gain2;
    nnet::OrbitModulation mod1, mod2;
    nnet::EquivariantAttention attn;
    nnet::EquivariantLinear fc1, fc2;
    nnet::Tanh act;
  };

  Matrix ProjectedPositions() const;

  Representation hidden_;
  nnet::EquivariantLinear obs_embed_, act_embed_, time_embed_;
  int pos_ = 0;
  std::vector<Block> blocks_;
  nnet::OrbitRmsNorm final_norm_;
  nnet::EquivariantLinear head_;
  Matrix time_features_;
  Eigen::Index batch_ = 0;
};

std::unique_ptr<VelocityNetwork> MakeVelocityNetwork(const NetworkConfig& config,
                                                     const FlowShape& shape,
                                                     const Representation& rep_obs,
                                                     const Representation& rep_act);

// Self-describing JSON checkpoint: architecture, shape, group and
// representations, flat parameters, plus caller metadata under "extra".
nlohmann::json CheckpointToJson(const VelocityNetwork& net,
                                const nlohmann::json& extra = {});
// Rebuilds the network and validates shapes, parameter count and
// representations before use. Throws ValidationError.
std::unique_ptr<VelocityNetwork> NetworkFromCheckpoint(
    const nlohmann::json& j, nlohmann::json* extra = nullptr);
void SaveCheckpoint(const VelocityNetwork& net, const std::string& path,
                    const nlohmann::json& extra = {});
std::unique_ptr<VelocityNetwork> LoadCheckpoint(const std::string& path,
                                                nlohmann::json* extra = nullptr);

}  // namespace symflow

#endif  // SYMFLOW_VELOCITY_NET_H_
