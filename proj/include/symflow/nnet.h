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

#ifndef SYMFLOW_NNET_H_
#define SYMFLOW_NNET_H_

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "symflow/group.h"
#include "symflow/types.h"

// Dense layers with hand-written reverse-mode gradients. Every layer keeps
// the activations of its last Forward call; Backward consumes them and
// accumulates parameter gradients into the shared ParameterStore.
namespace symflow::nnet {

// Over-aligned so that vectorized reductions over parameter blocks split
// the same way on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Flat parameter and gradient arrays shared by all layers of a network.
class ParameterStore {
 public:
  // Reserves `count` zero-initialized parameters; returns their offset.
  int Add(int count);
  int size() const { return static_cast<int>(values_.size()); }

  const Buffer& values() const { return values_; }
  // Bumps the version so cached projections are rebuilt.
  Buffer& mutable_values() {
    ++version_;
    return values_;
  }
  const Buffer& grads() const { return grads_; }
  Buffer& grads() { return grads_; }
  uint64_t version() const { return version_; }
  void ZeroGrad();

  Eigen::Map<const Matrix> View(int offset, int rows, int cols) const {
    return {values_.data() + offset, rows, cols};
  }
  Eigen::Map<Matrix> MutableView(int offset, int rows, int cols) {
    ++version_;
    return {values_.data() + offset, rows, cols};
  }
  Eigen::Map<Matrix> GradView(int offset, int rows, int cols) {
    return {grads_.data() + offset, rows, cols};
  }

 private:
  Buffer values_;
  Buffer grads_;
  uint64_t version_ = 0;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void GlorotInit(ParameterStore* store, int offset, int fan_out, int fan_in,
                std::mt19937_64& rng);

// Throws std::logic_error when Backward runs without a preceding Forward.
void RequireCache(bool has_cache, const char* layer);

// y = x W^T + b.
class Dense {
 public:
  Dense() = default;
  Dense(ParameterStore* store, int in, int out, std::mt19937_64& rng);

  Matrix Forward(const ParameterStore& store, const Matrix& x);
  Matrix Backward(ParameterStore* store, const Matrix& dy);

  int in() const { return in_; }
  int out() const { return out_; }
  int weight_offset() const { return w_; }
  int bias_offset() const { return b_; }

 private:
  int in_ = 0, out_ = 0, w_ = 0, b_ = 0;
  Matrix x_;
  bool has_cache_ = false;
};

// The group average (1/|G|) sum_g rho_out(g)^T W rho_in(g) and its bias
// counterpart. Self-adjoint, so it also maps gradients of the projected
// weight back onto the free weight.
Matrix ProjectWeight(const Representation& rep_in, const Representation& rep_out,
                     const Matrix& w);
Vector ProjectBias(const Representation& rep_out, const Vector& b);

// A linear map that commutes with the group: rho_out(g) W' = W' rho_in(g).
// The free parameters W, b are projected before use.
class EquivariantLinear {
 public:
  EquivariantLinear() = default;
  EquivariantLinear(ParameterStore* store, Representation rep_in,
                    Representation rep_out, std::mt19937_64& rng,
                    bool use_bias = true);

  Matrix Forward(const ParameterStore& store, const Matrix& x);
  Matrix Backward(ParameterStore* store, const Matrix& dy);

  // Projected weight and bias for the current parameters.
  std::pair<Matrix, Vector> Projected(const ParameterStore& store);

  const Representation& rep_in() const { return *rep_in_; }
  const Representation& rep_out() const { return *rep_out_; }
  int weight_offset() const { return w_; }

 private:
  void Refresh(const ParameterStore& store);

  std::shared_ptr<const Representation> rep_in_, rep_out_;
  int w_ = 0, b_ = -1;
  Matrix w_proj_;
  Vector b_proj_;
  uint64_t projected_version_ = UINT64_MAX;
  Matrix x_;
  bool has_cache_ = false;
};

class Tanh {
 public:
  Matrix Forward(const Matrix& x);
  Matrix Backward(const Matrix& dy);

 private:
  Matrix y_;
  bool has_cache_ = false;
};

// Root-mean-square normalization over channels with one gain per channel
// orbit; no mean subtraction.
class OrbitRmsNorm {
 public:
  OrbitRmsNorm() = default;
  OrbitRmsNorm(ParameterStore* store, const Representation& rep);

  Matrix Forward(const ParameterStore& store, const Matrix& x);
  Matrix Backward(ParameterStore* store, const Matrix& dy);

  int num_orbits() const { return static_cast<int>(indicator_.cols()); }

 private:
  int g_ = 0;
  Matrix indicator_;  // channel x orbit, 1 where the channel is in the orbit
  Matrix x_;
  Vector inv_rms_;
  bool has_cache_ = false;
};

// y = x * (1 + m[orbit(c)]) with m given per sample and broadcast over the
// `rows_per_sample` consecutive rows of that sample.
class OrbitModulation {
 public:
  OrbitModulation() = default;
  explicit OrbitModulation(const Representation& rep);

  Matrix Forward(const Matrix& x, const Matrix& m, int rows_per_sample);
  // Returns dx and writes dm.
  Matrix Backward(const Matrix& dy, Matrix* dm);

  int num_orbits() const { return static_cast<int>(indicator_.cols()); }

 private:
  Matrix indicator_;
  int rows_per_sample_ = 1;
  Matrix x_, m_;
  bool has_cache_ = false;
};

// Multi-head self-attention over the `tokens` consecutive rows of each
// sample. Q, K, V and the output map are equivariant; every head's channel
// block must be mapped onto itself by the hidden representation, so the
// scaled dot-product scores are group invariant.
class EquivariantAttention {
 public:
  EquivariantAttention() = default;
  EquivariantAttention(ParameterStore* store, const Representation& rep,
                       int heads, std::mt19937_64& rng);

  Matrix Forward(const ParameterStore& store, const Matrix& x, int tokens);
  Matrix Backward(ParameterStore* store, const Matrix& dy);

  // Attention weights of the last Forward (sample b, head h): tokens x tokens.
  const Matrix& weights(int b, int h) const {
    return probs_[static_cast<size_t>(b) * heads_ + h];
  }

 private:
  int heads_ = 1, head_dim_ = 0, tokens_ = 0;
  EquivariantLinear q_, k_, v_, o_;
  Matrix q_out_, k_out_, v_out_;
  std::vector<Matrix> probs_;
  bool has_cache_ = false;
};

// [sin(pi 2^j k), cos(pi 2^j k)] for j = 0 .. count/2 - 1.
Matrix TimeFeatures(const Vector& k, int count);

}  // namespace symflow::nnet

#endif  // SYMFLOW_NNET_H_
