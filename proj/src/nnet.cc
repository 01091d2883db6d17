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

#include "symflow/nnet.h"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "symflow/errors.h"

namespace symflow::nnet {

int ParameterStore::Add(int count) {
  const int offset = size();
  values_.resize(values_.size() + count, 0.0);
  grads_.resize(grads_.size() + count, 0.0);
  ++version_;
  return offset;
}

void ParameterStore::ZeroGrad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

void GlorotInit(ParameterStore* store, int offset, int fan_out, int fan_in,
                std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  auto& v = store->mutable_values();
  for (int i = 0; i < fan_out * fan_in; ++i) v[offset + i] = u(rng);
}

void RequireCache(bool has_cache, const char* layer) {
  if (!has_cache) {
    throw std::logic_error(std::string(layer) + ": backward before forward");
  }
}

// -------------------------------------------------------------------- Dense

Dense::Dense(ParameterStore* store, int in, int out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  w_ = store->Add(in * out);
  b_ = store->Add(out);
  GlorotInit(store, w_, out, in, rng);
}

Matrix Dense::Forward(const ParameterStore& store, const Matrix& x) {
  if (x.cols() != in_) {
    throw ValidationError("dense: input width " + std::to_string(x.cols()) +
                          ", expected " + std::to_string(in_));
  }
  const auto w = store.View(w_, out_, in_);
  const auto b = store.View(b_, 1, out_);
  x_ = x;
  has_cache_ = true;
  Matrix y = x * w.transpose();
  y.rowwise() += b.row(0);
  return y;
}

Matrix Dense::Backward(ParameterStore* store, const Matrix& dy) {
  RequireCache(has_cache_, "dense");
  store->GradView(w_, out_, in_).noalias() += dy.transpose() * x_;
  store->GradView(b_, 1, out_).row(0) += dy.colwise().sum();
  return dy * store->View(w_, out_, in_);
}

// ----------------------------------------------------------- equivariance

Matrix ProjectWeight(const Representation& rep_in, const Representation& rep_out,
                     const Matrix& w) {
  if (!(rep_in.group() == rep_out.group())) {
    throw ValidationError("projection between representations of different "
                          "groups");
  }
  if (w.rows() != rep_out.dim() || w.cols() != rep_in.dim()) {
    throw ValidationError("projection: weight shape does not match reps");
  }
  const int order = rep_in.group().order();
  Matrix acc = Matrix::Zero(w.rows(), w.cols());
  // (P^T W Q)[src_out[r], src_in[c]] = s_out[r] s_in[c] W[r, c].
  for (int g = 0; g < order; ++g) {
    const SignedPermutation& po = rep_out.signed_permutation(g);
    const SignedPermutation& pi = rep_in.signed_permutation(g);
    for (int r = 0; r < po.dim(); ++r) {
      const int i = po.source[r];
      for (int c = 0; c < pi.dim(); ++c) {
        acc(i, pi.source[c]) += po.sign[r] * pi.sign[c] * w(r, c);
      }
    }
  }
  return acc / static_cast<double>(order);
}

Vector ProjectBias(const Representation& rep_out, const Vector& b) {
  const int order = rep_out.group().order();
  Vector acc = Vector::Zero(b.size());
  for (int g = 0; g < order; ++g) {
    const SignedPermutation& po = rep_out.signed_permutation(g);
    for (int r = 0; r < po.dim(); ++r) acc[po.source[r]] += po.sign[r] * b[r];
  }
  return acc / static_cast<double>(order);
}

EquivariantLinear::EquivariantLinear(ParameterStore* store,
                                     Representation rep_in,
                                     Representation rep_out,
                                     std::mt19937_64& rng, bool use_bias)
    : rep_in_(std::make_shared<const Representation>(std::move(rep_in))),
      rep_out_(std::make_shared<const Representation>(std::move(rep_out))) {
  if (!(rep_in_->group() == rep_out_->group())) {
    throw ValidationError("equivariant linear: representation group mismatch");
  }
  w_ = store->Add(rep_in_->dim() * rep_out_->dim());
  if (use_bias) b_ = store->Add(rep_out_->dim());
  GlorotInit(store, w_, rep_out_->dim(), rep_in_->dim(), rng);
}

void EquivariantLinear::Refresh(const ParameterStore& store) {
  if (projected_version_ == store.version()) return;
  const int in = rep_in_->dim(), out = rep_out_->dim();
  w_proj_ = ProjectWeight(*rep_in_, *rep_out_, store.View(w_, out, in));
  if (b_ >= 0) {
    b_proj_ = ProjectBias(*rep_out_, store.View(b_, out, 1));
  } else {
    b_proj_ = Vector::Zero(out);
  }
  projected_version_ = store.version();
}

std::pair<Matrix, Vector> EquivariantLinear::Projected(
    const ParameterStore& store) {
  Refresh(store);
  return {w_proj_, b_proj_};
}

Matrix EquivariantLinear::Forward(const ParameterStore& store,
                                  const Matrix& x) {
  if (x.cols() != rep_in_->dim()) {
    throw ValidationError("equivariant linear: input width " +
                          std::to_string(x.cols()) + ", expected " +
                          std::to_string(rep_in_->dim()));
  }
  Refresh(store);
  x_ = x;
  has_cache_ = true;
  Matrix y = x * w_proj_.transpose();
  y.rowwise() += b_proj_.transpose();
  return y;
}

Matrix EquivariantLinear::Backward(ParameterStore* store, const Matrix& dy) {
  RequireCache(has_cache_, "equivariant linear");
  const int in = rep_in_->dim(), out = rep_out_->dim();
  const Matrix dw = dy.transpose() * x_;
  store->GradView(w_, out, in) += ProjectWeight(*rep_in_, *rep_out_, dw);
  if (b_ >= 0) {
    const Vector db = dy.colwise().sum().transpose();
    store->GradView(b_, out, 1) += ProjectBias(*rep_out_, db);
  }
  return dy * w_proj_;
}

// --------------------------------------------------------------------- Tanh

Matrix Tanh::Forward(const Matrix& x) {
  // tanh|x| = 1 - 2 / (exp(2|x|) + 1) vectorizes, unlike std::tanh; the sign
  // is restored afterwards so the activation stays exactly odd.
  const Array t = 1.0 - 2.0 / ((2.0 * x.array().abs()).exp() + 1.0);
  y_ = (x.array() < 0.0).select(-t, t).matrix();
  has_cache_ = true;
  return y_;
}

Matrix Tanh::Backward(const Matrix& dy) {
  RequireCache(has_cache_, "tanh");
  return (dy.array() * (1.0 - y_.array().square())).matrix();
}

// ---------------------------------------------------------------- RMS norm

namespace {

constexpr double kRmsEps = 1e-6;

Matrix OrbitIndicator(const Representation& rep) {
  const auto orbits = rep.ChannelOrbits();
  Matrix p = Matrix::Zero(rep.dim(), static_cast<Eigen::Index>(orbits.size()));
  for (size_t o = 0; o < orbits.size(); ++o) {
    for (int c : orbits[o]) p(c, o) = 1.0;
  }
  return p;
}

}  // namespace

OrbitRmsNorm::OrbitRmsNorm(ParameterStore* store, const Representation& rep)
    : indicator_(OrbitIndicator(rep)) {
  g_ = store->Add(num_orbits());
  auto& v = store->mutable_values();
  for (int o = 0; o < num_orbits(); ++o) v[g_ + o] = 1.0;
}

Matrix OrbitRmsNorm::Forward(const ParameterStore& store, const Matrix& x) {
  const Eigen::Index d = indicator_.rows();
  if (x.cols() != d) throw ValidationError("rms norm: width mismatch");
  x_ = x;
  inv_rms_ = ((x.array().square().rowwise().sum() / d) + kRmsEps).rsqrt().matrix();
  const RowVector gain =
      (indicator_ * store.View(g_, num_orbits(), 1)).transpose();
  has_cache_ = true;
  return ((x.array().colwise() * inv_rms_.array()).rowwise() * gain.array()).matrix();
}

Matrix OrbitRmsNorm::Backward(ParameterStore* store, const Matrix& dy) {
  RequireCache(has_cache_, "rms norm");
  const Eigen::Index d = indicator_.rows();
  const RowVector gain =
      (indicator_ * store->View(g_, num_orbits(), 1)).transpose();
  const auto s = inv_rms_.array();
  const Array prod = dy.array() * x_.array();
  store->GradView(g_, 1, num_orbits()) +=
      (prod.colwise() * s).colwise().sum().matrix() * indicator_;
  const Eigen::ArrayXd coef =
      (prod.rowwise() * gain.array()).rowwise().sum() * s.cube() / d;
  return ((dy.array().rowwise() * gain.array()).colwise() * s -
          x_.array().colwise() * coef)
      .matrix();
}

// --------------------------------------------------------------- modulation

OrbitModulation::OrbitModulation(const Representation& rep)
    : indicator_(OrbitIndicator(rep)) {}

Matrix OrbitModulation::Forward(const Matrix& x, const Matrix& m,
                                int rows_per_sample) {
  const Eigen::Index d = indicator_.rows();
  if (x.cols() != d || m.cols() != num_orbits() ||
      x.rows() != m.rows() * rows_per_sample) {
    throw ValidationError("modulation: shape mismatch");
  }
  x_ = x;
  m_ = m;
  rows_per_sample_ = rows_per_sample;
  const Matrix scale = (m * indicator_.transpose()).array() + 1.0;
  Matrix y(x.rows(), d);
  for (Eigen::Index b = 0; b < m.rows(); ++b) {
    y.middleRows(b * rows_per_sample, rows_per_sample) =
        (x.middleRows(b * rows_per_sample, rows_per_sample).array().rowwise() *
         scale.row(b).array())
            .matrix();
  }
  has_cache_ = true;
  return y;
}

Matrix OrbitModulation::Backward(const Matrix& dy, Matrix* dm) {
  RequireCache(has_cache_, "modulation");
  const int t = rows_per_sample_;
  const Matrix scale = (m_ * indicator_.transpose()).array() + 1.0;
  Matrix dx(dy.rows(), dy.cols());
  Matrix per_channel(m_.rows(), dy.cols());
  for (Eigen::Index b = 0; b < m_.rows(); ++b) {
    const auto g = dy.middleRows(b * t, t).array();
    dx.middleRows(b * t, t) = (g.rowwise() * scale.row(b).array()).matrix();
    per_channel.row(b) = (g * x_.middleRows(b * t, t).array()).colwise().sum().matrix();
  }
  *dm = per_channel * indicator_;
  return dx;
}

// ---------------------------------------------------------------- attention

EquivariantAttention::EquivariantAttention(ParameterStore* store,
                                           const Representation& rep,
                                           int heads, std::mt19937_64& rng)
    : heads_(heads) {
  if (heads < 1 || rep.dim() % heads != 0) {
    throw ValidationError("attention: width must be divisible by heads");
  }
  head_dim_ = rep.dim() / heads;
  for (int g = 0; g < rep.group().order(); ++g) {
    const SignedPermutation& p = rep.signed_permutation(g);
    for (int r = 0; r < p.dim(); ++r) {
      if (r / head_dim_ != p.source[r] / head_dim_) {
        throw ValidationError(
            "attention: representation mixes channels across heads");
      }
    }
  }
  q_ = EquivariantLinear(store, rep, rep, rng);
  k_ = EquivariantLinear(store, rep, rep, rng);
  v_ = EquivariantLinear(store, rep, rep, rng);
  o_ = EquivariantLinear(store, rep, rep, rng);
}

Matrix EquivariantAttention::Forward(const ParameterStore& store,
                                     const Matrix& x, int tokens) {
  if (x.rows() % tokens != 0) {
    throw ValidationError("attention: rows not a multiple of tokens");
  }
  tokens_ = tokens;
  const Eigen::Index batch = x.rows() / tokens;
  q_out_ = q_.Forward(store, x);
  k_out_ = k_.Forward(store, x);
  v_out_ = v_.Forward(store, x);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  probs_.assign(static_cast<size_t>(batch) * heads_, Matrix());
  Matrix mixed(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const auto q = q_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const auto k = k_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const auto v = v_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      Matrix s = (q * k.transpose()) * scale;
      for (int i = 0; i < tokens; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      mixed.block(b * tokens, h * head_dim_, tokens, head_dim_).noalias() =
          s * v;
      probs_[b * heads_ + h] = std::move(s);
    }
  }
  has_cache_ = true;
  return o_.Forward(store, mixed);
}

Matrix EquivariantAttention::Backward(ParameterStore* store, const Matrix& dy) {
  RequireCache(has_cache_, "attention");
  const Matrix dmixed = o_.Backward(store, dy);
  const int tokens = tokens_;
  const Eigen::Index batch = dy.rows() / tokens;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));
  Matrix dq(dy.rows(), dy.cols()), dk(dy.rows(), dy.cols()),
      dv(dy.rows(), dy.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int h = 0; h < heads_; ++h) {
      const Matrix& p = probs_[b * heads_ + h];
      const auto q = q_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const auto k = k_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const auto v = v_out_.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const auto dout =
          dmixed.block(b * tokens, h * head_dim_, tokens, head_dim_);
      const Matrix dp = dout * v.transpose();
      dv.block(b * tokens, h * head_dim_, tokens, head_dim_).noalias() =
          p.transpose() * dout;
      const Eigen::VectorXd rowdot =
          (dp.array() * p.array()).rowwise().sum().matrix();
      Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix();
      ds *= scale;
      dq.block(b * tokens, h * head_dim_, tokens, head_dim_).noalias() = ds * k;
      dk.block(b * tokens, h * head_dim_, tokens, head_dim_).noalias() =
          ds.transpose() * q;
    }
  }
  Matrix dx = q_.Backward(store, dq);
  dx += k_.Backward(store, dk);
  dx += v_.Backward(store, dv);
  return dx;
}

Matrix TimeFeatures(const Vector& k, int count) {
  Matrix f(k.size(), count);
  for (Eigen::Index r = 0; r < k.size(); ++r) {
    for (int j = 0; j < count / 2; ++j) {
      const double w = std::numbers::pi * std::ldexp(1.0, j);
      f(r, 2 * j) = std::sin(w * k[r]);
      f(r, 2 * j + 1) = std::cos(w * k[r]);
    }
  }
  return f;
}

}  // namespace symflow::nnet
