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

#include "symflow/velocity_net.h"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <utility>

#include "symflow/errors.h"

namespace symflow {

const char* NetworkVariantName(NetworkVariant v) {
  return v == NetworkVariant::kMlp ? "mlp" : "equivariant-transformer";
}

NetworkVariant ParseNetworkVariant(const std::string& name) {
  if (name == "mlp") return NetworkVariant::kMlp;
  if (name == "equivariant-transformer") {
    return NetworkVariant::kEquivariantTransformer;
  }
  throw ValidationError("unknown network variant '" + name + "'");
}

VelocityNetwork::VelocityNetwork(NetworkConfig config, FlowShape shape,
                                 Representation rep_obs, Representation rep_act)
    : config_(config),
      shape_(shape),
      rep_obs_(std::move(rep_obs)),
      rep_act_(std::move(rep_act)) {
  if (shape_.history < 1 || shape_.chunk < 1) {
    throw ValidationError("network: history and chunk must be >= 1");
  }
  if (rep_obs_.dim() != shape_.obs_dim || rep_act_.dim() != shape_.act_dim) {
    throw ValidationError("network: representation dims do not match shape");
  }
  if (!(rep_obs_.group() == rep_act_.group())) {
    throw ValidationError("network: observation and action groups differ");
  }
  if (config_.time_features < 2 || config_.time_features % 2 != 0) {
    throw ValidationError("network: time_features must be even and >= 2");
  }
}

Matrix VelocityNetwork::Forward(const Matrix& a, const Matrix& obs,
                                const Vector& k) {
  if (a.cols() != shape_.act_width() || obs.cols() != shape_.obs_width() ||
      a.rows() != obs.rows() || k.size() != a.rows()) {
    throw ValidationError("network: input shapes do not match (chunk " +
                          std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + ", history " +
                          std::to_string(obs.rows()) + "x" +
                          std::to_string(obs.cols()) + ")");
  }
  if (!a.allFinite() || !obs.allFinite() || !k.allFinite()) {
    throw ValidationError("network: non-finite input");
  }
  if (k.size() > 0 && (k.minCoeff() < 0.0 || k.maxCoeff() > 1.0)) {
    throw ValidationError("network: flow time outside [0, 1]");
  }
  Matrix out = DoForward(a, obs, k);
  has_forward_ = true;
  return out;
}

void VelocityNetwork::Backward(const Matrix& d_velocity) {
  nnet::RequireCache(has_forward_, "velocity network");
  DoBackward(d_velocity);
}

// ---------------------------------------------------------------------- MLP

MlpVelocityNetwork::MlpVelocityNetwork(NetworkConfig config, FlowShape shape,
                                       Representation rep_obs,
                                       Representation rep_act)
    : VelocityNetwork(config, shape, std::move(rep_obs), std::move(rep_act)) {
  std::mt19937_64 rng(config_.seed);
  int in = shape_.obs_width() + shape_.act_width() + config_.time_features;
  for (int l = 0; l < config_.depth; ++l) {
    dense_.emplace_back(&store_, in, config_.width, rng);
    act_.emplace_back();
    in = config_.width;
  }
  dense_.emplace_back(&store_, in, shape_.act_width(), rng);
}

std::unique_ptr<VelocityNetwork> MlpVelocityNetwork::Clone() const {
  return std::make_unique<MlpVelocityNetwork>(*this);
}

Matrix MlpVelocityNetwork::DoForward(const Matrix& a, const Matrix& obs,
                                     const Vector& k) {
  Matrix x(a.rows(), obs.cols() + a.cols() + config_.time_features);
  x << obs, a, nnet::TimeFeatures(k, config_.time_features);
  for (size_t l = 0; l < act_.size(); ++l) {
    x = act_[l].Forward(dense_[l].Forward(store_, x));
  }
  return dense_.back().Forward(store_, x);
}

void MlpVelocityNetwork::DoBackward(const Matrix& d_velocity) {
  Matrix d = dense_.back().Backward(&store_, d_velocity);
  for (size_t l = act_.size(); l-- > 0;) {
    d = dense_[l].Backward(&store_, act_[l].Backward(d));
  }
}

// ------------------------------------------------------------- transformer

EquivariantTransformer::EquivariantTransformer(NetworkConfig config,
                                               FlowShape shape,
                                               Representation rep_obs,
                                               Representation rep_act)
    : VelocityNetwork(config, shape, std::move(rep_obs), std::move(rep_act)),
      hidden_(Representation::Trivial(rep_obs_.group_ptr(), 1)) {
  const GroupPtr& group = rep_obs_.group_ptr();
  const int order = group->order();
  if (config_.width % (order * config_.heads) != 0) {
    throw ValidationError(
        "transformer: width must be a multiple of |G| * heads");
  }
  hidden_ = Repeat(Representation::Regular(group), config_.width / order);
  const Representation mlp_hidden = Repeat(Representation::Regular(group),
                                           config_.mlp_ratio * config_.width / order);
  const Representation time_rep =
      Representation::Trivial(group, config_.time_features);

  std::mt19937_64 rng(config_.seed);
  obs_embed_ = nnet::EquivariantLinear(&store_, rep_obs_, hidden_, rng);
  act_embed_ = nnet::EquivariantLinear(&store_, rep_act_, hidden_, rng);
  time_embed_ = nnet::EquivariantLinear(&store_, time_rep, hidden_, rng);
  pos_ = store_.Add(tokens() * config_.width);
  {
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto& v = store_.mutable_values();
    for (int i = 0; i < tokens() * config_.width; ++i) v[pos_ + i] = u(rng);
  }
  for (int l = 0; l < config_.depth; ++l) {
    Block b;
    b.norm1 = nnet::OrbitRmsNorm(&store_, hidden_);
    b.gain1 = nnet::Dense(&store_, config_.time_features, b.norm1.num_orbits(), rng);
    b.mod1 = nnet::OrbitModulation(hidden_);
    b.attn = nnet::EquivariantAttention(&store_, hidden_, config_.heads, rng);
    b.norm2 = nnet::OrbitRmsNorm(&store_, hidden_);
    b.gain2 = nnet::Dense(&store_, config_.time_features, b.norm2.num_orbits(), rng);
    b.mod2 = nnet::OrbitModulation(hidden_);
    b.fc1 = nnet::EquivariantLinear(&store_, hidden_, mlp_hidden, rng);
    b.fc2 = nnet::EquivariantLinear(&store_, mlp_hidden, hidden_, rng);
    // Time gains start at zero so every block begins unmodulated.
    for (const nnet::Dense* d : {&b.gain1, &b.gain2}) {
      store_.MutableView(d->weight_offset(), d->out(), d->in()).setZero();
    }
    blocks_.push_back(std::move(b));
  }
  final_norm_ = nnet::OrbitRmsNorm(&store_, hidden_);
  head_ = nnet::EquivariantLinear(&store_, hidden_, rep_act_, rng);
}

std::unique_ptr<VelocityNetwork> EquivariantTransformer::Clone() const {
  return std::make_unique<EquivariantTransformer>(*this);
}

Matrix EquivariantTransformer::ProjectedPositions() const {
  const int t_count = tokens(), d = config_.width;
  const auto pos = store_.View(pos_, t_count, d);
  Matrix out(t_count, d);
  for (int t = 0; t < t_count; ++t) {
    out.row(t) = hidden_.ProjectInvariant(pos.row(t).transpose()).transpose();
  }
  return out;
}

Matrix EquivariantTransformer::DoForward(const Matrix& a, const Matrix& obs,
                                         const Vector& k) {
  const int h_len = shape_.history, a_len = shape_.chunk, t_count = tokens();
  const int d = config_.width;
  batch_ = a.rows();
  time_features_ = nnet::TimeFeatures(k, config_.time_features);

  const Eigen::Map<const Matrix> obs_rows(obs.data(), batch_ * h_len,
                                          shape_.obs_dim);
  const Eigen::Map<const Matrix> act_rows(a.data(), batch_ * a_len,
                                          shape_.act_dim);
  const Matrix e_obs = obs_embed_.Forward(store_, obs_rows);
  const Matrix e_act = act_embed_.Forward(store_, act_rows);
  const Matrix e_time = time_embed_.Forward(store_, time_features_);
  const Matrix pos = ProjectedPositions();

  Matrix x(batch_ * t_count, d);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    const Eigen::Index base = b * t_count;
    for (int t = 0; t < h_len; ++t) x.row(base + t) = e_obs.row(b * h_len + t);
    for (int t = 0; t < a_len; ++t) {
      x.row(base + h_len + t) = e_act.row(b * a_len + t);
    }
    x.row(base + h_len + a_len) = e_time.row(b);
    x.middleRows(base, t_count) += pos;
  }

  for (Block& blk : blocks_) {
    const Matrix m1 = blk.gain1.Forward(store_, time_features_);
    x += blk.attn.Forward(
        store_, blk.mod1.Forward(blk.norm1.Forward(store_, x), m1, t_count),
        t_count);
    const Matrix m2 = blk.gain2.Forward(store_, time_features_);
    const Matrix h = blk.mod2.Forward(blk.norm2.Forward(store_, x), m2, t_count);
    x += blk.fc2.Forward(store_, blk.act.Forward(blk.fc1.Forward(store_, h)));
  }

  const Matrix normed = final_norm_.Forward(store_, x);
  Matrix action_tokens(batch_ * a_len, d);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    action_tokens.middleRows(b * a_len, a_len) =
        normed.middleRows(b * t_count + h_len, a_len);
  }
  const Matrix out_rows = head_.Forward(store_, action_tokens);
  return Eigen::Map<const Matrix>(out_rows.data(), batch_, shape_.act_width());
}

void EquivariantTransformer::DoBackward(const Matrix& d_velocity) {
  const int h_len = shape_.history, a_len = shape_.chunk, t_count = tokens();
  const int d = config_.width;
  if (d_velocity.rows() != batch_ || d_velocity.cols() != shape_.act_width()) {
    throw ValidationError("transformer: upstream gradient shape mismatch");
  }
  const Eigen::Map<const Matrix> d_out_rows(d_velocity.data(), batch_ * a_len,
                                            shape_.act_dim);
  const Matrix d_tokens = head_.Backward(&store_, d_out_rows);
  Matrix d_normed = Matrix::Zero(batch_ * t_count, d);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    d_normed.middleRows(b * t_count + h_len, a_len) =
        d_tokens.middleRows(b * a_len, a_len);
  }
  Matrix dx = final_norm_.Backward(&store_, d_normed);

  Matrix dm;
  for (size_t l = blocks_.size(); l-- > 0;) {
    Block& blk = blocks_[l];
    Matrix dh = blk.fc1.Backward(
        &store_, blk.act.Backward(blk.fc2.Backward(&store_, dx)));
    dh = blk.mod2.Backward(dh, &dm);
    blk.gain2.Backward(&store_, dm);
    dx += blk.norm2.Backward(&store_, dh);

    dh = blk.attn.Backward(&store_, dx);
    dh = blk.mod1.Backward(dh, &dm);
    blk.gain1.Backward(&store_, dm);
    dx += blk.norm1.Backward(&store_, dh);
  }

  Matrix d_obs(batch_ * h_len, d), d_act(batch_ * a_len, d), d_time(batch_, d);
  Matrix d_pos = Matrix::Zero(t_count, d);
  for (Eigen::Index b = 0; b < batch_; ++b) {
    const Eigen::Index base = b * t_count;
    for (int t = 0; t < h_len; ++t) d_obs.row(b * h_len + t) = dx.row(base + t);
    for (int t = 0; t < a_len; ++t) {
      d_act.row(b * a_len + t) = dx.row(base + h_len + t);
    }
    d_time.row(b) = dx.row(base + h_len + a_len);
    d_pos += dx.middleRows(base, t_count);
  }
  obs_embed_.Backward(&store_, d_obs);
  act_embed_.Backward(&store_, d_act);
  time_embed_.Backward(&store_, d_time);
  auto g_pos = store_.GradView(pos_, t_count, d);
  for (int t = 0; t < t_count; ++t) {
    g_pos.row(t) += hidden_.ProjectInvariant(d_pos.row(t).transpose()).transpose();
  }
}

std::unique_ptr<VelocityNetwork> MakeVelocityNetwork(
    const NetworkConfig& config, const FlowShape& shape,
    const Representation& rep_obs, const Representation& rep_act) {
  if (config.variant == NetworkVariant::kMlp) {
    return std::make_unique<MlpVelocityNetwork>(config, shape, rep_obs, rep_act);
  }
  return std::make_unique<EquivariantTransformer>(config, shape, rep_obs,
                                                  rep_act);
}

// ------------------------------------------------------------- checkpoints

nlohmann::json CheckpointToJson(const VelocityNetwork& net,
                                const nlohmann::json& extra) {
  const NetworkConfig& c = net.config();
  const FlowShape& s = net.shape();
  return {{"format", "symflow-checkpoint-v1"},
          {"architecture",
           {{"variant", NetworkVariantName(c.variant)},
            {"width", c.width},
            {"depth", c.depth},
            {"heads", c.heads},
            {"mlp_ratio", c.mlp_ratio},
            {"time_features", c.time_features},
            {"seed", c.seed}}},
          {"shape",
           {{"history", s.history},
            {"chunk", s.chunk},
            {"obs_dim", s.obs_dim},
            {"act_dim", s.act_dim}}},
          {"group", GroupToJson(net.rep_obs().group())},
          {"rep_obs", RepresentationToJson(net.rep_obs())},
          {"rep_act", RepresentationToJson(net.rep_act())},
          {"params", std::vector<double>(net.params().values().begin(),
                                   net.params().values().end())},
          {"extra", extra.is_null() ? nlohmann::json::object() : extra}};
}

std::unique_ptr<VelocityNetwork> NetworkFromCheckpoint(const nlohmann::json& j,
                                                       nlohmann::json* extra) {
  try {
    if (j.value("format", "") != "symflow-checkpoint-v1") {
      throw ValidationError("not a symflow checkpoint");
    }
    const auto& arch = j.at("architecture");
    NetworkConfig c;
    c.variant = ParseNetworkVariant(arch.at("variant").get<std::string>());
    c.width = arch.at("width").get<int>();
    c.depth = arch.at("depth").get<int>();
    c.heads = arch.at("heads").get<int>();
    c.mlp_ratio = arch.at("mlp_ratio").get<int>();
    c.time_features = arch.at("time_features").get<int>();
    c.seed = arch.at("seed").get<uint64_t>();
    const auto& sj = j.at("shape");
    FlowShape s{sj.at("history").get<int>(), sj.at("chunk").get<int>(),
                sj.at("obs_dim").get<int>(), sj.at("act_dim").get<int>()};
    GroupPtr group = GroupFromJson(j.at("group"));
    Representation rep_obs = RepresentationFromJson(j.at("rep_obs"), group);
    Representation rep_act = RepresentationFromJson(j.at("rep_act"), group);
    auto net = MakeVelocityNetwork(c, s, rep_obs, rep_act);
    const auto params = j.at("params").get<std::vector<double>>();
    if (static_cast<int>(params.size()) != net->params().size()) {
      throw ValidationError("checkpoint has " + std::to_string(params.size()) +
                            " parameters, architecture needs " +
                            std::to_string(net->params().size()));
    }
    for (double v : params) {
      if (!std::isfinite(v)) throw ValidationError("non-finite parameter");
    }
    net->params().mutable_values().assign(params.begin(), params.end());
    if (extra != nullptr) *extra = j.value("extra", nlohmann::json::object());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const VelocityNetwork& net, const std::string& path,
                    const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << CheckpointToJson(net, extra).dump() << '\n';
}

std::unique_ptr<VelocityNetwork> LoadCheckpoint(const std::string& path,
                                                nlohmann::json* extra) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
  return NetworkFromCheckpoint(j, extra);
}

}  // namespace symflow
