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

#include "symflow/cfm.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "symflow/errors.h"

namespace symflow {
namespace {

Matrix Gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Multiplies (or divides) every dim-sized block of each row by `scale`.
Matrix ScaleBlocks(const Matrix& rows, const Vector& scale, bool divide) {
  const Eigen::Index dim = scale.size();
  if (dim == 0 || rows.cols() % dim != 0) {
    throw ValidationError("normalize: row width " + std::to_string(rows.cols()) +
                          " is not a multiple of " + std::to_string(dim));
  }
  Matrix out(rows.rows(), rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) {
      const double s = scale[c % dim];
      out(r, c) = divide ? rows(r, c) / s : rows(r, c) * s;
    }
  }
  return out;
}

Matrix Stack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

void CheckLoss(double loss, int step) {
  if (!std::isfinite(loss) || loss > 1e6) {
    std::ostringstream os;
    os << "training diverged at step " << step << ": loss " << loss;
    throw DivergenceError(os.str());
  }
}

}  // namespace

const char* StrategyName(Strategy s) {
  switch (s) {
    case Strategy::kBaseline: return "baseline";
    case Strategy::kSymAug: return "sym-aug";
    case Strategy::kEquivReg: return "equiv-reg";
    case Strategy::kEquivNet: return "equiv-net";
  }
  return "?";
}

Strategy ParseStrategy(const std::string& name) {
  for (Strategy s : {Strategy::kBaseline, Strategy::kSymAug, Strategy::kEquivReg,
                     Strategy::kEquivNet}) {
    if (name == StrategyName(s)) return s;
  }
  throw ValidationError("unknown strategy '" + name + "'");
}

void TrainConfig::Validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be a finite nonnegative number");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (steps < 0 || equiv_net_steps < 0) {
    throw ValidationError("steps must be >= 0");
  }
  if (!(adam.lr > 0.0) || !(adam.eps > 0.0) || adam.beta1 < 0.0 ||
      adam.beta1 >= 1.0 || adam.beta2 < 0.0 || adam.beta2 >= 1.0) {
    throw ValidationError("invalid Adam settings");
  }
  if (probe_every < 1 || probe_size < 1) {
    throw ValidationError("probe_every and probe_size must be >= 1");
  }
  for (const NetworkConfig& n : {network, equivariant}) {
    if (n.width < 1 || n.depth < 0 || n.heads < 1 || n.mlp_ratio < 1 ||
        n.time_features < 0) {
      throw ValidationError("invalid network hyperparameters");
    }
  }
  window.Validate();
}

NetworkConfig ResolveNetwork(const TrainConfig& config) {
  NetworkConfig net = config.network;
  if (config.strategy == Strategy::kEquivNet) {
    net = config.equivariant;
    net.variant = NetworkVariant::kEquivariantTransformer;
  }
  net.seed = config.seed;
  return net;
}

int ResolveSteps(const TrainConfig& config) {
  return config.strategy == Strategy::kEquivNet ? config.equiv_net_steps
                                                : config.steps;
}

// ------------------------------------------------------------ flow samples

FlowSample MakeFlowSample(const Vector& a1, double k, const Vector& a0) {
  FlowSample s;
  s.a0 = a0;
  s.a1 = a1;
  s.k = k;
  s.ak = (1.0 - k) * a0 + k * a1;
  s.u = a1 - a0;
  return s;
}

FlowSample MakeFlowSample(const Vector& a1, std::mt19937_64& rng) {
  const double k = UniformUnit(rng);
  const Vector a0 = Gaussian(a1.size(), 1, rng);
  return MakeFlowSample(a1, k, a0);
}

FlowBatch MakeFlowBatch(const Matrix& obs, const Matrix& a1, const Vector& k,
                        const Matrix& a0) {
  FlowBatch b;
  b.obs = obs;
  b.a0 = a0;
  b.a1 = a1;
  b.k = k;
  b.ak = a0 + k.asDiagonal() * (a1 - a0);
  b.u = a1 - a0;
  return b;
}

FlowBatch MakeFlowBatch(const Matrix& obs, const Matrix& a1,
                        std::mt19937_64& rng) {
  Vector k(a1.rows());
  for (double& v : k) v = UniformUnit(rng);
  const Matrix a0 = Gaussian(a1.rows(), a1.cols(), rng);
  return MakeFlowBatch(obs, a1, k, a0);
}

// ----------------------------------------------------------- normalization

Normalizer Normalizer::FromSpaces(const SpaceSpec& obs, const SpaceSpec& act) {
  return {obs.scales(), act.scales()};
}

Matrix Normalizer::Obs(const Matrix& rows) const {
  return ScaleBlocks(rows, obs_scale, true);
}

Matrix Normalizer::Act(const Matrix& rows) const {
  return ScaleBlocks(rows, act_scale, true);
}

Matrix Normalizer::Unact(const Matrix& rows) const {
  return ScaleBlocks(rows, act_scale, false);
}

TrainingSet MakeTrainingSet(const Dataset& data, const Env& env,
                            const WindowSpec& window) {
  window.Validate();
  if (data.env != env.id()) {
    throw ValidationError("dataset is for '" + data.env + "', environment is '" +
                          env.id() + "'");
  }
  const int dim_o = env.obs_space().dim();
  const int dim_a = env.act_space().dim();
  std::vector<WindowPair> pairs;
  for (const Trajectory& t : data.trajectories) {
    if (t.obs.cols() != dim_o || t.act.cols() != dim_a) {
      throw ValidationError("trajectory does not match the environment spaces");
    }
    for (WindowPair& p : Window(t, window)) pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw ValidationError("dataset yields no training windows");

  TrainingSet set{Matrix(pairs.size(), window.history * dim_o),
                  Matrix(pairs.size(), window.chunk * dim_a),
                  FlowShape{window.history, window.chunk, dim_o, dim_a},
                  env.obs_space().rep(), env.act_space().rep(),
                  Normalizer::FromSpaces(env.obs_space(), env.act_space())};
  for (size_t i = 0; i < pairs.size(); ++i) {
    set.obs.row(i) = Eigen::Map<const RowVector>(pairs[i].history.data(),
                                                 pairs[i].history.size());
    set.act.row(i) = Eigen::Map<const RowVector>(pairs[i].chunk.data(),
                                                 pairs[i].chunk.size());
  }
  set.obs = set.norm.Obs(set.obs);
  set.act = set.norm.Act(set.act);
  return set;
}

// ------------------------------------------------------------------ losses

double CfmLoss(VelocityNetwork* net, const FlowBatch& batch, double weight) {
  const double n = static_cast<double>(batch.k.size());
  const Matrix diff = net->Forward(batch.ak, batch.obs, batch.k) - batch.u;
  const double loss = diff.squaredNorm() / n;
  if (!std::isfinite(loss)) throw DivergenceError("non-finite flow-matching loss");
  if (weight != 0.0) net->Backward((2.0 * weight / n) * diff);
  return loss;
}

LossTerms CfmWithReg(VelocityNetwork* net, const FlowBatch& batch, double lambda) {
  const Representation& ro = net->rep_obs();
  const Representation& ra = net->rep_act();
  const int g = kReflection;
  const int g_inv = ra.group().Inverse(g);
  const Eigen::Index n = batch.k.size();
  const Matrix out =
      net->Forward(Stack(batch.ak, ActFlatRows(ra, g, batch.ak)),
                   Stack(batch.obs, ActFlatRows(ro, g, batch.obs)),
                   (Vector(2 * n) << batch.k, batch.k).finished());
  const Matrix v = out.topRows(n);
  const Matrix diff = v - batch.u;
  const Matrix gap = ActFlatRows(ra, g, v) - out.bottomRows(n);
  LossTerms terms{diff.squaredNorm() / n, gap.squaredNorm() / n};
  if (!std::isfinite(terms.cfm) || !std::isfinite(terms.reg)) {
    throw DivergenceError("non-finite loss");
  }
  Matrix grad(2 * n, out.cols());
  grad.topRows(n) = (2.0 / n) * diff + (2.0 * lambda / n) * ActFlatRows(ra, g_inv, gap);
  grad.bottomRows(n) = (-2.0 * lambda / n) * gap;
  net->Backward(grad);
  return terms;
}

double EquivReg(VelocityNetwork* net, const FlowBatch& batch, double weight) {
  const Representation& ro = net->rep_obs();
  const Representation& ra = net->rep_act();
  const int g = kReflection;
  const Eigen::Index n = batch.k.size();
  const Matrix out =
      net->Forward(Stack(batch.ak, ActFlatRows(ra, g, batch.ak)),
                   Stack(batch.obs, ActFlatRows(ro, g, batch.obs)),
                   (Vector(2 * n) << batch.k, batch.k).finished());
  const Matrix gap = ActFlatRows(ra, g, out.topRows(n)) - out.bottomRows(n);
  const double reg = gap.squaredNorm() / n;
  if (!std::isfinite(reg)) throw DivergenceError("non-finite equivariance penalty");
  if (weight != 0.0) {
    Matrix grad(2 * n, out.cols());
    grad.topRows(n) = (2.0 * weight / n) * ActFlatRows(ra, ra.group().Inverse(g), gap);
    grad.bottomRows(n) = (-2.0 * weight / n) * gap;
    net->Backward(grad);
  }
  return reg;
}

void ApplyElements(const Representation& rep_obs, const Representation& rep_act,
                   const std::vector<int>& elements, Matrix* obs, Matrix* a1) {
  for (Eigen::Index r = 0; r < obs->rows(); ++r) {
    const int g = elements[r];
    if (g == kIdentity) continue;
    obs->row(r) = ActFlatRows(rep_obs, g, obs->row(r));
    a1->row(r) = ActFlatRows(rep_act, g, a1->row(r));
  }
}

std::vector<int> AugmentBatch(const Representation& rep_obs,
                              const Representation& rep_act, Matrix* obs,
                              Matrix* a1, std::mt19937_64& rng) {
  std::vector<int> elements(obs->rows());
  for (int& g : elements) g = (rng() >> 63) ? kReflection : kIdentity;
  ApplyElements(rep_obs, rep_act, elements, obs, a1);
  return elements;
}

ProbeBatch GaussianProbes(const FlowShape& shape, int n, double scale,
                          uint64_t seed) {
  std::mt19937_64 rng(seed);
  ProbeBatch p;
  p.a = Gaussian(n, shape.act_width(), rng, scale);
  p.obs = Gaussian(n, shape.obs_width(), rng, scale);
  p.k.resize(n);
  for (double& v : p.k) v = UniformUnit(rng);
  return p;
}

ProbeBatch DataProbes(const TrainingSet& set, int n, double scale, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, set.obs.rows() - 1);
  Matrix obs(n, set.obs.cols()), a1(n, set.act.cols());
  for (int r = 0; r < n; ++r) {
    const Eigen::Index i = pick(rng);
    obs.row(r) = set.obs.row(i);
    a1.row(r) = set.act.row(i);
  }
  const FlowBatch b = MakeFlowBatch(obs, a1, rng);
  return {scale * b.obs, scale * b.ak, b.k};
}

GapStats MeasureEquivGap(VelocityNetwork* net, const ProbeBatch& probes) {
  const Representation& ra = net->rep_act();
  const Matrix v = net->Forward(probes.a, probes.obs, probes.k);
  const Matrix v_g = net->Forward(ActFlatRows(ra, kReflection, probes.a),
                                  ActFlatRows(net->rep_obs(), kReflection, probes.obs),
                                  probes.k);
  const Vector gap = (ActFlatRows(ra, kReflection, v) - v_g).rowwise().norm();
  return {gap.mean(), gap.maxCoeff()};
}

GapStats MeasureEquivGap(VelocityNetwork* net, int n_probes, double scale,
                         uint64_t seed) {
  return MeasureEquivGap(net, GaussianProbes(net->shape(), n_probes, scale, seed));
}

// -------------------------------------------------------------------- Adam

Adam::Adam(const AdamConfig& config, int size)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void Adam::Step(nnet::ParameterStore* store, double lr_scale) {
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, t_);
  const double c2 = 1.0 - std::pow(config_.beta2, t_);
  const double lr = config_.lr * lr_scale;
  nnet::Buffer& w = store->mutable_values();
  const nnet::Buffer& g = store->grads();
  for (size_t i = 0; i < w.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g[i] * g[i];
    w[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
  }
}

// ---------------------------------------------------------------- training

TrainResult Train(const TrainingSet& data, const TrainConfig& config,
                  const TrainingSet* held_out) {
  config.Validate();
  if (data.obs.rows() == 0) throw ValidationError("empty training set");
  if (data.shape.history != config.window.history ||
      data.shape.chunk != config.window.chunk) {
    throw ValidationError("training set windows do not match the config");
  }
  TrainResult result;
  result.norm = data.norm;
  result.window = config.window;
  result.net = MakeVelocityNetwork(ResolveNetwork(config), data.shape,
                                   data.rep_obs, data.rep_act);
  VelocityNetwork& net = *result.net;
  Adam adam(config.adam, net.params().size());
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, data.obs.rows() - 1);
  const uint64_t probe_seed = config.seed ^ 0x5EEDFACEULL;
  const ProbeBatch probes =
      held_out != nullptr
          ? DataProbes(*held_out, config.probe_size, 1.0, probe_seed)
          : GaussianProbes(data.shape, config.probe_size, 1.0, probe_seed);
  const bool reg = config.strategy == Strategy::kEquivReg && config.lambda > 0.0;
  const int steps = ResolveSteps(config);
  const auto start = std::chrono::steady_clock::now();

  Matrix obs(config.batch_size, data.obs.cols());
  Matrix a1(config.batch_size, data.act.cols());
  for (int step = 0; step < steps; ++step) {
    for (int r = 0; r < config.batch_size; ++r) {
      const Eigen::Index i = pick(rng);
      obs.row(r) = data.obs.row(i);
      a1.row(r) = data.act.row(i);
    }
    if (config.strategy == Strategy::kSymAug) {
      AugmentBatch(data.rep_obs, data.rep_act, &obs, &a1, rng);
    }
    const FlowBatch batch = MakeFlowBatch(obs, a1, rng);
    net.params().ZeroGrad();
    double loss;
    if (reg) {
      const LossTerms t = CfmWithReg(&net, batch, config.lambda);
      loss = t.cfm + config.lambda * t.reg;
    } else {
      loss = CfmLoss(&net, batch, 1.0);
    }
    CheckLoss(loss, step);
    adam.Step(&net.params(),
              config.adam.cosine ? 0.5 * (1.0 + std::cos(M_PI * step / steps)) : 1.0);

    LogRow row;
    row.step = step;
    row.loss = loss;
    if (step % config.probe_every == 0 || step + 1 == steps) {
      row.equiv_gap = MeasureEquivGap(&net, probes).mean;
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
  }
  return result;
}

void WriteTrainLog(const std::vector<LogRow>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,loss,equiv_gap,wall_ms\n" << std::setprecision(10);
  for (const LogRow& r : log) {
    out << r.step << ',' << r.loss << ',';
    if (r.equiv_gap >= 0.0) out << r.equiv_gap;
    out << ',' << std::fixed << std::setprecision(1) << r.wall_ms
        << std::defaultfloat << std::setprecision(10) << '\n';
  }
}

// ---------------------------------------------------------------- sampling

Matrix SampleActionChunk(VelocityNetwork* net, const Matrix& obs,
                         const Matrix& a0, int n_steps) {
  if (n_steps < 1) throw ValidationError("n_steps must be >= 1");
  Matrix a = a0;
  const double h = 1.0 / n_steps;
  for (int i = 0; i < n_steps; ++i) {
    a += h * net->Forward(a, obs, Vector::Constant(a.rows(), i * h));
    if (!a.allFinite()) {
      throw DivergenceError("non-finite sampler iterate at step " +
                            std::to_string(i));
    }
  }
  return a;
}

Matrix SampleActionChunk(VelocityNetwork* net, const Matrix& obs, int n_steps,
                         std::mt19937_64& rng) {
  return SampleActionChunk(net, obs, Gaussian(obs.rows(), net->shape().act_width(), rng),
                           n_steps);
}

FlowPolicy::FlowPolicy(std::unique_ptr<VelocityNetwork> net, Normalizer norm,
                       WindowSpec window, int ode_steps)
    : net_(std::move(net)), norm_(std::move(norm)), window_(window),
      ode_steps_(ode_steps) {
  window_.Validate();
  if (ode_steps_ < 1) throw ValidationError("ode_steps must be >= 1");
  const FlowShape& s = net_->shape();
  if (s.history != window_.history || s.chunk != window_.chunk ||
      norm_.obs_scale.size() != s.obs_dim || norm_.act_scale.size() != s.act_dim) {
    throw ValidationError("policy window or normalization does not match the network");
  }
}

Matrix FlowPolicy::Sample(const Matrix& history, const Matrix& a0) {
  return norm_.Unact(SampleActionChunk(net_.get(), norm_.Obs(history), a0, ode_steps_));
}

void SavePolicy(const TrainResult& result, const std::string& path,
                nlohmann::json extra) {
  const Vector& so = result.norm.obs_scale;
  const Vector& sa = result.norm.act_scale;
  extra["obs_scale"] = std::vector<double>(so.data(), so.data() + so.size());
  extra["act_scale"] = std::vector<double>(sa.data(), sa.data() + sa.size());
  extra["window"] = {{"history", result.window.history},
                     {"chunk", result.window.chunk},
                     {"exec", result.window.exec}};
  SaveCheckpoint(*result.net, path, extra);
}

FlowPolicy LoadPolicy(const std::string& path, int ode_steps,
                      nlohmann::json* extra) {
  nlohmann::json ex;
  auto net = LoadCheckpoint(path, &ex);
  try {
    Normalizer norm;
    const auto so = ex.at("obs_scale").get<std::vector<double>>();
    const auto sa = ex.at("act_scale").get<std::vector<double>>();
    norm.obs_scale = Eigen::Map<const Vector>(so.data(), so.size());
    norm.act_scale = Eigen::Map<const Vector>(sa.data(), sa.size());
    const auto& w = ex.at("window");
    WindowSpec window{w.at("history").get<int>(), w.at("chunk").get<int>(),
                      w.at("exec").get<int>()};
    if (extra != nullptr) *extra = ex;
    return FlowPolicy(std::move(net), std::move(norm), window, ode_steps);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint lacks policy metadata: ") + e.what());
  }
}

}  // namespace symflow
