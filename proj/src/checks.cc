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

#include "symflow/checks.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "symflow/cfm.h"
#include "symflow/envs.h"
#include "symflow/errors.h"
#include "symflow/group.h"
#include "symflow/nnet.h"
#include "symflow/velocity_net.h"

namespace symflow {
namespace {

using nnet::ParameterStore;

Matrix Gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void Randomize(ParameterStore* store, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : store->mutable_values()) v = n(rng);
}

Vector Flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Vector Flat(const nnet::Buffer& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double RelativeError(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-12});
}

Vector NumericParamGrad(ParameterStore* store, const std::function<double()>& loss) {
  const double h = 1e-6;
  Vector g(store->size());
  for (int i = 0; i < store->size(); ++i) {
    const double keep = store->values()[i];
    store->mutable_values()[i] = keep + h;
    const double up = loss();
    store->mutable_values()[i] = keep - h;
    const double down = loss();
    store->mutable_values()[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

Matrix NumericInputGrad(Matrix x, const std::function<double(const Matrix&)>& loss) {
  const double h = 1e-6;
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = loss(x);
    x.data()[i] = keep - h;
    const double down = loss(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

// Accumulates the worst residual and the first violation.
class Tracker {
 public:
  Tracker(std::string name, double tolerance) {
    result_.name = std::move(name);
    result_.tolerance = tolerance;
  }
  void Residual(const std::string& what, double value) {
    result_.worst = std::max(result_.worst, value);
    if (!(value <= result_.tolerance)) Fail(what + ": residual " + Str(value));
  }
  void Fail(const std::string& what) {
    if (result_.passed) result_.detail = what;
    result_.passed = false;
  }
  SuiteResult Finish(std::chrono::steady_clock::time_point start) {
    result_.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start).count();
    return result_;
  }

 private:
  static std::string Str(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }
  SuiteResult result_;
};

std::vector<std::unique_ptr<Env>> AllEnvs() {
  std::vector<std::unique_ptr<Env>> envs;
  for (const char* id : {"reach", "box"}) {
    for (Difficulty d : {Difficulty::kNarrow, Difficulty::kWide}) {
      envs.push_back(MakeEnv(id, d));
    }
  }
  return envs;
}

// States along expert rollouts of both tags, some with jittered arms.
std::vector<Vector> ProbeStates(const Env& env, int count, uint64_t seed) {
  const auto expert = MakeExpert(env);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<Vector> states;
  for (uint64_t ep = 0; static_cast<int>(states.size()) < count; ++ep) {
    Vector s = env.Reset(seed + ep, ep % 2 ? ConfigTag::kGr : ConfigTag::kE);
    for (int t = 0; t < env.step_limit() && static_cast<int>(states.size()) < count;
         ++t) {
      if (t % 3 == 0) {
        Vector p = s;
        if (t % 2 == 0) {
          for (int i = 0; i < 4; ++i) p[i] += jitter(rng);
        }
        states.push_back(p);
      }
      const StepResult r = env.Step(s, expert->Act(s), t);
      s = r.state;
      if (r.done) break;
    }
  }
  return states;
}

Representation RegularCopies(int copies) {
  return Repeat(Representation::Regular(FiniteGroup::Reflection()), copies);
}

Representation MixedRep() {
  const auto c2 = FiniteGroup::Reflection();
  return DirectSum(DirectSum(RegularCopies(2), Representation::Sign(c2)),
                   Representation::Trivial(c2, 1));
}

std::unique_ptr<VelocityNetwork> SmallNetwork(const Env& env, NetworkVariant variant,
                                              int width, int depth, uint64_t seed) {
  NetworkConfig c;
  c.variant = variant;
  c.width = width;
  c.depth = depth;
  c.heads = 2;
  c.seed = seed;
  const FlowShape shape{2, 4, env.obs_space().dim(), env.act_space().dim()};
  return MakeVelocityNetwork(c, shape, env.obs_space().rep(), env.act_space().rep());
}

}  // namespace

SuiteResult CheckGroups(const CheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Tracker t("group", 1e-12);
  const std::vector<std::pair<std::string, GroupPtr>> groups = {
      {"C2", FiniteGroup::Reflection()},
      {"C4", FiniteGroup::Cyclic(4)},
      {"C2xC2", FiniteGroup::Klein()}};
  for (const auto& [name, group] : groups) {
    const GroupVerdict v = ValidateGroup(group->mul_table());
    if (!v.ok) t.Fail(name + ": " + v.violation);
    for (int g = 0; g < group->order(); ++g) {
      if (group->Multiply(g, group->Inverse(g)) != kIdentity) {
        t.Fail(name + ": inverse of element " + std::to_string(g));
      }
    }
    const Representation reg = Representation::Regular(group);
    std::vector<Matrix> mats;
    for (int g = 0; g < group->order(); ++g) mats.push_back(reg.matrix(g));
    if (auto err = ValidateRepresentation(*group, mats)) {
      t.Fail(name + " regular representation: " + *err);
    }
  }

  std::vector<std::pair<std::string, Representation>> reps;
  for (const char* id : {"reach", "box"}) {
    const auto env = MakeEnv(id, Difficulty::kNarrow);
    reps.emplace_back(std::string(id) + " state", env->state_rep());
    reps.emplace_back(std::string(id) + " observation", env->obs_space().rep());
    reps.emplace_back(std::string(id) + " action", env->act_space().rep());
  }
  for (const auto& [name, rep] : reps) {
    std::vector<Matrix> mats = {rep.matrix(kIdentity), rep.matrix(kReflection)};
    if (options.corrupt == "obs-rep" && name == "reach observation") {
      mats[kReflection](0, 2) = -mats[kReflection](0, 2);
    }
    if (auto err = ValidateRepresentation(rep.group(), mats)) {
      t.Fail(name + " representation: " + *err);
      continue;
    }
    const Matrix& r = mats[kReflection];
    const Eigen::Index n = r.rows();
    t.Residual(name + " involution", (r * r - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
    t.Residual(name + " orthogonality",
               (r.transpose() * r - Matrix::Identity(n, n)).cwiseAbs().maxCoeff());
  }
  return t.Finish(start);
}

SuiteResult CheckEnvironments(const CheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Tracker t("environment", 1e-12);
  for (const auto& env : AllEnvs()) {
    const std::string name = env->id() + "/" + DifficultyName(env->difficulty());
    const auto expert = MakeExpert(*env);
    const Representation& rs = env->state_rep();
    const Representation& ra = env->act_space().rep();
    std::mt19937_64 rng(options.seed + 5);
    std::uniform_real_distribution<double> u(-0.03, 0.03);
    double step_gap = 0.0, expert_gap = 0.0;
    for (const Vector& s : ProbeStates(*env, 1000, options.seed + 17)) {
      Vector a(env->act_space().dim());
      for (double& v : a) v = u(rng);
      const Vector gs = rs.Act(kReflection, s);
      step_gap = std::max(step_gap, (env->Step(gs, ra.Act(kReflection, a), 0).state -
                                     rs.Act(kReflection, env->Step(s, a, 0).state))
                                        .cwiseAbs().maxCoeff());
      expert_gap = std::max(expert_gap, (expert->Act(gs) -
                                         ra.Act(kReflection, expert->Act(s)))
                                            .cwiseAbs().maxCoeff());
    }
    t.Residual(name + " step equivariance", step_gap);
    t.Residual(name + " expert equivariance", expert_gap);

    const Dataset data = GenerateDataset(*env, *expert, 5, ConfigTag::kE, options.seed + 8);
    for (const Trajectory& traj : data.trajectories) {
      Vector s = env->Reset(traj.seed, ConfigTag::kGr);
      bool success = false;
      for (int i = 0; i < traj.length() && !success; ++i) {
        const StepResult r =
            env->Step(s, ra.Act(kReflection, traj.act.row(i).transpose()), i);
        success = r.success;
        s = r.state;
      }
      if (!success) {
        t.Fail(name + " reflected replay of seed " + std::to_string(traj.seed));
      }
    }
  }
  return t.Finish(start);
}

SuiteResult CheckGradients(const CheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Tracker t("gradients", 1e-5);
  std::mt19937_64 rng(options.seed + 7);
  const Representation rep = MixedRep();
  const Representation hidden = RegularCopies(2);

  auto layer = [&](const std::string& name, ParameterStore* store, int in_dim, int rows,
                   const std::function<Matrix(const Matrix&)>& forward,
                   const std::function<Matrix(const Matrix&)>& backward) {
    Randomize(store, rng, 0.5);
    const Matrix x = Gaussian(rows, in_dim, rng);
    const Matrix c = Gaussian(rows, forward(x).cols(), rng);
    auto loss_at = [&](const Matrix& in) { return (forward(in).array() * c.array()).sum(); };
    forward(x);
    store->ZeroGrad();
    const Matrix dx = backward(c);
    if (store->size() > 0) {
      const Vector analytic = Flat(store->grads());
      t.Residual(name + " parameter gradient",
                 RelativeError(analytic, NumericParamGrad(store, [&] { return loss_at(x); })));
    }
    t.Residual(name + " input gradient",
               RelativeError(Flat(dx), Flat(NumericInputGrad(x, loss_at))));
  };
  {
    ParameterStore s;
    nnet::Dense d(&s, 3, 4, rng);
    layer("dense", &s, 3, 5, [&](const Matrix& x) { return d.Forward(s, x); },
          [&](const Matrix& dy) { return d.Backward(&s, dy); });
  }
  {
    ParameterStore s;
    nnet::EquivariantLinear l(&s, rep, hidden, rng);
    layer("equivariant-linear", &s, rep.dim(), 4,
          [&](const Matrix& x) { return l.Forward(s, x); },
          [&](const Matrix& dy) { return l.Backward(&s, dy); });
  }
  {
    ParameterStore s;
    nnet::Tanh a;
    layer("tanh", &s, 3, 4, [&](const Matrix& x) { return a.Forward(x); },
          [&](const Matrix& dy) { return a.Backward(dy); });
  }
  {
    ParameterStore s;
    nnet::OrbitRmsNorm n(&s, rep);
    layer("rms-norm", &s, rep.dim(), 4, [&](const Matrix& x) { return n.Forward(s, x); },
          [&](const Matrix& dy) { return n.Backward(&s, dy); });
  }
  {
    ParameterStore s;
    nnet::EquivariantAttention a(&s, hidden, 2, rng);
    layer("attention", &s, hidden.dim(), 6,
          [&](const Matrix& x) { return a.Forward(s, x, 3); },
          [&](const Matrix& dy) { return a.Backward(&s, dy); });
  }
  {
    nnet::OrbitModulation mod(hidden);
    const Matrix x = Gaussian(6, hidden.dim(), rng);
    const Matrix m = Gaussian(2, mod.num_orbits(), rng);
    const Matrix c = Gaussian(6, hidden.dim(), rng);
    mod.Forward(x, m, 3);
    Matrix dm;
    const Matrix dx = mod.Backward(c, &dm);
    auto by_x = [&](const Matrix& in) {
      return (mod.Forward(in, m, 3).array() * c.array()).sum();
    };
    auto by_m = [&](const Matrix& in) {
      return (mod.Forward(x, in, 3).array() * c.array()).sum();
    };
    t.Residual("modulation input gradient",
               RelativeError(Flat(dx), Flat(NumericInputGrad(x, by_x))));
    t.Residual("modulation gain gradient",
               RelativeError(Flat(dm), Flat(NumericInputGrad(m, by_m))));
  }

  const auto env = MakeEnv("reach", Difficulty::kNarrow);
  for (NetworkVariant v : {NetworkVariant::kMlp, NetworkVariant::kEquivariantTransformer}) {
    auto net = SmallNetwork(*env, v, v == NetworkVariant::kMlp ? 8 : 4, 2, options.seed);
    Randomize(&net->params(), rng, 0.3);
    const FlowShape& s = net->shape();
    const Matrix a = Gaussian(3, s.act_width(), rng);
    const Matrix obs = Gaussian(3, s.obs_width(), rng);
    Vector k(3);
    k << 0.1, 0.5, 0.9;
    const Matrix c = Gaussian(3, s.act_width(), rng);
    auto loss = [&] { return (net->Forward(a, obs, k).array() * c.array()).sum(); };
    net->Forward(a, obs, k);
    net->params().ZeroGrad();
    net->Backward(c);
    const Vector analytic = Flat(net->params().grads());
    t.Residual(std::string(v == NetworkVariant::kMlp ? "mlp" : "transformer") +
                   " parameter gradient",
               RelativeError(analytic, NumericParamGrad(&net->params(), loss)));
  }
  return t.Finish(start);
}

SuiteResult CheckLayerEquivariance(const CheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Tracker t("layer-equivariance", 1e-8);
  std::mt19937_64 rng(options.seed + 5);
  const Representation rep = MixedRep();
  const Representation hidden = RegularCopies(3);
  ParameterStore store;
  nnet::EquivariantLinear lin(&store, rep, hidden, rng);
  nnet::OrbitRmsNorm norm(&store, hidden);
  nnet::EquivariantAttention attn(&store, hidden, 3, rng);
  nnet::OrbitModulation mod(hidden);
  nnet::Tanh act;
  Randomize(&store, rng, 0.5);
  const int tokens = 4;
  const Matrix x = Gaussian(2 * tokens, rep.dim(), rng);
  const Matrix m = Gaussian(2, mod.num_orbits(), rng);
  auto run = [&](const Matrix& in) {
    Matrix h = lin.Forward(store, in);
    h = norm.Forward(store, h);
    h = mod.Forward(h, m, tokens);
    h = attn.Forward(store, h, tokens);
    return act.Forward(h);
  };
  const Matrix y = run(x);
  t.Residual("composed layers",
             (run(rep.ActRows(kReflection, x)) - hidden.ActRows(kReflection, y))
                 .cwiseAbs().maxCoeff());

  for (const char* id : {"reach", "box"}) {
    const auto env = MakeEnv(id, Difficulty::kNarrow);
    auto net = SmallNetwork(*env, NetworkVariant::kEquivariantTransformer, 8, 2,
                            options.seed);
    Randomize(&net->params(), rng, 0.3);
    for (double scale : {1.0, 100.0}) {
      const GapStats gap = MeasureEquivGap(net.get(), 1000, scale, options.seed + 11);
      t.Residual(std::string(id) + " transformer gap at scale " +
                     std::to_string(static_cast<int>(scale)),
                 gap.max);
    }
  }
  return t.Finish(start);
}

SuiteResult CheckSamplerCoupling(const CheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  Tracker t("sampler-coupling", 1e-8);
  std::mt19937_64 rng(options.seed + 19);
  for (const char* id : {"reach", "box"}) {
    const auto env = MakeEnv(id, Difficulty::kNarrow);
    auto net = SmallNetwork(*env, NetworkVariant::kEquivariantTransformer, 8, 2,
                            options.seed);
    Randomize(&net->params(), rng, 0.3);
    const WindowSpec w{2, 4, 2};
    FlowPolicy policy(std::move(net),
                      Normalizer::FromSpaces(env->obs_space(), env->act_space()), w, 10);
    const Representation& ro = env->obs_space().rep();
    const Representation& ra = env->act_space().rep();
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix history = Gaussian(4, w.history * ro.dim(), rng, 0.3);
      const Matrix a0 = Gaussian(4, w.chunk * ra.dim(), rng);
      const Matrix chunk = policy.Sample(history, a0);
      const Matrix mirrored = policy.Sample(ActFlatRows(ro, kReflection, history),
                                            ActFlatRows(ra, kReflection, a0));
      worst = std::max(worst, (mirrored - ActFlatRows(ra, kReflection, chunk))
                                  .cwiseAbs().maxCoeff());
    }
    t.Residual(std::string(id) + " coupled sampling", worst);
  }
  return t.Finish(start);
}

std::vector<SuiteResult> RunChecks(const CheckOptions& options) {
  std::vector<SuiteResult> results;
  using Suite = SuiteResult (*)(const CheckOptions&);
  const std::pair<const char*, Suite> suites[] = {
      {"group", CheckGroups},
      {"environment", CheckEnvironments},
      {"gradients", CheckGradients},
      {"layer-equivariance", CheckLayerEquivariance},
      {"sampler-coupling", CheckSamplerCoupling}};
  for (const auto& [name, suite] : suites) {
    try {
      results.push_back(suite(options));
    } catch (const std::exception& e) {
      SuiteResult r;
      r.name = name;
      r.passed = false;
      r.detail = e.what();
      results.push_back(r);
    }
  }
  return results;
}

nlohmann::json ChecksToJson(const std::vector<SuiteResult>& results) {
  nlohmann::json suites = nlohmann::json::array();
  bool all = true;
  for (const SuiteResult& r : results) {
    all = all && r.passed;
    suites.push_back({{"name", r.name},
                      {"passed", r.passed},
                      {"worst", r.worst},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail}});
  }
  return {{"passed", all}, {"suites", suites}};
}

}  // namespace symflow
