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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <doctest.h>

#include "symflow/errors.h"

namespace symflow {
namespace {

Matrix Gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void Randomize(nnet::ParameterStore* store, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : store->mutable_values()) v = n(rng);
}

// Returns the same velocity row for every input.
class ConstantField : public VelocityNetwork {
 public:
  ConstantField(const FlowShape& shape, const Representation& ro,
                const Representation& ra, RowVector c)
      : VelocityNetwork({}, shape, ro, ra), c_(std::move(c)) {}
  std::unique_ptr<VelocityNetwork> Clone() const override {
    return std::make_unique<ConstantField>(*this);
  }

 protected:
  Matrix DoForward(const Matrix& a, const Matrix&, const Vector&) override {
    return c_.replicate(a.rows(), 1);
  }
  void DoBackward(const Matrix&) override {}

 private:
  RowVector c_;
};

TrainingSet ReachSet(const Env& env, const WindowSpec& window, int demos) {
  const auto expert = MakeExpert(env);
  return MakeTrainingSet(GenerateDataset(env, *expert, demos, ConfigTag::kE, 3), env,
                         window);
}

struct Fixture {
  std::unique_ptr<Env> env = MakeEnv("reach", Difficulty::kNarrow);
  WindowSpec window;
  TrainingSet set;
  explicit Fixture(int demos = 4) : set(ReachSet(*env, window, demos)) {}
  std::unique_ptr<VelocityNetwork> Net(NetworkVariant variant, int width, int depth,
                                       uint64_t seed = 1) const {
    NetworkConfig c;
    c.variant = variant;
    c.width = width;
    c.depth = depth;
    c.heads = 2;
    c.seed = seed;
    return MakeVelocityNetwork(c, set.shape, set.rep_obs, set.rep_act);
  }
  FlowBatch Batch(int n, uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, set.obs.rows() - 1);
    Matrix obs(n, set.obs.cols()), a1(n, set.act.cols());
    for (int r = 0; r < n; ++r) {
      const Eigen::Index i = pick(rng);
      obs.row(r) = set.obs.row(i);
      a1.row(r) = set.act.row(i);
    }
    return MakeFlowBatch(obs, a1, rng);
  }
  TrainConfig Config(Strategy s, int steps) const {
    TrainConfig c;
    c.strategy = s;
    c.steps = steps;
    c.equiv_net_steps = steps;
    c.batch_size = 16;
    c.network.width = 16;
    c.network.depth = 2;
    c.equivariant.width = 8;
    c.equivariant.depth = 1;
    c.probe_every = 10;
    c.probe_size = 32;
    c.window = window;
    return c;
  }
};

TEST_CASE("flow sample endpoints and degenerate path") {
  std::mt19937_64 rng(0);
  const Vector a1 = Gaussian(6, 1, rng);
  const Vector a0 = Gaussian(6, 1, rng);
  const FlowSample s0 = MakeFlowSample(a1, 0.0, a0);
  CHECK((s0.ak - a0).norm() == 0.0);
  CHECK((s0.u - (a1 - a0)).norm() == 0.0);
  const FlowSample s1 = MakeFlowSample(a1, 1.0, a0);
  CHECK((s1.ak - a1).norm() == 0.0);
  for (double k : {0.0, 0.3, 1.0}) {
    const FlowSample d = MakeFlowSample(a1, k, a1);
    CHECK(d.u.norm() == 0.0);
    CHECK((d.ak - a1).norm() <= 1e-15);
  }
  for (int i = 0; i < 100; ++i) {
    const FlowSample r = MakeFlowSample(a1, rng);
    CHECK(r.k >= 0.0);
    CHECK(r.k <= 1.0);
    CHECK((r.ak - ((1 - r.k) * r.a0 + r.k * r.a1)).norm() <= 1e-14);
    CHECK((r.u - (r.a1 - r.a0)).norm() == 0.0);
  }
}

TEST_CASE("flow batch matches per-row samples") {
  std::mt19937_64 rng(1);
  const Matrix obs = Gaussian(5, 4, rng), a1 = Gaussian(5, 6, rng);
  const FlowBatch b = MakeFlowBatch(obs, a1, rng);
  for (int r = 0; r < 5; ++r) {
    const FlowSample s = MakeFlowSample(a1.row(r).transpose(), b.k[r],
                                        b.a0.row(r).transpose());
    CHECK((b.ak.row(r).transpose() - s.ak).norm() <= 1e-15);
    CHECK((b.u.row(r).transpose() - s.u).norm() == 0.0);
  }
}

TEST_CASE("cfm loss on constant fields and a hand-computed sample") {
  Fixture f;
  const FlowBatch one = f.Batch(1, 4);
  ConstantField exact(f.set.shape, f.set.rep_obs, f.set.rep_act, one.u.row(0));
  CHECK(CfmLoss(&exact, one) == 0.0);

  const FlowBatch b = f.Batch(7, 5);
  ConstantField zero(f.set.shape, f.set.rep_obs, f.set.rep_act,
                     RowVector::Zero(b.u.cols()));
  CHECK(CfmLoss(&zero, b) == doctest::Approx(b.u.squaredNorm() / 7).epsilon(1e-14));

  auto net = f.Net(NetworkVariant::kMlp, 8, 1);
  const Matrix v = net->Forward(one.ak, one.obs, one.k);
  double mse = 0.0;
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const double d = v(0, c) - one.u(0, c);
    mse += d * d;
  }
  CHECK(std::abs(CfmLoss(net.get(), one) - mse) <= 1e-12);
}

TEST_CASE("loss gradients match finite differences") {
  Fixture f;
  auto net = f.Net(NetworkVariant::kMlp, 6, 1);
  std::mt19937_64 rng(6);
  Randomize(&net->params(), rng);
  const FlowBatch b = f.Batch(3, 7);
  for (double lambda : {0.0, 1.0, 2.5}) {
    net->params().ZeroGrad();
    CfmWithReg(net.get(), b, lambda);
    const nnet::Buffer analytic = net->params().grads();
    const double h = 1e-6;
    double num2 = 0.0, err2 = 0.0;
    for (int i = 0; i < net->params().size(); ++i) {
      auto loss = [&] {
        const LossTerms t = CfmWithReg(net.get(), b, 0.0);
        return t.cfm + lambda * t.reg;
      };
      const double keep = net->params().values()[i];
      net->params().mutable_values()[i] = keep + h;
      const double up = loss();
      net->params().mutable_values()[i] = keep - h;
      const double down = loss();
      net->params().mutable_values()[i] = keep;
      const double g = (up - down) / (2 * h);
      num2 += g * g;
      err2 += (g - analytic[i]) * (g - analytic[i]);
    }
    CHECK(std::sqrt(err2 / num2) <= 1e-5);
  }
}

TEST_CASE("stacked loss equals the separate terms") {
  Fixture f;
  auto net = f.Net(NetworkVariant::kMlp, 8, 2);
  std::mt19937_64 rng(8);
  Randomize(&net->params(), rng);
  const FlowBatch b = f.Batch(9, 9);
  net->params().ZeroGrad();
  const LossTerms t = CfmWithReg(net.get(), b, 0.7);
  const nnet::Buffer joint = net->params().grads();
  net->params().ZeroGrad();
  const double cfm = CfmLoss(net.get(), b, 1.0);
  const double reg = EquivReg(net.get(), b, 0.7);
  CHECK(std::abs(t.cfm - cfm) <= 1e-12 * std::max(1.0, cfm));
  CHECK(std::abs(t.reg - reg) <= 1e-12 * std::max(1.0, reg));
  for (int i = 0; i < net->params().size(); ++i) {
    CHECK(std::abs(joint[i] - net->params().grads()[i]) <=
          1e-10 * std::max(1.0, std::abs(joint[i])));
  }
}

TEST_CASE("equivariance penalty") {
  Fixture f;
  const FlowBatch b = f.Batch(11, 10);

  auto tf = f.Net(NetworkVariant::kEquivariantTransformer, 8, 1);
  std::mt19937_64 rng(11);
  Randomize(&tf->params(), rng);
  CHECK(EquivReg(tf.get(), b) <= 1e-14);

  std::mt19937_64 crng(12);
  const RowVector c = Gaussian(1, b.u.cols(), crng).row(0);
  ConstantField constant(f.set.shape, f.set.rep_obs, f.set.rep_act, c);
  const RowVector gc = ActFlatRows(f.set.rep_act, kReflection, c);
  CHECK(EquivReg(&constant, b) ==
        doctest::Approx((gc - c).squaredNorm()).epsilon(1e-13));

  auto mlp = f.Net(NetworkVariant::kMlp, 8, 2);
  Randomize(&mlp->params(), rng);
  const Matrix v = mlp->Forward(b.ak, b.obs, b.k);
  const Matrix vg = mlp->Forward(ActFlatRows(f.set.rep_act, kReflection, b.ak),
                                 ActFlatRows(f.set.rep_obs, kReflection, b.obs), b.k);
  double expected = 0.0;
  for (int r = 0; r < v.rows(); ++r) {
    expected += (ActFlatRows(f.set.rep_act, kReflection, v.row(r)) - vg.row(r))
                    .squaredNorm();
  }
  expected /= v.rows();
  CHECK(expected > 1e-6);
  CHECK(std::abs(EquivReg(mlp.get(), b) - expected) <= 1e-12 * expected);
}

TEST_CASE("augmentation") {
  Fixture f;
  const FlowBatch b = f.Batch(6, 13);
  Matrix obs = b.obs, a1 = b.a1;
  ApplyElements(f.set.rep_obs, f.set.rep_act, std::vector<int>(6, kIdentity), &obs, &a1);
  CHECK(obs == b.obs);
  CHECK(a1 == b.a1);
  const std::vector<int> gr(6, kReflection);
  ApplyElements(f.set.rep_obs, f.set.rep_act, gr, &obs, &a1);
  CHECK((obs - b.obs).norm() > 0.0);
  ApplyElements(f.set.rep_obs, f.set.rep_act, gr, &obs, &a1);
  CHECK(obs == b.obs);
  CHECK(a1 == b.a1);

  std::mt19937_64 rng(14);
  Matrix big_obs = b.obs.row(0).replicate(10000, 1);
  Matrix big_a1 = b.a1.row(0).replicate(10000, 1);
  const std::vector<int> drawn =
      AugmentBatch(f.set.rep_obs, f.set.rep_act, &big_obs, &big_a1, rng);
  int reflected = 0;
  const RowVector mirrored = ActFlatRows(f.set.rep_obs, kReflection, b.obs.row(0));
  for (int r = 0; r < 10000; ++r) {
    reflected += drawn[r] == kReflection;
    const RowVector expect = drawn[r] == kReflection ? mirrored : RowVector(b.obs.row(0));
    CHECK((big_obs.row(r) - expect).norm() == 0.0);
  }
  CHECK(std::abs(reflected / 10000.0 - 0.5) <= 0.02);
}

TEST_CASE("on-the-fly augmentation matches the doubled dataset in expectation") {
  Fixture f;
  auto net = f.Net(NetworkVariant::kMlp, 8, 2);
  std::mt19937_64 rng(15);
  Randomize(&net->params(), rng);
  const FlowBatch b = f.Batch(8, 16);
  auto loss_with = [&](int g) {
    Matrix obs = b.obs, a1 = b.a1;
    ApplyElements(f.set.rep_obs, f.set.rep_act, std::vector<int>(8, g), &obs, &a1);
    return CfmLoss(net.get(), MakeFlowBatch(obs, a1, b.k, b.a0));
  };
  const double forced = 0.5 * (loss_with(kIdentity) + loss_with(kReflection));
  Matrix obs2(16, b.obs.cols()), a12(16, b.a1.cols()), a02(16, b.a0.cols());
  Vector k2(16);
  obs2 << b.obs, ActFlatRows(f.set.rep_obs, kReflection, b.obs);
  a12 << b.a1, ActFlatRows(f.set.rep_act, kReflection, b.a1);
  a02 << b.a0, b.a0;
  k2 << b.k, b.k;
  const double doubled = CfmLoss(net.get(), MakeFlowBatch(obs2, a12, k2, a02));
  CHECK(std::abs(forced - doubled) <= 1e-12 * std::max(1.0, doubled));
}

TEST_CASE("normalization commutes with the group action") {
  Fixture f;
  std::mt19937_64 rng(17);
  const Matrix obs = Gaussian(4, f.set.obs.cols(), rng);
  const Matrix act = Gaussian(4, f.set.act.cols(), rng);
  const Normalizer& n = f.set.norm;
  CHECK((n.Obs(ActFlatRows(f.set.rep_obs, kReflection, obs)) -
         ActFlatRows(f.set.rep_obs, kReflection, n.Obs(obs))).norm() == 0.0);
  CHECK((n.Act(ActFlatRows(f.set.rep_act, kReflection, act)) -
         ActFlatRows(f.set.rep_act, kReflection, n.Act(act))).norm() == 0.0);
  CHECK((n.Unact(n.Act(act)) - act).norm() <= 1e-12);
}

TEST_CASE("config validation and network resolution") {
  Fixture f;
  TrainConfig c = f.Config(Strategy::kBaseline, 10);
  CHECK_NOTHROW(c.Validate());
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = f.Config(Strategy::kBaseline, 10);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = f.Config(Strategy::kBaseline, 10);
  c.adam.lr = 0.0;
  CHECK_THROWS_AS(c.Validate(), ValidationError);
  c = f.Config(Strategy::kBaseline, 10);
  c.window.exec = 99;
  CHECK_THROWS_AS(c.Validate(), ValidationError);

  c = f.Config(Strategy::kEquivNet, 10);
  c.seed = 42;
  CHECK(ResolveNetwork(c).variant == NetworkVariant::kEquivariantTransformer);
  CHECK(ResolveNetwork(c).width == 8);
  CHECK(ResolveNetwork(c).seed == 42);
  c.equivariant.variant = NetworkVariant::kMlp;
  CHECK(ResolveNetwork(c).variant == NetworkVariant::kEquivariantTransformer);
  for (Strategy s : {Strategy::kBaseline, Strategy::kSymAug, Strategy::kEquivReg}) {
    c.strategy = s;
    CHECK(ResolveNetwork(c).variant == NetworkVariant::kMlp);
  }
  c.network.variant = NetworkVariant::kEquivariantTransformer;
  CHECK(ResolveNetwork(c).variant == NetworkVariant::kEquivariantTransformer);

  c = f.Config(Strategy::kBaseline, 10);
  c.equiv_net_steps = 3;
  CHECK(ResolveSteps(c) == 10);
  c.strategy = Strategy::kEquivNet;
  CHECK(ResolveSteps(c) == 3);

  CHECK(ParseStrategy("equiv-reg") == Strategy::kEquivReg);
  for (Strategy s : {Strategy::kBaseline, Strategy::kSymAug, Strategy::kEquivReg,
                     Strategy::kEquivNet}) {
    CHECK(ParseStrategy(StrategyName(s)) == s);
  }
  CHECK_THROWS_AS(ParseStrategy("bogus"), ValidationError);
}

TEST_CASE("training is deterministic and descends") {
  Fixture f(1);
  const TrainConfig c = f.Config(Strategy::kBaseline, 2000);
  const TrainResult a = Train(f.set, c);
  const TrainResult b = Train(f.set, c);
  CHECK(a.net->params().values() == b.net->params().values());
  REQUIRE(a.log.size() == 2000);
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].equiv_gap == b.log[i].equiv_gap);
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    first += a.log[i].loss;
    last += a.log[a.log.size() - 1 - i].loss;
  }
  CHECK(last < first);
  CHECK(a.log.back().equiv_gap >= 0.0);
  CHECK(a.log[1].equiv_gap < 0.0);

  TrainConfig other = c;
  other.seed = 1;
  other.steps = 20;
  CHECK(Train(f.set, other).net->params().values() !=
        Train(f.set, f.Config(Strategy::kBaseline, 20)).net->params().values());
}

TEST_CASE("adam step scaling and the cosine schedule") {
  nnet::ParameterStore store;
  store.Add(3);
  store.grads()[0] = 2.0;
  store.grads()[1] = -0.5;
  store.grads()[2] = 0.0;
  AdamConfig config;
  config.eps = 0.0;
  Adam full(config, 3), half(config, 3), none(config, 3);
  nnet::ParameterStore a = store, b = store, z = store;
  full.Step(&a);
  half.Step(&b, 0.5);
  none.Step(&z, 0.0);
  // The first bias-corrected step moves each parameter by lr against its
  // gradient sign.
  CHECK(a.values()[0] == doctest::Approx(-1e-3).epsilon(1e-12));
  CHECK(a.values()[1] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(b.values()[0] == doctest::Approx(-0.5e-3).epsilon(1e-12));
  CHECK(z.values()[0] == 0.0);

  // The schedule changes the result only after the first step.
  Fixture f(1);
  TrainConfig flat = f.Config(Strategy::kBaseline, 1);
  flat.adam.cosine = false;
  TrainConfig cosine = flat;
  cosine.adam.cosine = true;
  CHECK(Train(f.set, flat).net->params().values() ==
        Train(f.set, cosine).net->params().values());
  flat.steps = cosine.steps = 30;
  CHECK(Train(f.set, flat).net->params().values() !=
        Train(f.set, cosine).net->params().values());
}

TEST_CASE("every strategy trains; equiv-reg with zero weight is the baseline") {
  Fixture f;
  const TrainResult base = Train(f.set, f.Config(Strategy::kBaseline, 30));
  TrainConfig zero = f.Config(Strategy::kEquivReg, 30);
  zero.lambda = 0.0;
  const TrainResult reg0 = Train(f.set, zero);
  CHECK(base.net->params().values() == reg0.net->params().values());
  for (size_t i = 0; i < base.log.size(); ++i) {
    CHECK(base.log[i].loss == reg0.log[i].loss);
  }
  const TrainResult reg = Train(f.set, f.Config(Strategy::kEquivReg, 30));
  CHECK(reg.net->params().values() != base.net->params().values());
  const TrainResult aug = Train(f.set, f.Config(Strategy::kSymAug, 30));
  CHECK(aug.net->params().values() != base.net->params().values());
}

TEST_CASE("equiv-net keeps a zero probe gap throughout training") {
  Fixture f;
  const TrainResult r = Train(f.set, f.Config(Strategy::kEquivNet, 40));
  int probed = 0;
  for (const LogRow& row : r.log) {
    if (row.equiv_gap < 0.0) continue;
    ++probed;
    CHECK(row.equiv_gap <= 1e-8);
  }
  CHECK(probed == 5);
  Fixture held(2);
  const TrainResult h = Train(f.set, f.Config(Strategy::kEquivNet, 20), &held.set);
  CHECK(h.log.back().equiv_gap <= 1e-8);
  CHECK(MeasureEquivGap(h.net.get(), 1000, 100.0, 3).max <= 1e-8);
}

TEST_CASE("training rejects bad inputs and reports divergence") {
  Fixture f;
  TrainingSet empty = f.set;
  empty.obs.resize(0, empty.obs.cols());
  empty.act.resize(0, empty.act.cols());
  CHECK_THROWS_AS(Train(empty, f.Config(Strategy::kBaseline, 5)), ValidationError);
  TrainConfig wrong = f.Config(Strategy::kBaseline, 5);
  wrong.window.history = 3;
  CHECK_THROWS_AS(Train(f.set, wrong), ValidationError);
  TrainConfig wild = f.Config(Strategy::kBaseline, 200);
  wild.adam.lr = 1e4;
  CHECK_THROWS_AS(Train(f.set, wild), DivergenceError);
}

TEST_CASE("probe batches") {
  Fixture f;
  const ProbeBatch g1 = GaussianProbes(f.set.shape, 50, 1.0, 3);
  const ProbeBatch g100 = GaussianProbes(f.set.shape, 50, 100.0, 3);
  CHECK((g100.obs - 100.0 * g1.obs).norm() <= 1e-9);
  CHECK(g1.k.minCoeff() >= 0.0);
  CHECK(g1.k.maxCoeff() <= 1.0);
  const ProbeBatch d1 = DataProbes(f.set, 50, 1.0, 4);
  const ProbeBatch d2 = DataProbes(f.set, 50, 1.0, 4);
  CHECK(d1.obs == d2.obs);
  CHECK(d1.a == d2.a);
  for (int r = 0; r < 50; ++r) {
    bool found = false;
    for (Eigen::Index i = 0; i < f.set.obs.rows() && !found; ++i) {
      found = f.set.obs.row(i) == d1.obs.row(r);
    }
    CHECK(found);
  }
}

TEST_CASE("Euler sampler") {
  Fixture f;
  std::mt19937_64 rng(18);
  const Matrix obs = Gaussian(3, f.set.obs.cols(), rng);
  const Matrix a0 = Gaussian(3, f.set.act.cols(), rng);
  ConstantField zero(f.set.shape, f.set.rep_obs, f.set.rep_act,
                     RowVector::Zero(a0.cols()));
  CHECK(SampleActionChunk(&zero, obs, a0, 10) == a0);
  const RowVector c = Gaussian(1, a0.cols(), rng).row(0);
  ConstantField constant(f.set.shape, f.set.rep_obs, f.set.rep_act, c);
  for (int n : {1, 3, 10}) {
    CHECK((SampleActionChunk(&constant, obs, a0, n) - (a0.rowwise() + c)).norm() <=
          1e-12);
  }
  CHECK_THROWS_AS(SampleActionChunk(&zero, obs, a0, 0), ValidationError);
  RowVector bad = c;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  ConstantField nan(f.set.shape, f.set.rep_obs, f.set.rep_act, bad);
  CHECK_THROWS_AS(SampleActionChunk(&nan, obs, a0, 2), DivergenceError);

  std::mt19937_64 r1(5), r2(5);
  CHECK(SampleActionChunk(&constant, obs, 4, r1) ==
        SampleActionChunk(&constant, obs, 4, r2));
}

TEST_CASE("coupled noise makes the equivariant policy equivariant") {
  Fixture f;
  auto net = f.Net(NetworkVariant::kEquivariantTransformer, 8, 2);
  std::mt19937_64 rng(19);
  Randomize(&net->params(), rng);
  FlowPolicy policy(std::move(net), f.set.norm, f.window, 10);
  const Representation& ro = f.env->obs_space().rep();
  const Representation& ra = f.env->act_space().rep();
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix history = Gaussian(2, f.set.obs.cols(), rng, 0.3);
    const Matrix a0 = Gaussian(2, f.set.act.cols(), rng);
    const Matrix chunk = policy.Sample(history, a0);
    const Matrix mirrored = policy.Sample(ActFlatRows(ro, kReflection, history),
                                          ActFlatRows(ra, kReflection, a0));
    CHECK((mirrored - ActFlatRows(ra, kReflection, chunk)).cwiseAbs().maxCoeff() <=
          1e-8);
  }
}

TEST_CASE("policy checkpoints and training logs") {
  Fixture f;
  TrainResult r = Train(f.set, f.Config(Strategy::kEquivNet, 5));
  const auto dir = std::filesystem::temp_directory_path() / "symflow_cfm_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "policy.json").string();
  SavePolicy(r, path, {{"note", "x"}});
  nlohmann::json extra;
  FlowPolicy loaded = LoadPolicy(path, 10, &extra);
  CHECK(extra.at("note") == "x");
  CHECK(loaded.window().exec == f.window.exec);
  FlowPolicy original(r.net->Clone(), r.norm, r.window, 10);
  std::mt19937_64 rng(20);
  const Matrix history = Gaussian(3, f.set.obs.cols(), rng, 0.3);
  const Matrix a0 = Gaussian(3, f.set.act.cols(), rng);
  CHECK(loaded.Sample(history, a0) == original.Sample(history, a0));

  const std::string bare = (dir / "bare.json").string();
  SaveCheckpoint(*r.net, bare);
  CHECK_THROWS_AS(LoadPolicy(bare), ValidationError);

  const std::string log = (dir / "log.csv").string();
  WriteTrainLog(r.log, log);
  std::ifstream in(log);
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "step,loss,equiv_gap,wall_ms");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 5);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace symflow
