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

#include "symflow/spaces.h"

#include <random>

#include <doctest.h>

#include "symflow/envs.h"
#include "symflow/errors.h"

namespace symflow {
namespace {

Trajectory Ramp(int length, int dim_o, int dim_a) {
  Trajectory t;
  t.obs.resize(length, dim_o);
  t.act.resize(length, dim_a);
  for (int r = 0; r < length; ++r) {
    t.obs.row(r).setConstant(10.0 * r);
    t.act.row(r).setConstant(r);
  }
  return t;
}

TEST_CASE("window counts anchors and pads chunks with the final action") {
  const Trajectory t = Ramp(5, 3, 2);
  const auto pairs = Window(t, {.history = 2, .chunk = 2, .exec = 1});
  REQUIRE(pairs.size() == 4);
  // First anchor t = 1: history [o0, o1], chunk [a1, a2].
  CHECK(pairs[0].history(0, 0) == 0.0);
  CHECK(pairs[0].history(1, 0) == 10.0);
  CHECK(pairs[0].chunk(0, 0) == 1.0);
  CHECK(pairs[0].chunk(1, 0) == 2.0);
  CHECK(pairs[3].chunk(1, 0) == 4.0);

  CHECK(Window(Ramp(1, 3, 2), {.history = 2, .chunk = 2, .exec = 1}).empty());

  const auto padded = Window(Ramp(3, 3, 2), {.history = 1, .chunk = 3, .exec = 1});
  REQUIRE(padded.size() == 3);
  for (int j = 0; j < 3; ++j) CHECK(padded[2].chunk(j, 1) == 2.0);
}

TEST_CASE("window spec validation") {
  CHECK_NOTHROW(WindowSpec{}.Validate());
  CHECK_THROWS_AS((WindowSpec{0, 8, 4}.Validate()), ValidationError);
  CHECK_THROWS_AS((WindowSpec{2, 0, 1}.Validate()), ValidationError);
  CHECK_THROWS_AS((WindowSpec{2, 4, 5}.Validate()), ValidationError);
  CHECK_THROWS_AS((WindowSpec{2, 4, 0}.Validate()), ValidationError);
}

TEST_CASE("reflect_pair: identity, involution, zeros") {
  ReachEnv env;
  const auto& ro = env.obs_space().rep();
  const auto& ra = env.act_space().rep();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  WindowPair p{Matrix(2, 8), Matrix(8, 4)};
  for (Eigen::Index i = 0; i < p.history.size(); ++i) p.history.data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < p.chunk.size(); ++i) p.chunk.data()[i] = n01(rng);

  const WindowPair same = ReflectPair(p, ro, ra, kIdentity);
  CHECK(same.history == p.history);
  CHECK(same.chunk == p.chunk);
  const WindowPair twice =
      ReflectPair(ReflectPair(p, ro, ra, kReflection), ro, ra, kReflection);
  CHECK(twice.history == p.history);
  CHECK(twice.chunk == p.chunk);
  const WindowPair zero{Matrix::Zero(2, 8), Matrix::Zero(8, 4)};
  CHECK(ReflectPair(zero, ro, ra, kReflection).chunk == zero.chunk);
  CHECK_THROWS_AS(ReflectPair(WindowPair{Matrix::Zero(2, 7), zero.chunk}, ro,
                              ra, kReflection),
                  ValidationError);
}

TEST_CASE("property: windowing commutes with reflecting the trajectory") {
  BoxTransportEnv env;
  const auto expert = MakeExpert(env);
  const auto& ro = env.obs_space().rep();
  const auto& ra = env.act_space().rep();
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Trajectory t = ExpertRollout(env, *expert, seed, ConfigTag::kE);
    const WindowSpec w{.history = 3, .chunk = 5, .exec = 2};
    const auto lhs = Window(ReflectTrajectory(t, ro, ra, kReflection), w);
    const auto rhs = Window(t, w);
    REQUIRE(lhs.size() == rhs.size());
    for (size_t i = 0; i < lhs.size(); ++i) {
      const WindowPair r = ReflectPair(rhs[i], ro, ra, kReflection);
      CHECK(lhs[i].history == r.history);
      CHECK(lhs[i].chunk == r.chunk);
    }
  }
}

TEST_CASE("space specs validate layouts and serialize") {
  GroupPtr c2 = FiniteGroup::Reflection();
  const auto rep = Repeat(Representation::Regular(c2), 2);
  CHECK_THROWS_AS(SpaceSpec({{"a", 0, 3, FieldKind::kScalar, 1.0}}, rep),
                  ValidationError);  // does not cover entry 3
  CHECK_THROWS_AS(SpaceSpec({{"a", 0, 4, FieldKind::kCosSinAngle, 1.0}}, rep),
                  ValidationError);
  // Scales must agree inside each orbit {0,1}, {2,3}.
  CHECK_THROWS_AS(SpaceSpec({{"a", 0, 1, FieldKind::kScalar, 1.0},
                             {"b", 1, 3, FieldKind::kScalar, 2.0}},
                            rep),
                  ValidationError);

  BoxTransportEnv env;
  const SpaceSpec& obs = env.obs_space();
  CHECK(obs.dim() == 16);
  const Vector o = env.Observe(env.Reset(1, ConfigTag::kE));
  CHECK_FALSE(obs.CheckVector({o.data(), 16}).has_value());
  Vector bad = o;
  bad[6] = 2.0;
  CHECK(obs.CheckVector({bad.data(), 16}).has_value());

  const SpaceSpec back = SpaceSpecFromJson(SpaceSpecToJson(obs), obs.rep().group_ptr());
  CHECK(SpaceSpecToJson(back) == SpaceSpecToJson(obs));
}

}  // namespace
}  // namespace symflow
