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

#include "symflow/envs.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "symflow/errors.h"

namespace symflow {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace {

constexpr double kPositionScale = 0.5;

double Deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double Rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Scales v down to norm <= limit.
Eigen::Vector2d LimitNorm(const Eigen::Vector2d& v, double limit) {
  const double n = v.norm();
  if (n <= limit) return v;
  return v * (limit / n);
}

Eigen::Vector2d Seg(const Vector& v, int offset) {
  return Eigen::Vector2d(v[offset], v[offset + 1]);
}

void Put(Vector* v, int offset, const Eigen::Vector2d& x) {
  (*v)[offset] = x[0];
  (*v)[offset + 1] = x[1];
}

// Signed angle from (c0, s0) to (c1, s1), odd under s -> -s.
double RelativeAngle(double c0, double s0, double c1, double s1) {
  return std::atan2(c0 * s1 - s0 * c1, c0 * c1 + s0 * s1);
}

// A block of planar points swapped pairwise (L <-> R) with x negated.
void AddMirroredPair(SignedPermutation* p, int left) {
  p->source[left] = left + 2;
  p->source[left + 1] = left + 3;
  p->source[left + 2] = left;
  p->source[left + 3] = left + 1;
  p->sign[left] = -1.0;
  p->sign[left + 1] = 1.0;
  p->sign[left + 2] = -1.0;
  p->sign[left + 3] = 1.0;
}

// A pose (x, y, cos, sin) reflected in place: x -> -x, sin -> -sin.
void AddMirroredPose(SignedPermutation* p, int offset) {
  for (int i = 0; i < 4; ++i) p->source[offset + i] = offset + i;
  p->sign[offset] = -1.0;
  p->sign[offset + 1] = 1.0;
  p->sign[offset + 2] = 1.0;
  p->sign[offset + 3] = -1.0;
}

SignedPermutation IdentityPerm(int n) {
  SignedPermutation p;
  p.source.resize(n);
  p.sign.assign(n, 1.0);
  for (int i = 0; i < n; ++i) p.source[i] = i;
  return p;
}

Representation C2Rep(const SignedPermutation& reflection) {
  return Representation(FiniteGroup::Reflection(),
                        std::vector<SignedPermutation>{
                            IdentityPerm(reflection.dim()), reflection});
}

Field Point(const std::string& name, int offset) {
  return {name, offset, 2, FieldKind::kPlanarPoint, kPositionScale};
}

Field Angle(const std::string& name, int offset) {
  return {name, offset, 2, FieldKind::kCosSinAngle, 1.0};
}

Field Displacement(const std::string& name, int offset, double scale) {
  return {name, offset, 2, FieldKind::kPlanarPoint, scale};
}

SpaceSpec BimanualActionSpace(double max_step) {
  SignedPermutation r = IdentityPerm(4);
  AddMirroredPair(&r, 0);
  return SpaceSpec({Displacement("d_ee_L", 0, max_step),
                    Displacement("d_ee_R", 2, max_step)},
                   C2Rep(r));
}

SpaceSpec ReachObsSpace() {
  SignedPermutation r = IdentityPerm(8);
  AddMirroredPair(&r, 0);
  AddMirroredPair(&r, 4);
  return SpaceSpec({Point("ee_L", 0), Point("ee_R", 2), Point("tgt_L", 4),
                    Point("tgt_R", 6)},
                   C2Rep(r));
}

Representation BoxStateRep() {
  SignedPermutation r = IdentityPerm(12);
  AddMirroredPair(&r, 0);
  AddMirroredPose(&r, 4);
  AddMirroredPose(&r, 8);
  return C2Rep(r);
}

SpaceSpec BoxObsSpace() {
  SignedPermutation r = IdentityPerm(16);
  AddMirroredPair(&r, 0);
  AddMirroredPose(&r, 4);
  AddMirroredPose(&r, 8);
  AddMirroredPair(&r, 12);
  return SpaceSpec(
      {Point("ee_L", 0), Point("ee_R", 2), Point("box_xy", 4),
       Angle("box_cs", 6), Point("target_xy", 8), Angle("target_cs", 10),
       Displacement("grip_L", 12, 0.05), Displacement("grip_R", 14, 0.05)},
      C2Rep(r));
}

}  // namespace

const char* ConfigTagName(ConfigTag tag) {
  switch (tag) {
    case ConfigTag::kE:
      return "e";
    case ConfigTag::kGr:
      return "g_r";
    case ConfigTag::kBoth:
      return "both";
  }
  return "e";
}

ConfigTag ParseConfigTag(const std::string& name) {
  if (name == "e") return ConfigTag::kE;
  if (name == "g_r" || name == "gr") return ConfigTag::kGr;
  if (name == "both") return ConfigTag::kBoth;
  throw ValidationError("unknown config tag '" + name + "'");
}

const char* DifficultyName(Difficulty d) {
  return d == Difficulty::kNarrow ? "narrow" : "wide";
}

Difficulty ParseDifficulty(const std::string& name) {
  if (name == "narrow") return Difficulty::kNarrow;
  if (name == "wide") return Difficulty::kWide;
  throw ValidationError("unknown difficulty '" + name + "'");
}

double UniformUnit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double UniformIn(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

Vector Env::Reset(uint64_t seed, ConfigTag tag, ConfigTag* drawn) const {
  std::mt19937_64 rng(SplitMix64(seed));
  Vector s = SampleOriginal(rng);
  bool reflect = tag == ConfigTag::kGr;
  if (tag == ConfigTag::kBoth) {
    std::mt19937_64 coin(SplitMix64(seed ^ 0xC0FFEEULL));
    reflect = UniformUnit(coin) < 0.5;
  }
  if (drawn != nullptr) *drawn = reflect ? ConfigTag::kGr : ConfigTag::kE;
  return reflect ? state_rep().Act(kReflection, s) : s;
}

StepResult Env::Step(const Vector& state, const Vector& action, int t) const {
  if (state.size() != state_dim()) {
    throw ValidationError("step: state has wrong length");
  }
  if (action.size() != act_space().dim()) {
    throw ValidationError("step: action has length " +
                          std::to_string(action.size()) + ", expected " +
                          std::to_string(act_space().dim()));
  }
  if (!action.allFinite()) throw ValidationError("step: non-finite action");
  const Vector clipped = action.cwiseMax(-max_step()).cwiseMin(max_step());
  StepResult r;
  r.state = Transition(state, clipped);
  r.success = Success(r.state);
  r.done = r.success || t + 1 >= step_limit();
  return r;
}

// ---------------------------------------------------------------- ReachEnv

ReachEnv::ReachEnv(ReachParams params)
    : params_(params),
      obs_(ReachObsSpace()),
      act_(BimanualActionSpace(params.max_step)) {}

Vector ReachEnv::SampleOriginal(std::mt19937_64& rng) const {
  const double scale = params_.difficulty == Difficulty::kWide ? 2.0 : 1.0;
  const double j = params_.home_jitter;
  Vector s(8);
  s[0] = -params_.home_x + UniformIn(rng, -j, j);
  s[1] = params_.home_y + UniformIn(rng, -j, j);
  s[2] = params_.home_x + UniformIn(rng, -j, j);
  s[3] = params_.home_y + UniformIn(rng, -j, j);
  const double x_lo = std::max(params_.x_lo, params_.margin);
  for (int k = 4; k < 8; k += 2) {
    s[k] = UniformIn(rng, x_lo, x_lo + scale * params_.width_x);
    s[k + 1] = UniformIn(rng, params_.y_lo,
                         params_.y_lo + scale * params_.width_y);
  }
  return s;
}

Vector ReachEnv::Transition(const Vector& state, const Vector& action) const {
  Vector next = state;
  next.head<4>() += action;
  return next;
}

bool ReachEnv::Success(const Vector& state) const {
  return FinalError(state) <= params_.success_radius;
}

double ReachEnv::FinalError(const Vector& state) const {
  const double left = (Seg(state, 4) - Seg(state, 0)).norm();
  const double right = (Seg(state, 6) - Seg(state, 2)).norm();
  return std::max(left, right);
}

ReachExpert::ReachExpert(const ReachEnv& env, double gain)
    : env_(env), gain_(gain) {}

Vector ReachExpert::Act(const Vector& state) const {
  const double limit = env_.params().max_step;
  Vector a(4);
  Put(&a, 0, LimitNorm(gain_ * (Seg(state, 4) - Seg(state, 0)), limit));
  Put(&a, 2, LimitNorm(gain_ * (Seg(state, 6) - Seg(state, 2)), limit));
  return a;
}

// --------------------------------------------------------- BoxTransportEnv

BoxTransportEnv::BoxTransportEnv(BoxParams params)
    : params_(params),
      state_rep_(BoxStateRep()),
      obs_(BoxObsSpace()),
      act_(BimanualActionSpace(params.max_step)) {}

void BoxTransportEnv::Faces(const Eigen::Vector4d& pose, Eigen::Vector2d* left,
                            Eigen::Vector2d* right) const {
  const Eigen::Vector2d c(pose[0], pose[1]);
  const Eigen::Vector2d u(pose[2], pose[3]);
  *left = c - params_.half_width * u;
  *right = c + params_.half_width * u;
}

Vector BoxTransportEnv::Observe(const Vector& state) const {
  Vector obs(16);
  obs.head<12>() = state;
  Eigen::Vector2d left, right;
  Faces(state.segment<4>(4), &left, &right);
  Put(&obs, 12, Seg(state, 0) - left);
  Put(&obs, 14, Seg(state, 2) - right);
  return obs;
}

bool BoxTransportEnv::Grasped(const Vector& state) const {
  Eigen::Vector2d left, right;
  Faces(state.segment<4>(4), &left, &right);
  return (Seg(state, 0) - left).norm() <= params_.grasp_distance &&
         (Seg(state, 2) - right).norm() <= params_.grasp_distance;
}

Vector BoxTransportEnv::SampleOriginal(std::mt19937_64& rng) const {
  const double scale = params_.difficulty == Difficulty::kWide ? 2.0 : 1.0;
  const double j = params_.home_jitter;
  Vector s(12);
  s[0] = -params_.home_x + UniformIn(rng, -j, j);
  s[1] = params_.home_y + UniformIn(rng, -j, j);
  s[2] = params_.home_x + UniformIn(rng, -j, j);
  s[3] = params_.home_y + UniformIn(rng, -j, j);
  const double x_lo = std::max(params_.box_x_lo, params_.margin);
  s[4] = UniformIn(rng, x_lo, x_lo + scale * params_.box_width_x);
  s[5] = UniformIn(rng, params_.box_y_lo,
                   params_.box_y_lo + scale * params_.box_width_y);
  const double angle = Rad(scale * params_.box_angle_deg);
  const double theta = UniformIn(rng, -angle, angle);
  s[6] = std::cos(theta);
  s[7] = std::sin(theta);
  s[8] = params_.target_x;
  s[9] = params_.target_y;
  s[10] = std::cos(Rad(params_.target_angle_deg));
  s[11] = std::sin(Rad(params_.target_angle_deg));
  return s;
}

Vector BoxTransportEnv::Transition(const Vector& state,
                                   const Vector& action) const {
  const bool grasped = Grasped(state);
  Vector next = state;
  next.head<4>() += action;
  if (grasped) {
    const Eigen::Vector2d left = Seg(next, 0), right = Seg(next, 2);
    Put(&next, 4, 0.5 * (left + right));
    const Eigen::Vector2d d = right - left;
    Put(&next, 6, d / d.norm());
  }
  return next;
}

double BoxTransportEnv::FinalError(const Vector& state) const {
  return (Seg(state, 4) - Seg(state, 8)).norm();
}

bool BoxTransportEnv::Success(const Vector& state) const {
  const double angle =
      RelativeAngle(state[6], state[7], state[10], state[11]);
  return FinalError(state) <= params_.pos_tolerance &&
         std::abs(Deg(angle)) <= params_.angle_tolerance_deg;
}

BoxExpert::BoxExpert(const BoxTransportEnv& env, double standoff,
                     double slope, double gain)
    : env_(env), standoff_(standoff), slope_(slope), gain_(gain) {}

Vector BoxExpert::Act(const Vector& state) const {
  const BoxParams& p = env_.params();
  const double limit = p.max_step;
  const Eigen::Vector2d ee_l = Seg(state, 0), ee_r = Seg(state, 2);
  const Eigen::Vector4d pose = state.segment<4>(4);
  Eigen::Vector2d face_l, face_r;
  env_.Faces(pose, &face_l, &face_r);
  Vector a(4);

  if (env_.Grasped(state)) {
    // Next box pose on the straight line toward the target, limited so each
    // face moves at most max_step. The step ramps up with grasp depth, and
    // the arms keep closing onto the faces meanwhile.
    const double slack = std::max((ee_l - face_l).norm(), (ee_r - face_r).norm());
    const double depth = std::clamp(
        2.0 * (p.grasp_distance - slack) / p.grasp_distance, 0.0, 1.0);
    const Eigen::Vector2d center(pose[0], pose[1]);
    const Eigen::Vector2d dc =
        depth * LimitNorm(Seg(state, 8) - center, 0.5 * limit);
    const double max_turn = 0.5 * limit / p.half_width;
    const double dtheta =
        depth * std::clamp(RelativeAngle(pose[2], pose[3], state[10], state[11]),
                           -max_turn, max_turn);
    const double c = std::cos(dtheta), s = std::sin(dtheta);
    Eigen::Vector4d next;
    next << center + dc, pose[2] * c - pose[3] * s, pose[3] * c + pose[2] * s;
    Eigen::Vector2d goal_l, goal_r;
    env_.Faces(next, &goal_l, &goal_r);
    Put(&a, 0, LimitNorm(goal_l - face_l + gain_ * (face_l - ee_l), limit));
    Put(&a, 2, LimitNorm(goal_r - face_r + gain_ * (face_r - ee_r), limit));
    return a;
  }

  const Eigen::Vector2d axis(pose[2], pose[3]);
  auto approach = [&](const Eigen::Vector2d& ee, const Eigen::Vector2d& face,
                      const Eigen::Vector2d& outward) {
    const Eigen::Vector2d rel = ee - face;
    const double lateral = (rel - rel.dot(outward) * outward).norm();
    const Eigen::Vector2d goal =
        face + std::min(standoff_, slope_ * lateral) * outward;
    return LimitNorm(gain_ * (goal - ee), limit);
  };
  Put(&a, 0, approach(ee_l, face_l, -axis));
  Put(&a, 2, approach(ee_r, face_r, axis));
  return a;
}

std::unique_ptr<ExpertPolicy> MakeExpert(const Env& env) {
  if (const auto* reach = dynamic_cast<const ReachEnv*>(&env)) {
    return std::make_unique<ReachExpert>(*reach);
  }
  if (const auto* box = dynamic_cast<const BoxTransportEnv*>(&env)) {
    return std::make_unique<BoxExpert>(*box);
  }
  throw ValidationError("no expert for environment '" + env.id() + "'");
}

std::unique_ptr<Env> MakeEnv(const std::string& id, Difficulty difficulty) {
  EnvSettings settings;
  settings.id = id;
  return MakeEnv(settings, difficulty);
}

std::unique_ptr<Env> MakeEnv(const EnvSettings& settings, Difficulty difficulty) {
  if (settings.id == "reach") {
    ReachParams p = settings.reach;
    p.difficulty = difficulty;
    return std::make_unique<ReachEnv>(p);
  }
  if (settings.id == "box") {
    BoxParams p = settings.box;
    p.difficulty = difficulty;
    return std::make_unique<BoxTransportEnv>(p);
  }
  throw ValidationError("unknown environment '" + settings.id + "'");
}

// ----------------------------------------------------------------- datasets

Trajectory ExpertRollout(const Env& env, const ExpertPolicy& expert,
                         uint64_t seed, ConfigTag tag) {
  ConfigTag drawn = ConfigTag::kE;
  Vector state = env.Reset(seed, tag, &drawn);
  std::vector<Vector> obs, act;
  bool success = env.Success(state);
  for (int t = 0; !success && t < env.step_limit(); ++t) {
    const Vector a = expert.Act(state);
    obs.push_back(env.Observe(state));
    act.push_back(a);
    const StepResult r = env.Step(state, a, t);
    state = r.state;
    success = r.success;
    if (r.done) break;
  }
  obs.push_back(env.Observe(state));
  act.push_back(expert.Act(state));

  Trajectory traj;
  traj.env = env.id();
  traj.seed = seed;
  traj.success = success;
  traj.obs.resize(static_cast<Eigen::Index>(obs.size()), env.obs_space().dim());
  traj.act.resize(static_cast<Eigen::Index>(act.size()), env.act_space().dim());
  for (size_t t = 0; t < obs.size(); ++t) {
    traj.obs.row(t) = obs[t].transpose();
    traj.act.row(t) = act[t].transpose();
  }
  traj.config_tag = ConfigTagName(drawn);
  return traj;
}

Dataset GenerateDataset(const Env& env, const ExpertPolicy& expert,
                        int n_episodes, ConfigTag tag, uint64_t seed) {
  if (n_episodes < 1) throw ValidationError("n_episodes must be >= 1");
  Dataset data;
  data.env = env.id();
  data.difficulty = env.difficulty();
  const int budget = static_cast<int>(std::ceil(n_episodes / 0.95)) + 1;
  const int max_failures = std::max(1, budget / 20);
  int failures = 0;
  for (uint64_t attempt = 0;
       static_cast<int>(data.trajectories.size()) < n_episodes; ++attempt) {
    const uint64_t episode_seed = SplitMix64(seed * 1000003ULL + attempt);
    Trajectory traj = ExpertRollout(env, expert, episode_seed, tag);
    if (traj.success) {
      data.trajectories.push_back(std::move(traj));
    } else if (++failures > max_failures) {
      std::ostringstream os;
      os << "expert failed on " << failures << " of " << attempt + 1
         << " attempts (last seed " << episode_seed << ", final error "
         << env.FinalError(env.Reset(episode_seed, tag)) << ")";
      throw std::runtime_error(os.str());
    }
  }
  return data;
}

std::string ManifestPath(const std::string& dataset_path) {
  return dataset_path + ".manifest.json";
}

namespace {

nlohmann::json Rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix FromRows(const nlohmann::json& rows, int dim) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<int>(rows[r].size()) != dim) {
      throw ValidationError("dataset row of width " +
                            std::to_string(rows[r].size()) + ", expected " +
                            std::to_string(dim));
    }
    for (int c = 0; c < dim; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

nlohmann::json Manifest(const Dataset& data, const Env& env) {
  return {{"format", "symflow-dataset-v1"},
          {"env", env.id()},
          {"difficulty", DifficultyName(env.difficulty())},
          {"n_trajectories", data.trajectories.size()},
          {"group", GroupToJson(env.obs_space().rep().group())},
          {"obs_space", SpaceSpecToJson(env.obs_space())},
          {"act_space", SpaceSpecToJson(env.act_space())}};
}

}  // namespace

void WriteDataset(const Dataset& data, const Env& env,
                  const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Trajectory& t : data.trajectories) {
    nlohmann::json line = {{"env", t.env},
                           {"seed", t.seed},
                           {"config_tag", t.config_tag},
                           {"obs", Rows(t.obs)},
                           {"act", Rows(t.act)},
                           {"success", t.success}};
    out << line.dump() << '\n';
  }
  std::ofstream manifest(ManifestPath(path), std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write manifest for " + path);
  manifest << Manifest(data, env).dump(2) << '\n';
}

Dataset ReadDataset(const std::string& path) {
  std::ifstream mf(ManifestPath(path));
  if (!mf) throw ValidationError("missing dataset manifest for " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed manifest: ") + e.what());
  }
  const std::string env_id = manifest.value("env", "");
  const Difficulty difficulty =
      ParseDifficulty(manifest.value("difficulty", "narrow"));
  const auto env = MakeEnv(env_id, difficulty);
  GroupPtr group = GroupFromJson(manifest.at("group"));
  const SpaceSpec obs = SpaceSpecFromJson(manifest.at("obs_space"), group);
  const SpaceSpec act = SpaceSpecFromJson(manifest.at("act_space"), group);
  if (SpaceSpecToJson(obs) != SpaceSpecToJson(env->obs_space()) ||
      SpaceSpecToJson(act) != SpaceSpecToJson(env->act_space())) {
    throw ValidationError("dataset spaces do not match environment '" +
                          env_id + "'");
  }

  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read dataset " + path);
  Dataset data;
  data.env = env_id;
  data.difficulty = difficulty;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Trajectory t;
      t.env = j.at("env").get<std::string>();
      t.seed = j.at("seed").get<uint64_t>();
      t.config_tag = j.at("config_tag").get<std::string>();
      t.success = j.at("success").get<bool>();
      t.obs = FromRows(j.at("obs"), obs.dim());
      t.act = FromRows(j.at("act"), act.dim());
      if (t.obs.rows() != t.act.rows()) {
        throw ValidationError("obs/act length mismatch");
      }
      data.trajectories.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " +
                            e.what());
    }
  }
  return data;
}

}  // namespace symflow
