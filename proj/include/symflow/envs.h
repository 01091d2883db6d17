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

#ifndef SYMFLOW_ENVS_H_
#define SYMFLOW_ENVS_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "symflow/group.h"
#include "symflow/spaces.h"
#include "symflow/types.h"

namespace symflow {

// Which half of the initial-state distribution a reset draws from.
enum class ConfigTag { kE, kGr, kBoth };
enum class Difficulty { kNarrow, kWide };

const char* ConfigTagName(ConfigTag tag);
ConfigTag ParseConfigTag(const std::string& name);
const char* DifficultyName(Difficulty d);
Difficulty ParseDifficulty(const std::string& name);

// Uniform doubles in [0, 1) straight from the engine bits, so reset
// distributions do not depend on the standard library's distributions.
// Seed scrambler for deriving independent streams.
uint64_t SplitMix64(uint64_t x);

double UniformUnit(std::mt19937_64& rng);
double UniformIn(std::mt19937_64& rng, double lo, double hi);

struct StepResult {
  Vector state;
  bool success = false;
  bool done = false;
};

// A planar, deterministic, C2-symmetric manipulation task. Environments are
// stateless: the caller owns the state vector.
class Env {
 public:
  virtual ~Env() = default;

  virtual std::string id() const = 0;
  virtual int state_dim() const = 0;
  virtual const Representation& state_rep() const = 0;
  virtual const SpaceSpec& obs_space() const = 0;
  virtual const SpaceSpec& act_space() const = 0;
  virtual int step_limit() const = 0;
  virtual Difficulty difficulty() const = 0;

  // Initial state for `seed`. kE samples the right half-plane, kGr pushes
  // the same sample through rho_S(g_r), kBoth picks either with probability
  // 1/2 (also from the seed). `drawn` receives kE or kGr.
  Vector Reset(uint64_t seed, ConfigTag tag, ConfigTag* drawn = nullptr) const;
  // Throws ValidationError on wrong length or non-finite entries. `t` is the
  // number of steps already taken and only decides `done`.
  StepResult Step(const Vector& state, const Vector& action, int t) const;

  virtual Vector Observe(const Vector& state) const = 0;
  virtual bool Success(const Vector& state) const = 0;
  // Task-specific distance to success (meters).
  virtual double FinalError(const Vector& state) const = 0;

  const GroupPtr& group() const { return obs_space().rep().group_ptr(); }

 protected:
  // A sample from the `e` half of the distribution.
  virtual Vector SampleOriginal(std::mt19937_64& rng) const = 0;
  // Dynamics on an already clipped, finite action.
  virtual Vector Transition(const Vector& state, const Vector& action) const = 0;
  virtual double max_step() const = 0;
};

struct ReachParams {
  double max_step = 0.02;        // per axis, meters
  double success_radius = 0.01;  // meters
  int step_limit = 300;
  double margin = 0.05;  // targets keep |x| > margin
  double home_x = 0.2;   // ee_L starts at (-home_x, home_y)
  double home_y = 0.0;
  double home_jitter = 0.02;
  // Target region of the `e` half: x in [x_lo, x_lo + width_x],
  // y in [y_lo, y_lo + width_y]; `wide` doubles both widths. x_lo below
  // margin is raised to margin.
  double x_lo = 0.15;
  double width_x = 0.2;
  double width_y = 0.15;
  double y_lo = 0.25;
  Difficulty difficulty = Difficulty::kNarrow;
};

// Bimanual reaching: state = observation = [ee_L, ee_R, tgt_L, tgt_R],
// action = [d_ee_L, d_ee_R].
class ReachEnv : public Env {
 public:
  explicit ReachEnv(ReachParams params = {});

  std::string id() const override { return "reach"; }
  int state_dim() const override { return 8; }
  const Representation& state_rep() const override { return obs_.rep(); }
  const SpaceSpec& obs_space() const override { return obs_; }
  const SpaceSpec& act_space() const override { return act_; }
  int step_limit() const override { return params_.step_limit; }
  Difficulty difficulty() const override { return params_.difficulty; }
  const ReachParams& params() const { return params_; }

  Vector Observe(const Vector& state) const override { return state; }
  bool Success(const Vector& state) const override;
  double FinalError(const Vector& state) const override;

 protected:
  Vector SampleOriginal(std::mt19937_64& rng) const override;
  Vector Transition(const Vector& state, const Vector& action) const override;
  double max_step() const override { return params_.max_step; }

 private:
  ReachParams params_;
  SpaceSpec obs_;
  SpaceSpec act_;
};

struct BoxParams {
  double max_step = 0.02;
  double pos_tolerance = 0.01;    // meters
  double angle_tolerance_deg = 5.0;
  int step_limit = 300;
  double margin = 0.05;
  double half_width = 0.1;    // grasp faces sit at +-half_width along the box axis
  double half_height = 0.04;  // cosmetic
  double grasp_distance = 0.02;
  double home_x = 0.25;
  double home_y = 0.1;
  double home_jitter = 0.02;
  // Box region of the `e` half; `wide` doubles the widths and angle range.
  double box_x_lo = 0.12;
  double box_width_x = 0.18;
  double box_y_lo = 0.35;
  double box_width_y = 0.15;
  double box_angle_deg = 25.0;
  // Target pose (x, y, angle). The default target sits on the symmetry axis.
  double target_x = 0.0;
  double target_y = 0.45;
  double target_angle_deg = 0.0;
  Difficulty difficulty = Difficulty::kNarrow;
};

// Bimanual planar box transport with a kinematic grasp.
// state (12) = [ee_L, ee_R, box(x, y, cos, sin), target(x, y, cos, sin)]
// obs (16)   = state + [ee_L - face_L, ee_R - face_R] (offsets to the
//              box grasp-face centers)
// action (4) = [d_ee_L, d_ee_R]
// When both end-effectors are within grasp_distance of their faces the box
// follows the pair: midpoint sets the position, the L->R bearing the angle.
class BoxTransportEnv : public Env {
 public:
  explicit BoxTransportEnv(BoxParams params = {});

  std::string id() const override { return "box"; }
  int state_dim() const override { return 12; }
  const Representation& state_rep() const override { return state_rep_; }
  const SpaceSpec& obs_space() const override { return obs_; }
  const SpaceSpec& act_space() const override { return act_; }
  int step_limit() const override { return params_.step_limit; }
  Difficulty difficulty() const override { return params_.difficulty; }
  const BoxParams& params() const { return params_; }

  Vector Observe(const Vector& state) const override;
  bool Success(const Vector& state) const override;
  double FinalError(const Vector& state) const override;

  bool Grasped(const Vector& state) const;
  // Face centers of a box pose (x, y, cos, sin).
  void Faces(const Eigen::Vector4d& pose, Eigen::Vector2d* left,
             Eigen::Vector2d* right) const;

 protected:
  Vector SampleOriginal(std::mt19937_64& rng) const override;
  Vector Transition(const Vector& state, const Vector& action) const override;
  double max_step() const override { return params_.max_step; }

 private:
  BoxParams params_;
  Representation state_rep_;
  SpaceSpec obs_;
  SpaceSpec act_;
};

// Scripted expert; must satisfy Act(g . s) = g . Act(s).
class ExpertPolicy {
 public:
  virtual ~ExpertPolicy() = default;
  virtual Vector Act(const Vector& state) const = 0;
};

// Proportional control toward each arm's target, norm-limited to max_step.
class ReachExpert : public ExpertPolicy {
 public:
  explicit ReachExpert(const ReachEnv& env, double gain = 0.25);
  Vector Act(const Vector& state) const override;

 private:
  const ReachEnv& env_;
  double gain_;
};

// Phase machine read off the state: approach the faces from outside, then
// move the grasped box along a straight line in pose space. Release is the
// episode ending at success. The approach aims at a point `standoff` out
// from each face, pulled in by `slope` times the lateral offset, so the
// command is continuous in the state; `gain` slows the final approach.
class BoxExpert : public ExpertPolicy {
 public:
  explicit BoxExpert(const BoxTransportEnv& env, double standoff = 0.05,
                     double slope = 2.0, double gain = 0.5);
  Vector Act(const Vector& state) const override;

 private:
  const BoxTransportEnv& env_;
  double standoff_;
  double slope_;
  double gain_;
};

std::unique_ptr<ExpertPolicy> MakeExpert(const Env& env);

// Builds "reach" or "box" at the given difficulty with default parameters.
std::unique_ptr<Env> MakeEnv(const std::string& id, Difficulty difficulty);

// An environment id with reset parameters for both environments. The
// difficulty of the parameter sets is overridden at construction.
struct EnvSettings {
  std::string id = "reach";
  ReachParams reach;
  BoxParams box;
};
std::unique_ptr<Env> MakeEnv(const EnvSettings& settings, Difficulty difficulty);

struct Dataset {
  std::string env;
  Difficulty difficulty = Difficulty::kNarrow;
  std::vector<Trajectory> trajectories;
};

// Rolls the expert out from seeds derived from `seed`; stores successful
// episodes only, retrying with fresh seeds. Throws ValidationError for
// n_episodes < 1 and std::runtime_error when more than 5% of attempts fail.
Dataset GenerateDataset(const Env& env, const ExpertPolicy& expert,
                        int n_episodes, ConfigTag tag, uint64_t seed);

// One expert rollout (obs/act include the terminal observation paired with
// the expert's action there).
Trajectory ExpertRollout(const Env& env, const ExpertPolicy& expert,
                         uint64_t seed, ConfigTag tag);

// JSON-lines trajectories plus `<path>.manifest.json` describing the spaces.
void WriteDataset(const Dataset& data, const Env& env, const std::string& path);
// Reads and validates against the manifest.
Dataset ReadDataset(const std::string& path);
std::string ManifestPath(const std::string& dataset_path);

}  // namespace symflow

#endif  // SYMFLOW_ENVS_H_
