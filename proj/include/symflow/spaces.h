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

#ifndef SYMFLOW_SPACES_H_
#define SYMFLOW_SPACES_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symflow/group.h"
#include "symflow/types.h"

namespace symflow {

enum class FieldKind { kPlanarPoint, kCosSinAngle, kScalar };

const char* FieldKindName(FieldKind kind);
FieldKind ParseFieldKind(const std::string& name);

// A named slice of a space vector. `scale` is the divisor used to bring the
// field to unit range before it reaches a network.
struct Field {
  std::string name;
  int offset = 0;
  int size = 0;
  FieldKind kind = FieldKind::kScalar;
  double scale = 1.0;
};

// Layout of an observation or action space and the representation acting
// on it.
class SpaceSpec {
 public:
  // Throws ValidationError unless the fields partition [0, rep.dim()),
  // cos-sin fields have size 2, planar points size 2, and the scales are
  // constant on every channel orbit of the representation.
  SpaceSpec(std::vector<Field> fields, Representation rep);

  int dim() const { return rep_.dim(); }
  const std::vector<Field>& fields() const { return fields_; }
  const Representation& rep() const { return rep_; }
  const Field& field(const std::string& name) const;
  // Per-entry scale vector (length dim).
  const Vector& scales() const { return scales_; }

  // Checks a concrete vector: length and unit-norm cos-sin pairs (1e-9).
  std::optional<std::string> CheckVector(std::span<const double> x) const;

 private:
  std::vector<Field> fields_;
  Representation rep_;
  Vector scales_;
};

nlohmann::json SpaceSpecToJson(const SpaceSpec& spec);
SpaceSpec SpaceSpecFromJson(const nlohmann::json& j, GroupPtr group);

// History length H, chunk length A and executed prefix E.
struct WindowSpec {
  int history = 2;
  int chunk = 8;
  int exec = 2;

  // Throws ValidationError unless H >= 1, A >= 1, 1 <= E <= A.
  void Validate() const;
};

struct Trajectory {
  Matrix obs;  // T x dim_o
  Matrix act;  // T x dim_a
  bool success = false;
  std::string env;
  uint64_t seed = 0;
  std::string config_tag = "e";

  int length() const { return static_cast<int>(obs.rows()); }
};

// One training pair: the H observations up to the anchor and the A actions
// from the anchor on.
struct WindowPair {
  Matrix history;  // H x dim_o
  Matrix chunk;    // A x dim_a
};

// Pairs anchored at t = H-1 .. T-1. Chunks running past the end repeat the
// final action. Trajectories shorter than H give no pairs.
std::vector<WindowPair> Window(const Trajectory& traj, const WindowSpec& w);

WindowPair ReflectPair(const WindowPair& pair, const Representation& rep_o,
                       const Representation& rep_a, int g);

Trajectory ReflectTrajectory(const Trajectory& traj,
                             const Representation& rep_o,
                             const Representation& rep_a, int g);

}  // namespace symflow

#endif  // SYMFLOW_SPACES_H_
