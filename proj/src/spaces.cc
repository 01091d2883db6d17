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

#include <algorithm>
#include <cmath>
#include <utility>

#include "symflow/errors.h"

namespace symflow {

const char* FieldKindName(FieldKind kind) {
  switch (kind) {
    case FieldKind::kPlanarPoint:
      return "planar-point";
    case FieldKind::kCosSinAngle:
      return "cos-sin-angle";
    case FieldKind::kScalar:
      return "scalar";
  }
  return "scalar";
}

FieldKind ParseFieldKind(const std::string& name) {
  if (name == "planar-point") return FieldKind::kPlanarPoint;
  if (name == "cos-sin-angle") return FieldKind::kCosSinAngle;
  if (name == "scalar") return FieldKind::kScalar;
  throw ValidationError("unknown field kind '" + name + "'");
}

SpaceSpec::SpaceSpec(std::vector<Field> fields, Representation rep)
    : fields_(std::move(fields)), rep_(std::move(rep)) {
  std::vector<int> cover(rep_.dim(), 0);
  scales_ = Vector::Ones(rep_.dim());
  for (const Field& f : fields_) {
    if (f.size < 1 || f.offset < 0 || f.offset + f.size > rep_.dim()) {
      throw ValidationError("field '" + f.name + "' out of range");
    }
    if ((f.kind == FieldKind::kCosSinAngle ||
         f.kind == FieldKind::kPlanarPoint) &&
        f.size != 2) {
      throw ValidationError("field '" + f.name + "' of kind " +
                            FieldKindName(f.kind) + " must have size 2");
    }
    if (!(f.scale > 0.0) || !std::isfinite(f.scale)) {
      throw ValidationError("field '" + f.name + "' has a bad scale");
    }
    for (int i = f.offset; i < f.offset + f.size; ++i) {
      ++cover[i];
      scales_[i] = f.scale;
    }
  }
  for (int i = 0; i < rep_.dim(); ++i) {
    if (cover[i] != 1) {
      throw ValidationError("fields do not partition the space at entry " +
                            std::to_string(i));
    }
  }
  for (const auto& orbit : rep_.ChannelOrbits()) {
    for (int i : orbit) {
      if (scales_[i] != scales_[orbit.front()]) {
        throw ValidationError(
            "field scales must be constant on representation orbits");
      }
    }
  }
}

const Field& SpaceSpec::field(const std::string& name) const {
  for (const Field& f : fields_) {
    if (f.name == name) return f;
  }
  throw ValidationError("no field named '" + name + "'");
}

std::optional<std::string> SpaceSpec::CheckVector(
    std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim()) {
    return "vector has length " + std::to_string(x.size()) + ", expected " +
           std::to_string(dim());
  }
  for (const Field& f : fields_) {
    if (f.kind != FieldKind::kCosSinAngle) continue;
    const double c = x[f.offset], s = x[f.offset + 1];
    if (std::abs(c * c + s * s - 1.0) > 1e-9) {
      return "field '" + f.name + "' is not a unit cos-sin pair";
    }
  }
  return std::nullopt;
}

nlohmann::json SpaceSpecToJson(const SpaceSpec& spec) {
  nlohmann::json fields = nlohmann::json::array();
  for (const Field& f : spec.fields()) {
    fields.push_back({{"name", f.name},
                      {"offset", f.offset},
                      {"size", f.size},
                      {"kind", FieldKindName(f.kind)},
                      {"scale", f.scale}});
  }
  return {{"dim", spec.dim()},
          {"fields", fields},
          {"rep", RepresentationToJson(spec.rep())}};
}

SpaceSpec SpaceSpecFromJson(const nlohmann::json& j, GroupPtr group) {
  try {
    std::vector<Field> fields;
    for (const auto& jf : j.at("fields")) {
      Field f;
      f.name = jf.at("name").get<std::string>();
      f.offset = jf.at("offset").get<int>();
      f.size = jf.at("size").get<int>();
      f.kind = ParseFieldKind(jf.at("kind").get<std::string>());
      f.scale = jf.value("scale", 1.0);
      fields.push_back(std::move(f));
    }
    Representation rep = RepresentationFromJson(j.at("rep"), std::move(group));
    if (rep.dim() != j.at("dim").get<int>()) {
      throw ValidationError("space dim does not match representation");
    }
    return SpaceSpec(std::move(fields), std::move(rep));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed space spec: ") + e.what());
  }
}

void WindowSpec::Validate() const {
  if (history < 1) throw ValidationError("history length must be >= 1");
  if (chunk < 1) throw ValidationError("chunk length must be >= 1");
  if (exec < 1 || exec > chunk) {
    throw ValidationError("exec length must satisfy 1 <= E <= chunk length");
  }
}

std::vector<WindowPair> Window(const Trajectory& traj, const WindowSpec& w) {
  w.Validate();
  if (traj.obs.rows() != traj.act.rows()) {
    throw ValidationError("trajectory has mismatched obs/act lengths");
  }
  const int T = traj.length();
  std::vector<WindowPair> pairs;
  if (T < w.history) return pairs;
  pairs.reserve(T - w.history + 1);
  for (int t = w.history - 1; t < T; ++t) {
    WindowPair p;
    p.history = traj.obs.middleRows(t - w.history + 1, w.history);
    p.chunk.resize(w.chunk, traj.act.cols());
    for (int j = 0; j < w.chunk; ++j) {
      p.chunk.row(j) = traj.act.row(std::min(t + j, T - 1));
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

WindowPair ReflectPair(const WindowPair& pair, const Representation& rep_o,
                       const Representation& rep_a, int g) {
  return {ActHistory(rep_o, g, pair.history), ActChunk(rep_a, g, pair.chunk)};
}

Trajectory ReflectTrajectory(const Trajectory& traj,
                             const Representation& rep_o,
                             const Representation& rep_a, int g) {
  Trajectory out = traj;
  out.obs = rep_o.ActRows(g, traj.obs);
  out.act = rep_a.ActRows(g, traj.act);
  if (g != kIdentity) {
    out.config_tag = traj.config_tag == "e" ? "g_r" : "e";
  }
  return out;
}

}  // namespace symflow
