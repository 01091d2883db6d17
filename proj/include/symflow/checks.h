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

#ifndef SYMFLOW_CHECKS_H_
#define SYMFLOW_CHECKS_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace symflow {

// Outcome of one invariant suite. `worst` is the largest observed residual,
// compared against `tolerance`.
struct SuiteResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;
  double tolerance = 0.0;
  std::string detail;  // the violated invariant when failing
  double seconds = 0.0;
};

struct CheckOptions {
  uint64_t seed = 0;
  // Test hook: "obs-rep" corrupts one entry of the reach observation
  // representation before it is validated.
  std::string corrupt;
};

// Group axioms and representation invariants for C2, C4, C2 x C2 and every
// environment space.
SuiteResult CheckGroups(const CheckOptions& options);
// step(g s, g a) = g step(s, a) and expert(g s) = g expert(s) on 1000
// probes per environment, and open-loop replay of reflected demonstrations.
SuiteResult CheckEnvironments(const CheckOptions& options);
// Central differences against backward on every layer type and on both
// networks.
SuiteResult CheckGradients(const CheckOptions& options);
// Layer equivariance and the transformer's gap on Gaussian probes at input
// scales 1 and 100.
SuiteResult CheckLayerEquivariance(const CheckOptions& options);
// Sampling with reflected history and reflected noise returns the reflected
// chunk.
SuiteResult CheckSamplerCoupling(const CheckOptions& options);

std::vector<SuiteResult> RunChecks(const CheckOptions& options);

// Stable summary: no timings, so repeated runs compare equal.
nlohmann::json ChecksToJson(const std::vector<SuiteResult>& results);

}  // namespace symflow

#endif  // SYMFLOW_CHECKS_H_
