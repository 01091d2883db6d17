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

#ifndef SYMFLOW_GROUP_H_
#define SYMFLOW_GROUP_H_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symflow/types.h"

namespace symflow {

// Element indices of the built-in reflection group C2 = {e, g_r}.
inline constexpr int kIdentity = 0;
inline constexpr int kReflection = 1;

struct GroupVerdict {
  bool ok = true;
  std::string violation;
};

// Checks closure, identity (element 0), inverses and associativity, in that
// order. Associativity is checked exhaustively.
GroupVerdict ValidateGroup(const std::vector<std::vector<int>>& mul_table);

// A finite group given by its multiplication table. Element 0 is the
// identity. Immutable after construction.
class FiniteGroup {
 public:
  // Throws ValidationError when the table is not a group.
  explicit FiniteGroup(std::vector<std::vector<int>> mul_table,
                       std::vector<std::string> names = {});

  static std::shared_ptr<const FiniteGroup> Cyclic(int order);
  // C2 with elements named "e" and "g_r".
  static std::shared_ptr<const FiniteGroup> Reflection();
  // C2 x C2.
  static std::shared_ptr<const FiniteGroup> Klein();

  int order() const { return static_cast<int>(table_.size()); }
  int Multiply(int a, int b) const { return table_[a][b]; }
  int Inverse(int a) const { return inverse_[a]; }
  const std::string& name(int g) const { return names_[g]; }
  // Looks up an element by name; returns -1 when absent.
  int Find(const std::string& name) const;
  const std::vector<std::vector<int>>& mul_table() const { return table_; }

  bool operator==(const FiniteGroup& other) const {
    return table_ == other.table_;
  }

 private:
  std::vector<std::vector<int>> table_;
  std::vector<int> inverse_;
  std::vector<std::string> names_;
};

using GroupPtr = std::shared_ptr<const FiniteGroup>;

// Compiled form of a signed permutation matrix: y[i] = sign[i] * x[source[i]].
struct SignedPermutation {
  std::vector<int> source;
  std::vector<double> sign;

  int dim() const { return static_cast<int>(source.size()); }
  Matrix ToMatrix() const;
  void Apply(std::span<const double> x, std::span<double> y) const;
};

// Returns the first violated representation invariant, if any: matrix shapes,
// signed-permutation structure, identity, homomorphism (1e-12), orthogonality
// (1e-12).
std::optional<std::string> ValidateRepresentation(
    const FiniteGroup& group, const std::vector<Matrix>& matrices);

// A representation of a finite group by signed permutation matrices.
class Representation {
 public:
  // Throws ValidationError naming the violated invariant.
  Representation(GroupPtr group, std::vector<Matrix> matrices);
  Representation(GroupPtr group, std::vector<SignedPermutation> perms);

  static Representation Trivial(GroupPtr group, int dim);
  // The 1-dim representation g_r -> -1 of an order-2 group.
  static Representation Sign(GroupPtr group);
  // rho(g) e_h = e_{gh}.
  static Representation Regular(GroupPtr group);

  int dim() const { return dim_; }
  const FiniteGroup& group() const { return *group_; }
  const GroupPtr& group_ptr() const { return group_; }
  const Matrix& matrix(int g) const { return matrices_[g]; }
  const SignedPermutation& signed_permutation(int g) const {
    return perms_[g];
  }

  Vector Act(int g, const Vector& x) const;
  // Applies rho(g) to every row of `rows` (rows x dim). The row index is
  // untouched.
  Matrix ActRows(int g, const Matrix& rows) const;
  // Same as ActRows on a flat buffer holding consecutive dim-sized blocks.
  void ActBlocks(int g, std::span<const double> in, std::span<double> out) const;

  // Channels grouped by the orbits of the underlying permutations.
  std::vector<std::vector<int>> ChannelOrbits() const;
  // Group average (1/|G|) sum_g rho(g) v; lands in the invariant subspace.
  Vector ProjectInvariant(const Vector& v) const;

 private:
  void Compile();

  GroupPtr group_;
  int dim_ = 0;
  std::vector<Matrix> matrices_;
  std::vector<SignedPermutation> perms_;
};

// Block-diagonal sum. Throws ValidationError on group mismatch.
Representation DirectSum(const Representation& a, const Representation& b);
// a (+) a (+) ... (copies times).
Representation Repeat(const Representation& a, int copies);

// g acting on an observation history (H x dim_o), one row per time step.
Matrix ActHistory(const Representation& rep_o, int g, const Matrix& history);
// g acting on an action chunk (A x dim_a).
Matrix ActChunk(const Representation& rep_a, int g, const Matrix& chunk);
// g acting on a batch of flattened histories or chunks: each row holds
// consecutive dim-sized blocks.
Matrix ActFlatRows(const Representation& rep, int g, const Matrix& rows);

// Serialization: {"order", "mul_table", "names"} for groups; for
// representations {"dim", "elements": [[[col, sign], ...per row], ...]}.
nlohmann::json GroupToJson(const FiniteGroup& group);
GroupPtr GroupFromJson(const nlohmann::json& j);
nlohmann::json RepresentationToJson(const Representation& rep);
Representation RepresentationFromJson(const nlohmann::json& j, GroupPtr group);

}  // namespace symflow

#endif  // SYMFLOW_GROUP_H_
