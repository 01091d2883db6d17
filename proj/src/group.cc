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

#include "symflow/group.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "symflow/errors.h"

namespace symflow {
namespace {

constexpr double kRepTolerance = 1e-12;

std::string Describe(const char* axiom, int a, int b = -1, int c = -1) {
  std::ostringstream os;
  os << axiom << " (";
  os << a;
  if (b >= 0) os << ", " << b;
  if (c >= 0) os << ", " << c;
  os << ")";
  return os.str();
}

// Recovers the signed permutation behind a matrix, or explains why not.
std::optional<std::string> ExtractSignedPermutation(const Matrix& m,
                                                    SignedPermutation* out) {
  const int n = static_cast<int>(m.rows());
  out->source.assign(n, -1);
  out->sign.assign(n, 0.0);
  std::vector<int> used(n, 0);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const double v = m(r, c);
      if (std::abs(v) <= kRepTolerance) continue;
      if (std::abs(std::abs(v) - 1.0) > kRepTolerance) {
        return "not a signed permutation: entry (" + std::to_string(r) + ", " +
               std::to_string(c) + ") is neither 0 nor +-1";
      }
      if (out->source[r] >= 0) {
        return "not a signed permutation: row " + std::to_string(r) +
               " has more than one nonzero";
      }
      out->source[r] = c;
      out->sign[r] = v > 0 ? 1.0 : -1.0;
      ++used[c];
    }
    if (out->source[r] < 0) {
      return "not a signed permutation: row " + std::to_string(r) +
             " is zero";
    }
  }
  for (int c = 0; c < n; ++c) {
    if (used[c] != 1) {
      return "not a signed permutation: column " + std::to_string(c) +
             " has " + std::to_string(used[c]) + " nonzeros";
    }
  }
  return std::nullopt;
}

}  // namespace

GroupVerdict ValidateGroup(const std::vector<std::vector<int>>& table) {
  const int n = static_cast<int>(table.size());
  if (n == 0) return {false, "empty table"};
  for (int a = 0; a < n; ++a) {
    if (static_cast<int>(table[a].size()) != n) {
      return {false, Describe("table is not square at row", a)};
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (table[a][b] < 0 || table[a][b] >= n) {
        return {false, Describe("closure violated at", a, b)};
      }
    }
  }
  for (int a = 0; a < n; ++a) {
    if (table[0][a] != a) {
      return {false, Describe("element 0 is not a left identity for", a)};
    }
    if (table[a][0] != a) {
      return {false, Describe("element 0 is not a right identity for", a)};
    }
  }
  for (int a = 0; a < n; ++a) {
    bool found = false;
    for (int b = 0; b < n && !found; ++b) {
      found = table[a][b] == 0 && table[b][a] == 0;
    }
    if (!found) {
      return {false, "no identity column for element " + std::to_string(a)};
    }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        if (table[table[a][b]][c] != table[a][table[b][c]]) {
          return {false, Describe("associativity violated at", a, b, c)};
        }
      }
    }
  }
  return {};
}

FiniteGroup::FiniteGroup(std::vector<std::vector<int>> mul_table,
                         std::vector<std::string> names)
    : table_(std::move(mul_table)), names_(std::move(names)) {
  const GroupVerdict verdict = ValidateGroup(table_);
  if (!verdict.ok) throw ValidationError("invalid group: " + verdict.violation);
  const int n = order();
  inverse_.assign(n, 0);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (table_[a][b] == 0) inverse_[a] = b;
    }
  }
  if (names_.empty()) {
    for (int a = 0; a < n; ++a) names_.push_back("g" + std::to_string(a));
  }
  if (static_cast<int>(names_.size()) != n) {
    throw ValidationError("group names do not match order");
  }
}

GroupPtr FiniteGroup::Cyclic(int order) {
  if (order < 1) throw ValidationError("cyclic group order must be >= 1");
  std::vector<std::vector<int>> table(order, std::vector<int>(order));
  for (int a = 0; a < order; ++a) {
    for (int b = 0; b < order; ++b) table[a][b] = (a + b) % order;
  }
  return std::make_shared<const FiniteGroup>(std::move(table));
}

GroupPtr FiniteGroup::Reflection() {
  return std::make_shared<const FiniteGroup>(
      std::vector<std::vector<int>>{{0, 1}, {1, 0}},
      std::vector<std::string>{"e", "g_r"});
}

GroupPtr FiniteGroup::Klein() {
  std::vector<std::vector<int>> table(4, std::vector<int>(4));
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) table[a][b] = a ^ b;
  }
  return std::make_shared<const FiniteGroup>(std::move(table));
}

int FiniteGroup::Find(const std::string& name) const {
  for (int a = 0; a < order(); ++a) {
    if (names_[a] == name) return a;
  }
  return -1;
}

Matrix SignedPermutation::ToMatrix() const {
  const int n = dim();
  Matrix m = Matrix::Zero(n, n);
  for (int r = 0; r < n; ++r) m(r, source[r]) = sign[r];
  return m;
}

void SignedPermutation::Apply(std::span<const double> x,
                              std::span<double> y) const {
  const int n = dim();
  for (int i = 0; i < n; ++i) y[i] = sign[i] * x[source[i]];
}

std::optional<std::string> ValidateRepresentation(
    const FiniteGroup& group, const std::vector<Matrix>& matrices) {
  const int order = group.order();
  if (static_cast<int>(matrices.size()) != order) {
    return "expected " + std::to_string(order) + " matrices, got " +
           std::to_string(matrices.size());
  }
  const Eigen::Index dim = matrices[0].rows();
  if (dim < 1) return "representation dimension must be positive";
  for (int g = 0; g < order; ++g) {
    if (matrices[g].rows() != dim || matrices[g].cols() != dim) {
      return "matrix of element " + std::to_string(g) + " is not " +
             std::to_string(dim) + "x" + std::to_string(dim);
    }
    if (!matrices[g].allFinite()) {
      return "matrix of element " + std::to_string(g) + " is not finite";
    }
  }
  for (int g = 0; g < order; ++g) {
    SignedPermutation perm;
    if (auto why = ExtractSignedPermutation(matrices[g], &perm)) {
      return "element " + std::to_string(g) + ": " + *why;
    }
  }
  const Matrix eye = Matrix::Identity(dim, dim);
  if ((matrices[0] - eye).cwiseAbs().maxCoeff() > kRepTolerance) {
    return "identity element does not map to the identity matrix";
  }
  for (int g = 0; g < order; ++g) {
    const Matrix gram = matrices[g].transpose() * matrices[g];
    if ((gram - eye).cwiseAbs().maxCoeff() > kRepTolerance) {
      return "orthogonality violated for element " + std::to_string(g);
    }
  }
  for (int g = 0; g < order; ++g) {
    for (int h = 0; h < order; ++h) {
      const Matrix lhs = matrices[group.Multiply(g, h)];
      const Matrix rhs = matrices[g] * matrices[h];
      if ((lhs - rhs).cwiseAbs().maxCoeff() > kRepTolerance) {
        return "homomorphism violated at (" + std::to_string(g) + ", " +
               std::to_string(h) + ")";
      }
    }
  }
  return std::nullopt;
}

Representation::Representation(GroupPtr group, std::vector<Matrix> matrices)
    : group_(std::move(group)), matrices_(std::move(matrices)) {
  if (!group_) throw ValidationError("representation without a group");
  if (auto why = ValidateRepresentation(*group_, matrices_)) {
    throw ValidationError("invalid representation: " + *why);
  }
  Compile();
}

Representation::Representation(GroupPtr group,
                               std::vector<SignedPermutation> perms)
    : group_(std::move(group)) {
  if (!group_) throw ValidationError("representation without a group");
  for (const SignedPermutation& p : perms) {
    for (int r = 0; r < p.dim(); ++r) {
      if (p.source[r] < 0 || p.source[r] >= p.dim()) {
        throw ValidationError("invalid representation: column index out of "
                              "range in row " + std::to_string(r));
      }
    }
    matrices_.push_back(p.ToMatrix());
  }
  if (matrices_.empty()) throw ValidationError("no matrices given");
  if (auto why = ValidateRepresentation(*group_, matrices_)) {
    throw ValidationError("invalid representation: " + *why);
  }
  Compile();
}

void Representation::Compile() {
  dim_ = static_cast<int>(matrices_[0].rows());
  perms_.resize(matrices_.size());
  for (size_t g = 0; g < matrices_.size(); ++g) {
    ExtractSignedPermutation(matrices_[g], &perms_[g]);
    matrices_[g] = perms_[g].ToMatrix();
  }
}

Representation Representation::Trivial(GroupPtr group, int dim) {
  if (dim < 1) throw ValidationError("representation dimension must be >= 1");
  std::vector<Matrix> mats(group->order(), Matrix::Identity(dim, dim));
  return Representation(std::move(group), std::move(mats));
}

Representation Representation::Sign(GroupPtr group) {
  if (group->order() != 2) {
    throw ValidationError("sign representation needs a group of order 2");
  }
  std::vector<Matrix> mats{Matrix::Constant(1, 1, 1.0),
                           Matrix::Constant(1, 1, -1.0)};
  return Representation(std::move(group), std::move(mats));
}

Representation Representation::Regular(GroupPtr group) {
  const int n = group->order();
  std::vector<Matrix> mats;
  for (int g = 0; g < n; ++g) {
    Matrix m = Matrix::Zero(n, n);
    for (int h = 0; h < n; ++h) m(group->Multiply(g, h), h) = 1.0;
    mats.push_back(std::move(m));
  }
  return Representation(std::move(group), std::move(mats));
}

Vector Representation::Act(int g, const Vector& x) const {
  if (x.size() != dim_) {
    throw ValidationError("act: vector of length " + std::to_string(x.size()) +
                          " for representation of dim " +
                          std::to_string(dim_));
  }
  Vector y(dim_);
  perms_[g].Apply({x.data(), static_cast<size_t>(dim_)},
                  {y.data(), static_cast<size_t>(dim_)});
  return y;
}

Matrix Representation::ActRows(int g, const Matrix& rows) const {
  if (rows.cols() != dim_) {
    throw ValidationError("act: rows of width " + std::to_string(rows.cols()) +
                          " for representation of dim " +
                          std::to_string(dim_));
  }
  Matrix out(rows.rows(), rows.cols());
  ActBlocks(g, {rows.data(), static_cast<size_t>(rows.size())},
            {out.data(), static_cast<size_t>(out.size())});
  return out;
}

void Representation::ActBlocks(int g, std::span<const double> in,
                               std::span<double> out) const {
  if (in.size() % dim_ != 0 || out.size() != in.size()) {
    throw ValidationError("act: buffer length not a multiple of dim");
  }
  const SignedPermutation& p = perms_[g];
  for (size_t off = 0; off < in.size(); off += dim_) {
    p.Apply(in.subspan(off, dim_), out.subspan(off, dim_));
  }
}

std::vector<std::vector<int>> Representation::ChannelOrbits() const {
  std::vector<int> label(dim_, -1);
  std::vector<std::vector<int>> orbits;
  for (int c = 0; c < dim_; ++c) {
    if (label[c] >= 0) continue;
    const int id = static_cast<int>(orbits.size());
    orbits.emplace_back();
    std::vector<int> stack{c};
    label[c] = id;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      orbits[id].push_back(i);
      for (const SignedPermutation& p : perms_) {
        const int j = p.source[i];
        if (label[j] < 0) {
          label[j] = id;
          stack.push_back(j);
        }
      }
    }
    std::sort(orbits[id].begin(), orbits[id].end());
  }
  return orbits;
}

Vector Representation::ProjectInvariant(const Vector& v) const {
  Vector acc = Vector::Zero(dim_);
  for (int g = 0; g < group_->order(); ++g) acc += Act(g, v);
  return acc / static_cast<double>(group_->order());
}

Representation DirectSum(const Representation& a, const Representation& b) {
  if (!(a.group() == b.group())) {
    throw ValidationError("direct sum of representations of different groups");
  }
  std::vector<Matrix> mats;
  const int n = a.dim() + b.dim();
  for (int g = 0; g < a.group().order(); ++g) {
    Matrix m = Matrix::Zero(n, n);
    m.topLeftCorner(a.dim(), a.dim()) = a.matrix(g);
    m.bottomRightCorner(b.dim(), b.dim()) = b.matrix(g);
    mats.push_back(std::move(m));
  }
  return Representation(a.group_ptr(), std::move(mats));
}

Representation Repeat(const Representation& a, int copies) {
  if (copies < 1) throw ValidationError("repeat needs at least one copy");
  Representation out = a;
  for (int i = 1; i < copies; ++i) out = DirectSum(out, a);
  return out;
}

Matrix ActHistory(const Representation& rep_o, int g, const Matrix& history) {
  return rep_o.ActRows(g, history);
}

Matrix ActChunk(const Representation& rep_a, int g, const Matrix& chunk) {
  return rep_a.ActRows(g, chunk);
}

Matrix ActFlatRows(const Representation& rep, int g, const Matrix& rows) {
  if (rows.cols() % rep.dim() != 0) {
    throw ValidationError("act: row width " + std::to_string(rows.cols()) +
                          " is not a multiple of " + std::to_string(rep.dim()));
  }
  Matrix out(rows.rows(), rows.cols());
  rep.ActBlocks(g, {rows.data(), static_cast<size_t>(rows.size())},
                {out.data(), static_cast<size_t>(out.size())});
  return out;
}

nlohmann::json GroupToJson(const FiniteGroup& group) {
  nlohmann::json names = nlohmann::json::array();
  for (int g = 0; g < group.order(); ++g) names.push_back(group.name(g));
  return {{"order", group.order()},
          {"mul_table", group.mul_table()},
          {"names", names}};
}

GroupPtr GroupFromJson(const nlohmann::json& j) {
  try {
    auto table = j.at("mul_table").get<std::vector<std::vector<int>>>();
    std::vector<std::string> names;
    if (j.contains("names")) names = j["names"].get<std::vector<std::string>>();
    if (j.at("order").get<int>() != static_cast<int>(table.size())) {
      throw ValidationError("group order does not match table size");
    }
    return std::make_shared<const FiniteGroup>(std::move(table),
                                               std::move(names));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed group: ") + e.what());
  }
}

nlohmann::json RepresentationToJson(const Representation& rep) {
  nlohmann::json elements = nlohmann::json::array();
  for (int g = 0; g < rep.group().order(); ++g) {
    const SignedPermutation& p = rep.signed_permutation(g);
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < p.dim(); ++r) {
      rows.push_back({p.source[r], static_cast<int>(p.sign[r])});
    }
    elements.push_back(std::move(rows));
  }
  return {{"dim", rep.dim()}, {"elements", elements}};
}

Representation RepresentationFromJson(const nlohmann::json& j, GroupPtr group) {
  try {
    const int dim = j.at("dim").get<int>();
    std::vector<SignedPermutation> perms;
    for (const auto& rows : j.at("elements")) {
      SignedPermutation p;
      if (static_cast<int>(rows.size()) != dim) {
        throw ValidationError("representation element has wrong row count");
      }
      for (const auto& pair : rows) {
        p.source.push_back(pair.at(0).get<int>());
        const int s = pair.at(1).get<int>();
        if (s != 1 && s != -1) throw ValidationError("sign must be +-1");
        p.sign.push_back(s);
      }
      perms.push_back(std::move(p));
    }
    return Representation(std::move(group), std::move(perms));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed representation: ") +
                          e.what());
  }
}

}  // namespace symflow
