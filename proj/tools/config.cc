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

#include "config.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "symflow/errors.h"

namespace symflow {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double ToDouble(const std::string& s) {
  size_t used = 0;
  double v;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ValidationError("expected a number, got '" + s + "'");
  return v;
}

long long ToInteger(const std::string& s) {
  size_t used = 0;
  long long v;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("expected an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ValidationError("expected an integer, got '" + s + "'");
  return v;
}

uint64_t ToUnsigned(const std::string& s) {
  if (s.empty() || s[0] == '-') {
    throw ValidationError("expected a nonnegative integer, got '" + s + "'");
  }
  size_t used = 0;
  uint64_t v;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("expected a nonnegative integer, got '" + s + "'");
  }
  if (used != s.size()) {
    throw ValidationError("expected a nonnegative integer, got '" + s + "'");
  }
  return v;
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ValidationError("empty list entry in '" + s + "'");
    out.push_back(item.substr(b, e - b + 1));
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

template <typename T, typename F>
std::string JoinList(const std::vector<T>& items, F format) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + format(items[i]);
  return out;
}

struct Binding {
  std::string section, key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

// Member-pointer style accessors for the common scalar types.
template <typename Access>
Binding Double(std::string section, std::string key, Access access) {
  return {section, key,
          [access](const ExperimentConfig& c) {
            return Num(access(const_cast<ExperimentConfig&>(c)));
          },
          [access](ExperimentConfig& c, const std::string& v) { access(c) = ToDouble(v); }};
}

template <typename Access>
Binding Int(std::string section, std::string key, Access access) {
  return {section, key,
          [access](const ExperimentConfig& c) {
            return std::to_string(access(const_cast<ExperimentConfig&>(c)));
          },
          [access](ExperimentConfig& c, const std::string& v) {
            const long long x = ToInteger(v);
            if (x < INT32_MIN || x > INT32_MAX) throw ValidationError("integer out of range");
            access(c) = static_cast<int>(x);
          }};
}

template <typename Access>
Binding Seed(std::string section, std::string key, Access access) {
  return {section, key,
          [access](const ExperimentConfig& c) {
            return std::to_string(access(const_cast<ExperimentConfig&>(c)));
          },
          [access](ExperimentConfig& c, const std::string& v) { access(c) = ToUnsigned(v); }};
}

template <typename Access>
Binding Text(std::string section, std::string key, Access access) {
  return {section, key,
          [access](const ExperimentConfig& c) {
            return access(const_cast<ExperimentConfig&>(c));
          },
          [access](ExperimentConfig& c, const std::string& v) { access(c) = v; }};
}

#define FIELD(expr) [](ExperimentConfig& c) -> auto& { return expr; }

void AddNetwork(std::vector<Binding>* b, const std::string& section,
                NetworkConfig& (*net)(ExperimentConfig&)) {
  b->push_back(Int(section, "width", [net](ExperimentConfig& c) -> auto& { return net(c).width; }));
  b->push_back(Int(section, "depth", [net](ExperimentConfig& c) -> auto& { return net(c).depth; }));
  b->push_back(Int(section, "heads", [net](ExperimentConfig& c) -> auto& { return net(c).heads; }));
  b->push_back(Int(section, "mlp_ratio",
                   [net](ExperimentConfig& c) -> auto& { return net(c).mlp_ratio; }));
  b->push_back(Int(section, "time_features",
                   [net](ExperimentConfig& c) -> auto& { return net(c).time_features; }));
}

const std::vector<Binding>& Bindings() {
  static const std::vector<Binding> bindings = [] {
    std::vector<Binding> b;
    b.push_back(Text("env", "id", FIELD(c.env.id)));
    b.push_back({"env", "difficulty",
                 [](const ExperimentConfig& c) { return std::string(DifficultyName(c.difficulty)); },
                 [](ExperimentConfig& c, const std::string& v) { c.difficulty = ParseDifficulty(v); }});

    b.push_back(Double("reach", "max_step", FIELD(c.env.reach.max_step)));
    b.push_back(Double("reach", "success_radius", FIELD(c.env.reach.success_radius)));
    b.push_back(Int("reach", "step_limit", FIELD(c.env.reach.step_limit)));
    b.push_back(Double("reach", "margin", FIELD(c.env.reach.margin)));
    b.push_back(Double("reach", "home_x", FIELD(c.env.reach.home_x)));
    b.push_back(Double("reach", "home_y", FIELD(c.env.reach.home_y)));
    b.push_back(Double("reach", "home_jitter", FIELD(c.env.reach.home_jitter)));
    b.push_back(Double("reach", "x_lo", FIELD(c.env.reach.x_lo)));
    b.push_back(Double("reach", "width_x", FIELD(c.env.reach.width_x)));
    b.push_back(Double("reach", "y_lo", FIELD(c.env.reach.y_lo)));
    b.push_back(Double("reach", "width_y", FIELD(c.env.reach.width_y)));

    b.push_back(Double("box", "max_step", FIELD(c.env.box.max_step)));
    b.push_back(Double("box", "pos_tolerance", FIELD(c.env.box.pos_tolerance)));
    b.push_back(Double("box", "angle_tolerance_deg", FIELD(c.env.box.angle_tolerance_deg)));
    b.push_back(Int("box", "step_limit", FIELD(c.env.box.step_limit)));
    b.push_back(Double("box", "margin", FIELD(c.env.box.margin)));
    b.push_back(Double("box", "half_width", FIELD(c.env.box.half_width)));
    b.push_back(Double("box", "half_height", FIELD(c.env.box.half_height)));
    b.push_back(Double("box", "grasp_distance", FIELD(c.env.box.grasp_distance)));
    b.push_back(Double("box", "home_x", FIELD(c.env.box.home_x)));
    b.push_back(Double("box", "home_y", FIELD(c.env.box.home_y)));
    b.push_back(Double("box", "home_jitter", FIELD(c.env.box.home_jitter)));
    b.push_back(Double("box", "box_x_lo", FIELD(c.env.box.box_x_lo)));
    b.push_back(Double("box", "box_width_x", FIELD(c.env.box.box_width_x)));
    b.push_back(Double("box", "box_y_lo", FIELD(c.env.box.box_y_lo)));
    b.push_back(Double("box", "box_width_y", FIELD(c.env.box.box_width_y)));
    b.push_back(Double("box", "box_angle_deg", FIELD(c.env.box.box_angle_deg)));
    b.push_back(Double("box", "target_x", FIELD(c.env.box.target_x)));
    b.push_back(Double("box", "target_y", FIELD(c.env.box.target_y)));
    b.push_back(Double("box", "target_angle_deg", FIELD(c.env.box.target_angle_deg)));

    b.push_back(Int("window", "history", FIELD(c.train.window.history)));
    b.push_back(Int("window", "chunk", FIELD(c.train.window.chunk)));
    b.push_back(Int("window", "exec", FIELD(c.train.window.exec)));

    b.push_back({"network", "variant",
                 [](const ExperimentConfig& c) {
                   return std::string(NetworkVariantName(c.train.network.variant));
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.train.network.variant = ParseNetworkVariant(v);
                 }});
    AddNetwork(&b, "network", [](ExperimentConfig& c) -> NetworkConfig& { return c.train.network; });
    AddNetwork(&b, "equivariant_network",
               [](ExperimentConfig& c) -> NetworkConfig& { return c.train.equivariant; });

    b.push_back({"train", "strategy",
                 [](const ExperimentConfig& c) { return std::string(StrategyName(c.train.strategy)); },
                 [](ExperimentConfig& c, const std::string& v) { c.train.strategy = ParseStrategy(v); }});
    b.push_back(Double("train", "lambda", FIELD(c.train.lambda)));
    b.push_back(Int("train", "batch_size", FIELD(c.train.batch_size)));
    b.push_back(Int("train", "steps", FIELD(c.train.steps)));
    b.push_back(Int("train", "equiv_net_steps", FIELD(c.train.equiv_net_steps)));
    b.push_back(Double("train", "lr", FIELD(c.train.adam.lr)));
    b.push_back(Double("train", "beta1", FIELD(c.train.adam.beta1)));
    b.push_back(Double("train", "beta2", FIELD(c.train.adam.beta2)));
    b.push_back(Double("train", "eps", FIELD(c.train.adam.eps)));
    b.push_back({"train", "cosine",
                 [](const ExperimentConfig& c) {
                   return std::string(c.train.adam.cosine ? "true" : "false");
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v != "true" && v != "false") {
                     throw ValidationError("expected true or false, got '" + v + "'");
                   }
                   c.train.adam.cosine = v == "true";
                 }});
    b.push_back(Seed("train", "seed", FIELD(c.train.seed)));
    b.push_back(Int("train", "probe_every", FIELD(c.train.probe_every)));
    b.push_back(Int("train", "probe_size", FIELD(c.train.probe_size)));

    b.push_back(Int("data", "n", FIELD(c.data.n)));
    b.push_back({"data", "tag",
                 [](const ExperimentConfig& c) { return std::string(ConfigTagName(c.data.tag)); },
                 [](ExperimentConfig& c, const std::string& v) { c.data.tag = ParseConfigTag(v); }});
    b.push_back(Seed("data", "seed", FIELD(c.data.seed)));

    b.push_back(Int("eval", "episodes", FIELD(c.eval.episodes)));
    b.push_back({"eval", "seeds",
                 [](const ExperimentConfig& c) {
                   return JoinList(c.eval.seeds, [](uint64_t s) { return std::to_string(s); });
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.eval.seeds.clear();
                   for (const auto& s : SplitList(v)) c.eval.seeds.push_back(ToUnsigned(s));
                 }});
    b.push_back(Int("eval", "ode_steps", FIELD(c.eval.ode_steps)));
    b.push_back(Int("eval", "jobs", FIELD(c.eval.jobs)));
    b.push_back(Int("eval", "n_train", FIELD(c.eval.n_train)));
    b.push_back({"eval", "dataset_sizes",
                 [](const ExperimentConfig& c) {
                   return JoinList(c.eval.dataset_sizes, [](int n) { return std::to_string(n); });
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.eval.dataset_sizes.clear();
                   for (const auto& s : SplitList(v)) {
                     c.eval.dataset_sizes.push_back(static_cast<int>(ToInteger(s)));
                   }
                 }});
    b.push_back(Int("eval", "difficulty_n", FIELD(c.eval.difficulty_n)));
    b.push_back(Int("eval", "held_out_demos", FIELD(c.eval.held_out_demos)));
    b.push_back(Int("eval", "gap_probes", FIELD(c.eval.gap_probes)));
    b.push_back(Seed("eval", "eval_seed_base", FIELD(c.eval.eval_seed_base)));
    b.push_back({"eval", "methods",
                 [](const ExperimentConfig& c) {
                   return JoinList(c.eval.methods,
                                   [](Strategy s) { return std::string(StrategyName(s)); });
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.eval.methods.clear();
                   for (const auto& s : SplitList(v)) c.eval.methods.push_back(ParseStrategy(s));
                 }});
    b.push_back({"eval", "lambdas",
                 [](const ExperimentConfig& c) { return JoinList(c.eval.lambdas, Num); },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.eval.lambdas.clear();
                   for (const auto& s : SplitList(v)) c.eval.lambdas.push_back(ToDouble(s));
                 }});

    b.push_back(Text("paths", "out", FIELD(c.paths.out)));
    b.push_back(Text("paths", "dataset", FIELD(c.paths.dataset)));
    b.push_back(Text("paths", "checkpoint", FIELD(c.paths.checkpoint)));
    b.push_back(Text("paths", "reports", FIELD(c.paths.reports)));
    return b;
  }();
  return bindings;
}

#undef FIELD

const Binding& Find(const std::string& section, const std::string& key) {
  for (const Binding& b : Bindings()) {
    if (b.section == section && b.key == key) return b;
  }
  throw ValidationError("unknown config key [" + section + "] " + key);
}

void Assign(ExperimentConfig* config, const std::string& section,
            const std::string& key, const std::string& value) {
  const Binding& b = Find(section, key);
  try {
    b.set(*config, value);
  } catch (const ValidationError& e) {
    throw ValidationError("[" + section + "] " + key + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::Validate() const {
  MakeEnv(env, difficulty);
  train.Validate();
  if (data.n < 1) throw ValidationError("[data] n must be >= 1");
  if (eval.episodes < 1 || eval.ode_steps < 1 || eval.jobs < 1 || eval.n_train < 1 ||
      eval.difficulty_n < 1 || eval.held_out_demos < 1 || eval.gap_probes < 1) {
    throw ValidationError("[eval] counts must be >= 1");
  }
  if (eval.seeds.empty() || eval.methods.empty() || eval.dataset_sizes.empty() ||
      eval.lambdas.empty()) {
    throw ValidationError("[eval] lists must not be empty");
  }
  for (int n : eval.dataset_sizes) {
    if (n < 1) throw ValidationError("[eval] dataset_sizes must be >= 1");
  }
  for (double l : eval.lambdas) {
    if (!(l >= 0.0)) throw ValidationError("[eval] lambdas must be >= 0");
  }
}

ProtocolConfig ExperimentConfig::Protocol() const {
  ProtocolConfig p;
  p.env = env;
  p.difficulty = difficulty;
  p.train = train;
  p.methods = eval.methods;
  p.seeds = eval.seeds;
  p.n_train = eval.n_train;
  p.n_eval = eval.episodes;
  p.dataset_sizes = eval.dataset_sizes;
  p.difficulty_n = eval.difficulty_n;
  p.ode_steps = eval.ode_steps;
  p.jobs = eval.jobs;
  p.eval_seed_base = eval.eval_seed_base;
  p.gap_probes = eval.gap_probes;
  p.held_out_demos = eval.held_out_demos;
  return p;
}

ExperimentConfig ParseConfig(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  ExperimentConfig config;
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) {
      throw ValidationError("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : keys) {
      Assign(&config, section, key, value.data());
    }
  }
  config.Validate();
  return config;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  std::stringstream text;
  text << in.rdbuf();
  return ParseConfig(text.str());
}

std::string SerializeConfig(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const Binding& b : Bindings()) {
    if (b.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << b.section << "]\n";
      section = b.section;
    }
    out << b.key << " = " << b.get(config) << '\n';
  }
  return out.str();
}

void SetConfigValue(ExperimentConfig* config, const std::string& assignment) {
  const auto dot = assignment.find('.');
  const auto eq = assignment.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
    throw ValidationError("expected section.key=value, got '" + assignment + "'");
  }
  Assign(config, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1),
         assignment.substr(eq + 1));
}

std::string DefaultOutDir() {
  const char* dir = std::getenv("SYMFLOW_OUT_DIR");
  return dir != nullptr && *dir != '\0' ? dir : "symflow_out";
}

PathSettings ResolvePaths(const PathSettings& paths) {
  PathSettings p = paths;
  if (p.out.empty()) p.out = DefaultOutDir();
  if (p.dataset.empty()) p.dataset = p.out + "/dataset.jsonl";
  if (p.checkpoint.empty()) p.checkpoint = p.out + "/policy.json";
  if (p.reports.empty()) p.reports = p.out + "/reports";
  return p;
}

}  // namespace symflow
