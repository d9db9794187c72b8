// Copyright (C) 2026 The cmad authors
// SPDX-License-Identifier: Apache-2.0

#include "cmad/harness/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <cmath>
#include <sstream>
#include <type_traits>

#include "cmad/errors.hpp"

namespace cmad::harness {

std::string to_string(Task t) { return t == Task::Gmm2d ? "gmm2d" : "shapes16"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::CmadJoint: return "cmad-joint";
    case Method::CmadControlWise: return "cmad-controlwise";
    case Method::Cdps: return "cdps";
    case Method::PoeNaive: return "poe-naive";
    case Method::Uncontrolled: return "uncontrolled";
  }
  return "?";
}

std::string to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::Classifier: return "classifier";
    case TerminalKind::Gaussian: return "gaussian";
    case TerminalKind::Quadratic: return "quadratic";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::CmadJoint, Method::CmadControlWise, Method::Cdps, Method::PoeNaive, Method::Uncontrolled}) {
    if (s == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + s +
                    "' (expected cmad-joint, cmad-controlwise, cdps, poe-naive or uncontrolled)");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(x)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return x;
}

long long to_ll(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_ll(key, v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": integer out of range");
  }
  return static_cast<int>(x);
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CMAD_INT(name, member)                                                    \
  Field {                                                                         \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_int(name, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }       \
  }
#define CMAD_DBL(name, member)                                                       \
  Field {                                                                            \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_double(name, v); }, \
        [](const ExperimentConfig& c) { return fmt(c.member); }                      \
  }
#define CMAD_STR(name, member)                                              \
  Field {                                                                   \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = v; }, \
        [](const ExperimentConfig& c) { return c.member; }                 \
  }
#define CMAD_INTS(name, member)                                                        \
  Field {                                                                              \
    name, [](ExperimentConfig& c, const std::string& v) { c.member = to_int_list(name, v); }, \
        [](const ExperimentConfig& c) { return join(c.member); }                       \
  }

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      Field{"task",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "gmm2d") {
                c.task = Task::Gmm2d;
              } else if (v == "shapes16") {
                c.task = Task::Shapes16;
              } else {
                throw ConfigError("task: unknown task '" + v + "' (expected gmm2d or shapes16)");
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.task); }},
      Field{"method", [](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); },
            [](const ExperimentConfig& c) { return to_string(c.method); }},
      Field{"seed",
            [](ExperimentConfig& c, const std::string& v) {
              const long long s = to_ll("seed", v);
              if (s < 0) throw ConfigError("seed: must be non-negative");
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      CMAD_INT("num_agents", num_agents),
      CMAD_STR("mask", mask),
      CMAD_DBL("beta_min", schedule.beta_min),
      CMAD_DBL("beta_max", schedule.beta_max),
      CMAD_INT("steps", steps),
      CMAD_DBL("eps", eps),
      CMAD_DBL("lambda", soc.lambda),
      Field{"agent_lambda",
            [](ExperimentConfig& c, const std::string& v) { c.soc.agent_lambda = to_double_list("agent_lambda", v); },
            [](const ExperimentConfig& c) { return join(c.soc.agent_lambda); }},
      CMAD_DBL("alpha_run", soc.alpha_run),
      Field{"running_scale",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "constant") {
                c.soc.running_scale = RunningScale::Constant;
              } else if (v == "linear-ramp") {
                c.soc.running_scale = RunningScale::LinearRamp;
              } else {
                throw ConfigError("running_scale: expected constant or linear-ramp, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(c.soc.running_scale == RunningScale::Constant ? "constant" : "linear-ramp");
            }},
      CMAD_DBL("beta_seam", soc.beta_seam),
      CMAD_DBL("gamma_seam", soc.gamma_seam),
      CMAD_DBL("charbonnier_eps", soc.charbonnier_eps),
      CMAD_INT("target_label", soc.target_label),
      Field{"terminal",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "classifier") {
                c.terminal = TerminalKind::Classifier;
              } else if (v == "gaussian") {
                c.terminal = TerminalKind::Gaussian;
              } else if (v == "quadratic") {
                c.terminal = TerminalKind::Quadratic;
              } else {
                throw ConfigError("terminal: expected classifier, gaussian or quadratic, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.terminal); }},
      CMAD_DBL("terminal_std", terminal_std),
      CMAD_DBL("cdps_scale", cdps_scale),
      CMAD_INT("joint_updates", joint_updates),
      CMAD_INT("outer_iterations", outer_iterations),
      CMAD_INT("inner_steps", inner_steps),
      CMAD_INT("batch", batch),
      CMAD_DBL("lr", lr),
      CMAD_DBL("lr_aggregator", lr_aggregator),
      Field{"agent_order",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "ascending") {
                c.agent_order = AgentOrder::Ascending;
              } else if (v == "shuffle") {
                c.agent_order = AgentOrder::Shuffle;
              } else {
                throw ConfigError("agent_order: expected ascending or shuffle, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(c.agent_order == AgentOrder::Ascending ? "ascending" : "shuffle");
            }},
      CMAD_INT("checkpoint_every", checkpoint_every),
      CMAD_INTS("nn1_hidden", nn1_hidden),
      CMAD_INTS("nn2_hidden", nn2_hidden),
      CMAD_INT("time_embed", time_embed),
      CMAD_DBL("nn2_init", nn2_init),
      CMAD_INT("eval_samples", eval_samples),
      CMAD_INT("eval_batch", eval_batch),
      CMAD_STR("output_dir", output_dir),
      CMAD_STR("score_checkpoint", score_checkpoint),
      CMAD_STR("classifier_checkpoint", classifier_checkpoint),
      CMAD_STR("policy_checkpoint", policy_checkpoint),
      Field{"score_param",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "noise") {
                c.score_param = ScoreParam::Noise;
              } else if (v == "denoiser") {
                c.score_param = ScoreParam::Denoiser;
              } else {
                throw ConfigError("score_param: expected noise or denoiser, got '" + v + "'");
              }
            },
            [](const ExperimentConfig& c) {
              return std::string(c.score_param == ScoreParam::Noise ? "noise" : "denoiser");
            }},
      CMAD_INTS("score_hidden", score_hidden),
      CMAD_INT("score_steps", score_steps),
      CMAD_INT("score_batch", score_batch),
      CMAD_DBL("score_lr", score_lr),
      CMAD_INTS("classifier_hidden", classifier_hidden),
      CMAD_INT("classifier_steps", classifier_steps),
      CMAD_DBL("classifier_lr", classifier_lr),
      CMAD_INT("dataset_size", dataset_size),
  };
  return fields;
}

#undef CMAD_INT
#undef CMAD_DBL
#undef CMAD_STR
#undef CMAD_INTS

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void require_widths(const std::vector<int>& w, const std::string& key) {
  for (int x : w) require(x >= 1, key + ": layer widths must be positive");
}

}  // namespace

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : schema()) {
    if (key == f.key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : schema()) out.emplace_back(f.key);
  return out;
}

void ExperimentConfig::validate() const {
  require(num_agents >= 1, "num_agents: must be at least 1");
  require(steps >= 2, "steps: must be at least 2");
  require(eps > 0.0 && eps < 1.0, "eps: must lie in (0, 1)");
  try {
    schedule.validate();
    soc.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  require(soc.agent_lambda.empty() || static_cast<int>(soc.agent_lambda.size()) == num_agents,
          "agent_lambda: need one weight per agent");
  require(terminal_std > 0.0, "terminal_std: must be positive");
  require(cdps_scale >= 0.0, "cdps_scale: must be non-negative");
  require(joint_updates >= 1, "joint_updates: must be at least 1");
  require(outer_iterations >= 1, "outer_iterations: must be at least 1");
  require(inner_steps >= 1, "inner_steps: must be at least 1");
  require(batch >= 1, "batch: must be at least 1");
  require(lr > 0.0, "lr: must be positive");
  require(lr_aggregator > 0.0, "lr_aggregator: must be positive");
  require(checkpoint_every >= 0, "checkpoint_every: must be non-negative");
  require(time_embed >= 0 && time_embed % 2 == 0, "time_embed: must be a non-negative even number");
  require_widths(nn1_hidden, "nn1_hidden");
  require_widths(nn2_hidden, "nn2_hidden");
  require_widths(score_hidden, "score_hidden");
  require_widths(classifier_hidden, "classifier_hidden");
  require(eval_samples >= 1, "eval_samples: must be at least 1");
  require(eval_batch >= 1, "eval_batch: must be at least 1");
  require(score_steps >= 1 && score_batch >= 1 && score_lr > 0.0, "score training budget must be positive");
  require(classifier_steps >= 1 && classifier_lr > 0.0, "classifier training budget must be positive");
  require(dataset_size >= 8, "dataset_size: must be at least 8");
  require(!output_dir.empty(), "output_dir: must not be empty");
  const int classes = 4;
  require(soc.target_label >= 0 && soc.target_label < classes, "target_label: must lie in [0, 4)");
  if (task == Task::Gmm2d) {
    require(terminal != TerminalKind::Classifier, "terminal: gmm2d supports gaussian or quadratic");
  } else {
    require(terminal == TerminalKind::Classifier, "terminal: shapes16 uses the classifier terminal cost");
  }
  const std::string presets[] = {"h-stripes", "v-stripes", "halves", "identity"};
  bool known = mask.rfind("explicit:", 0) == 0;
  for (const auto& p : presets) known = known || mask == p;
  require(known, "mask: unknown preset '" + mask + "'");
  require(mask != "identity" || num_agents == 1, "mask: identity needs num_agents = 1");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const Field& f : schema()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

TrainPlan ExperimentConfig::plan() const {
  TrainPlan p;
  switch (method) {
    case Method::CmadJoint:
      p.mode = TrainMode::Joint;
      p.iterations = joint_updates;
      break;
    case Method::CmadControlWise:
      p.mode = TrainMode::ControlWise;
      p.iterations = outer_iterations;
      break;
    default:
      p.mode = TrainMode::CdpsOnly;
      p.iterations = 0;
      break;
  }
  p.inner_steps = inner_steps;
  p.batch = batch;
  p.lr = lr;
  p.lr_aggregator = lr_aggregator;
  p.seed = seed;
  p.order = agent_order;
  return p;
}

PolicySpec ExperimentConfig::policy_spec(int dim) const {
  PolicySpec s;
  s.dim = dim;
  s.nn1_hidden = nn1_hidden;
  s.nn2_hidden = nn2_hidden;
  s.time_embed = time_embed;
  s.nn2_init = nn2_init;
  return s;
}

TimeGrid ExperimentConfig::grid() const { return make_time_grid(static_cast<std::size_t>(steps), eps); }

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + "expected 'key = value'");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::filesystem::path output_root() {
  const char* env = std::getenv("CMAD_OUTPUT_ROOT");
  if (env != nullptr && *env != '\0') return env;
  return std::filesystem::current_path();
}

std::filesystem::path resolve_output(const ExperimentConfig& cfg) {
  std::filesystem::path p(cfg.output_dir);
  return p.is_absolute() ? p : output_root() / p;
}

}  // namespace cmad::harness
