#include "qsched/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace qsched {

namespace {

[[noreturn]] void fail_at(const YAML::Node& node, const std::string& what) {
  const YAML::Mark mark = node.Mark();
  if (mark.is_null()) throw ScenarioError(what);
  throw ScenarioError(fmt::format("line {}: {}", mark.line + 1, what));
}

void reject_unknown(const YAML::Node& map, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!map.IsMap()) fail_at(map, where + ": expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      fail_at(kv.first, fmt::format("{}: unknown key '{}'", where, key));
  }
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail_at(node, fmt::format("{}: malformed value", field));
  }
}

template <typename T>
T required(const YAML::Node& map, const char* key, const std::string& where) {
  const YAML::Node node = map[key];
  if (!node) fail_at(map, fmt::format("{}.{}: required field missing", where, key));
  return scalar<T>(node, where + "." + key);
}

template <typename T>
T optional(const YAML::Node& map, const char* key, const std::string& where, T fallback) {
  const YAML::Node node = map[key];
  return node ? scalar<T>(node, where + "." + key) : fallback;
}

VectorXd vector_of(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) fail_at(node, field + ": expected a list");
  VectorXd v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) v(static_cast<Eigen::Index>(i)) = scalar<double>(node[i], field);
  return v;
}

RowMatrixXd matrix_of(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) fail_at(node, field + ": expected a list of rows");
  RowMatrixXd m;
  for (std::size_t r = 0; r < node.size(); ++r) {
    const VectorXd row = vector_of(node[r], field);
    if (r == 0) m.resize(static_cast<Eigen::Index>(node.size()), row.size());
    if (row.size() != m.cols()) fail_at(node[r], field + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

ProcessSpec parse_process(const YAML::Node& node, const std::string& where) {
  reject_unknown(node, where, {"kind", "rates", "phi", "sd", "alpha", "trace"});
  ProcessSpec p;
  if (node["kind"]) {
    try {
      p.kind = process_kind_from_string(required<std::string>(node, "kind", where));
    } catch (const std::exception& e) {
      fail_at(node["kind"], fmt::format("{}.kind: {}", where, e.what()));
    }
  }
  if (node["rates"]) p.rates = vector_of(node["rates"], where + ".rates");
  p.phi = optional<double>(node, "phi", where, p.phi);
  p.sd = optional<double>(node, "sd", where, p.sd);
  p.alpha = optional<double>(node, "alpha", where, p.alpha);
  if (node["trace"]) p.trace = matrix_of(node["trace"], where + ".trace");
  return p;
}

PolicyDescriptor parse_policy(const YAML::Node& node, const std::string& where, double env_M) {
  reject_unknown(node, where, {"name", "label", "M", "delta", "alpha"});
  PolicyDescriptor d;
  d.name = required<std::string>(node, "name", where);
  d.label = optional<std::string>(node, "label", where, "");
  d.M = optional<double>(node, "M", where, env_M);
  d.delta = optional<double>(node, "delta", where, 0.0);
  if (node["alpha"]) d.alpha = scalar<double>(node["alpha"], where + ".alpha");
  return d;
}

std::string num(double v) { return fmt::format("{}", v); }

std::string list(const VectorXd& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v(i));
  return s + "]";
}

std::string quoted(const std::string& s) {
  YAML::Emitter e;
  e << YAML::DoubleQuoted << s;
  return e.c_str();
}

void write_process(std::ostringstream& out, const char* key, const ProcessSpec& p) {
  const ProcessSpec defaults;
  out << "  " << key << ":\n";
  out << "    kind: " << to_string(p.kind) << "\n";
  if (p.rates.size() > 0) out << "    rates: " << list(p.rates) << "\n";
  if (p.kind == ProcessKind::Ar1Bernoulli || p.phi != defaults.phi) out << "    phi: " << num(p.phi) << "\n";
  if (p.kind == ProcessKind::Ar1Bernoulli || p.sd != defaults.sd) out << "    sd: " << num(p.sd) << "\n";
  if (p.kind == ProcessKind::HeavyTailed || p.alpha != defaults.alpha) out << "    alpha: " << num(p.alpha) << "\n";
  if (p.trace.size() > 0) {
    out << "    trace:\n";
    for (Eigen::Index r = 0; r < p.trace.rows(); ++r) out << "      - " << list(p.trace.row(r).transpose()) << "\n";
  }
}

} // namespace

void validate(const Scenario& s) {
  try {
    if (s.env.horizon < 1) throw std::invalid_argument("horizon: must be >= 1");
    if (s.reps < 1) throw std::invalid_argument("reps: must be >= 1");
    if (s.stride < 1) throw std::invalid_argument("downsample: must be >= 1");
    if (s.policies.empty()) throw std::invalid_argument("policies: at least one policy is required");
    validate(s.env);
    for (std::size_t i = 0; i < s.policies.size(); ++i) {
      try {
        validate(s.policies[i]);
      } catch (const std::exception& e) {
        throw std::invalid_argument(fmt::format("policies[{}]: {}", i, e.what()));
      }
    }
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(fmt::format("scenario '{}': {}", s.name, e.what()));
  }
}

Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError(fmt::format("line {}: parse error: {}", e.mark.line + 1, e.msg));
  }
  if (!root || root.IsNull()) throw ScenarioError("empty scenario document");
  reject_unknown(root, "scenario",
                 {"name", "environment", "policies", "horizon", "reps", "base_seed", "noise_seed", "output",
                  "downsample", "common_random_numbers"});

  Scenario s;
  s.name = optional<std::string>(root, "name", "scenario", "");
  const YAML::Node env = root["environment"];
  if (!env) fail_at(root, "environment: required section missing");
  reject_unknown(env, "environment", {"K", "M", "arrival", "service", "noise_file"});
  s.env.K = required<int>(env, "K", "environment");
  s.env.M = optional<double>(env, "M", "environment", 1.0);
  if (!env["arrival"]) fail_at(env, "environment.arrival: required section missing");
  if (!env["service"]) fail_at(env, "environment.service: required section missing");
  s.env.arrival = parse_process(env["arrival"], "environment.arrival");
  s.env.service = parse_process(env["service"], "environment.service");
  s.env.noise_file = optional<std::string>(env, "noise_file", "environment", "");

  s.env.horizon = required<long long>(root, "horizon", "scenario");
  s.env.noise_seed = optional<std::uint64_t>(root, "noise_seed", "scenario", 0);
  s.reps = optional<int>(root, "reps", "scenario", 1);
  s.base_seed = optional<std::uint64_t>(root, "base_seed", "scenario", 0);
  s.output_dir = optional<std::string>(root, "output", "scenario", "");
  s.stride = optional<long long>(root, "downsample", "scenario", 1);
  s.common_random_numbers = optional<bool>(root, "common_random_numbers", "scenario", false);

  const YAML::Node policies = root["policies"];
  if (!policies) fail_at(root, "policies: required section missing");
  if (!policies.IsSequence()) fail_at(policies, "policies: expected a list");
  for (std::size_t i = 0; i < policies.size(); ++i)
    s.policies.push_back(parse_policy(policies[i], fmt::format("policies[{}]", i), s.env.M));

  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(fmt::format("{}: cannot open scenario file", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string write_scenario(const Scenario& s) {
  std::ostringstream out;
  out << "name: " << quoted(s.name) << "\n";
  out << "horizon: " << s.env.horizon << "\n";
  out << "reps: " << s.reps << "\n";
  out << "base_seed: " << s.base_seed << "\n";
  out << "noise_seed: " << s.env.noise_seed << "\n";
  if (!s.output_dir.empty()) out << "output: " << quoted(s.output_dir) << "\n";
  out << "downsample: " << s.stride << "\n";
  out << "common_random_numbers: " << (s.common_random_numbers ? "true" : "false") << "\n";
  out << "environment:\n";
  out << "  K: " << s.env.K << "\n";
  out << "  M: " << num(s.env.M) << "\n";
  if (!s.env.noise_file.empty()) out << "  noise_file: " << quoted(s.env.noise_file) << "\n";
  write_process(out, "arrival", s.env.arrival);
  write_process(out, "service", s.env.service);
  out << "policies:\n";
  for (const auto& p : s.policies) {
    out << "  - name: " << p.name << "\n";
    if (!p.label.empty()) out << "    label: " << quoted(p.label) << "\n";
    out << "    M: " << num(p.M) << "\n";
    out << "    delta: " << num(p.delta) << "\n";
    if (p.alpha) out << "    alpha: " << num(*p.alpha) << "\n";
  }
  return out.str();
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError(fmt::format("{}: cannot write scenario file", path.string()));
  out << write_scenario(scenario);
  if (!out) throw ScenarioError(fmt::format("{}: write failed", path.string()));
}

} // namespace qsched
