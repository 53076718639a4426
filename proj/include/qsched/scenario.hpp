#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsched/env.hpp"
#include "qsched/sched.hpp"

namespace qsched {

// One experiment: an environment, the policies to compare and the
// replication protocol. The horizon and noise seed live in `env`.
struct Scenario {
  std::string name;
  EnvironmentSpec env;
  std::vector<PolicyDescriptor> policies;
  int reps = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir;
  long long stride = 1; // down-sampling of per-queue traces and CSV rows
  bool common_random_numbers = false;

  bool operator==(const Scenario&) const = default;
};

class ScenarioError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void validate(const Scenario& scenario);

// YAML document. Unknown keys and missing required fields raise
// ScenarioError with the line number where available.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

std::string write_scenario(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

} // namespace qsched
