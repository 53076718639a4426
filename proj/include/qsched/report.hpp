#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qsched/scenario.hpp"
#include "qsched/sim.hpp"

namespace qsched {

struct RunScenarioOptions {
  bool checks = true;
  unsigned threads = 0;
  bool save_traces = false; // one full-resolution trace CSV per (policy, replication)
  std::optional<std::filesystem::path> output_dir; // overrides scenario.output_dir
};

struct ScenarioOutputs {
  ScenarioResult result;
  std::filesystem::path directory;
  std::vector<std::filesystem::path> files;
  bool checks_passed = true;
};

// Runs every policy of the scenario and writes, under the output directory:
// <label>.csv (t, mean_total_q, rep_0, ...), <label>.running_avg.csv,
// summary.txt and total_queue.svg.
ScenarioOutputs run_scenario(const Scenario& scenario, const RunScenarioOptions& options = {});

// File-name-safe form of a policy label.
std::string file_stem(const std::string& label);

// Rows t = stride, 2 stride, ..., T.
std::string series_csv(const PolicyResult& policy, long long stride);
// (1/t) sum_{s <= t} mean ||Q_s||_1 on the same rows.
std::string running_average_csv(const PolicyResult& policy, long long stride);
std::string summary_text(const Scenario& scenario, const ScenarioResult& result);

// Fixed 960x540 viewport, linear axes, one polyline per policy of at most
// 2000 points, legend on the right.
std::string emit_plot(const ScenarioResult& result, const std::string& title = "");

// Trace CSV: t, action, service, A_1..A_K, Q_1..Q_K with 1-based queue
// columns and 0-based action.
std::string trace_csv(const RunRecord& record);
void write_trace_csv(const RunRecord& record, const std::filesystem::path& path);
RunRecord read_trace_csv(const std::filesystem::path& path, double M);

void write_text_file(const std::filesystem::path& path, const std::string& content);

} // namespace qsched
