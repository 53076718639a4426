#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "qsched/report.hpp"
#include "qsched/scenario.hpp"
#include "qsched/sim.hpp"
#include "qsched/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailure = 1;
constexpr int kUsage = 2;

struct RunArgs {
  std::string scenario;
  std::optional<int> reps;
  std::optional<long long> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::string check = "on";
  bool save_traces = false;
  unsigned threads = 0;
};

int cmd_run(const RunArgs& a) {
  qsched::Scenario s;
  try {
    s = qsched::load_scenario(a.scenario);
    if (a.reps) s.reps = *a.reps;
    if (a.horizon) s.env.horizon = *a.horizon;
    if (a.seed) s.base_seed = *a.seed;
    qsched::validate(s);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }

  qsched::RunScenarioOptions opts;
  opts.checks = a.check == "on";
  opts.threads = a.threads;
  opts.save_traces = a.save_traces;
  if (a.out) opts.output_dir = *a.out;

  qsched::ScenarioOutputs out;
  try {
    out = qsched::run_scenario(s, opts);
  } catch (const qsched::SimulationError& e) {
    fmt::print(stderr, "assertion failure: {}\n", e.what());
    return kCheckFailure;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kCheckFailure;
  }

  std::cout << qsched::summary_text(s, out.result);
  fmt::print("\noutputs written to {}\n", out.directory.string());
  if (!out.checks_passed) {
    fmt::print(stderr, "one or more sample-path checks failed\n");
    return kCheckFailure;
  }
  return kOk;
}

int cmd_lp(const std::vector<double>& values) {
  if (values.empty() || values.size() % 2 != 0) {
    fmt::print(stderr, "error: lp expects K arrival rates followed by K service rates\n");
    return kUsage;
  }
  const auto K = static_cast<Eigen::Index>(values.size() / 2);
  qsched::RatePair rates{qsched::VectorXd(K), qsched::VectorXd(K)};
  for (Eigen::Index i = 0; i < K; ++i) {
    rates.lambda(i) = values[static_cast<std::size_t>(i)];
    rates.sigma(i) = values[static_cast<std::size_t>(K + i)];
  }
  qsched::ReferencePolicy ref;
  try {
    ref = qsched::solve_reference_lp(rates);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }
  fmt::print("eps = {:.10g}\n", ref.eps);
  std::string theta;
  for (Eigen::Index i = 0; i < K; ++i) theta += fmt::format("{}{:.10g}", i ? " " : "", ref.theta(i));
  fmt::print("theta = {}\n", theta);
  fmt::print("feasible = {}\n", ref.feasible ? "yes" : "no");
  return kOk;
}

int cmd_verify(const std::string& path, double M) {
  qsched::RunRecord rec;
  try {
    rec = qsched::read_trace_csv(path, M);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  }
  if (!rec.full_resolution()) {
    fmt::print(stderr, "error: {}: trace is down-sampled; the checks need every slot\n", path);
    return kUsage;
  }
  std::vector<qsched::CheckReport> reports;
  reports.push_back(qsched::check_drift_inequality(rec, M, rec.K));
  reports.push_back(qsched::check_unused_service(rec));
  for (auto& r : qsched::check_bounded_diff_record(rec, M)) reports.push_back(r);
  bool ok = true;
  for (const auto& r : reports) {
    fmt::print("{}\n", qsched::format_report(r));
    ok = ok && r.passed;
  }
  return ok ? kOk : kCheckFailure;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bandit scheduling simulator for multi-class queues"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write CSV, summary and SVG outputs");
  run_cmd->add_option("scenario", run.scenario, "Scenario file")->required();
  run_cmd->add_option("--reps", run.reps, "Number of replications")->check(CLI::PositiveNumber);
  run_cmd->add_option("--horizon", run.horizon, "Number of slots")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", run.seed, "Base seed; replication r uses seed + r");
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--check", run.check, "Sample-path checkers")->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_flag("--save-traces", run.save_traces, "Write a per-slot trace CSV for every run");
  run_cmd->add_option("--threads", run.threads, "Worker threads (0: all cores)");

  std::vector<double> lp_values;
  auto* lp_cmd = app.add_subcommand("lp", "Solve the capacity LP for (theta, eps)");
  lp_cmd->add_option("rates", lp_values, "lambda_1 .. lambda_K sigma_1 .. sigma_K")->required();

  std::string verify_path;
  double verify_M = 1.0;
  auto* verify_cmd = app.add_subcommand("verify", "Replay the sample-path checks on a stored trace");
  verify_cmd->add_option("record", verify_path, "Trace CSV written by run --save-traces")->required();
  verify_cmd->add_option("--M", verify_M, "Increment bound M")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*run_cmd) return cmd_run(run);
  if (*lp_cmd) return cmd_lp(lp_values);
  if (*verify_cmd) return cmd_verify(verify_path, verify_M);
  return kUsage;
}
