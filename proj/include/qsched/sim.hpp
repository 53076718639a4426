#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsched/env.hpp"
#include "qsched/sched.hpp"
#include "qsched/verify.hpp"

namespace qsched {

// Q_t = max(Q_{t-1} + A_t - S_t 1[i = a_t], 0), componentwise.
QueueVector advance_queue(const QueueVector& q_prev, const StepSample& sample, Arm action);
void advance_queue(const QueueVector& q_prev, const VectorXd& arrivals, const VectorXd& services, Arm action,
                   QueueVector& out);

// Wraps any failure inside the slot loop with the slot index and a dump of
// the policy state.
class SimulationError : public std::runtime_error {
public:
  SimulationError(long long slot, std::string policy_state, const std::string& what)
      : std::runtime_error(what), slot_(slot), state_(std::move(policy_state)) {}
  long long slot() const { return slot_; }
  const std::string& policy_state() const { return state_; }

private:
  long long slot_;
  std::string state_;
};

struct RunOptions {
  bool checks = true;           // sample-path checkers (drift, orthogonality, bounded differences)
  bool keep_queue_trace = true; // store A_t and Q_t
  long long stride = 1;         // keep every stride-th slot of the per-queue traces
  int policy_id = 0;
  bool common_random_numbers = false;
};

// Per-slot trace of a single run. Vectors are indexed by t - 1.
struct RunRecord {
  long long horizon = 0;
  int K = 0;
  double M = 1.0;
  long long stride = 1;
  std::vector<Arm> action;
  std::vector<double> service; // S_{t,a_t}
  std::vector<double> total_q; // ||Q_t||_1
  std::vector<double> gamma;
  std::vector<double> eta;
  std::vector<double> beta;
  std::vector<double> fed;
  std::vector<long long> epoch_starts; // slots at which an SSMW epoch began
  RowMatrixXd arrivals;                // row r holds A_t for t = (r + 1) * stride
  RowMatrixXd queues;                  // row r holds Q_t for t = (r + 1) * stride
  std::vector<CheckReport> checks;

  bool full_resolution() const { return stride == 1 && queues.rows() == horizon; }
  // Q_t for 0 <= t <= T at full resolution (Q_0 = 0).
  QueueVector queue_at(long long t) const;
};

std::uint64_t decision_key(std::uint64_t seed, int policy_id);
std::uint64_t environment_key(std::uint64_t seed, int policy_id, bool common_random_numbers);

RunRecord run_once(const Environment& env, const PolicyDescriptor& policy, std::uint64_t seed,
                   const RunOptions& options = {});

struct PolicyResult {
  PolicyDescriptor policy;
  std::vector<std::vector<double>> series; // per replication ||Q_t||_1, t = 1..T
  std::vector<double> mean;                // pointwise mean over replications
  std::vector<CheckReport> checks;         // merged over replications
  std::vector<double> rep_final_window;
  double final_window_mean = 0.0;
  double time_average = 0.0;
};

struct ScenarioResult {
  long long horizon = 0;
  int reps = 0;
  std::vector<PolicyResult> policies;
};

struct ReplicateOptions {
  bool checks = true;
  bool common_random_numbers = false;
  unsigned threads = 0; // 0: hardware concurrency
  long long stride = 1;
  bool keep_queue_trace = false;
  // Invoked once per finished (policy, replication) cell, serialized.
  std::function<void(std::size_t policy, int rep, const RunRecord&)> on_record;
};

// Replication r runs with seed base_seed + r. The environment (and its noise
// trajectory) is shared read-only by every cell.
ScenarioResult replicate(const Environment& env, const std::vector<PolicyDescriptor>& policies, int n_reps,
                         std::uint64_t base_seed, const ReplicateOptions& options = {});

// Mean of series over slots t in (lo * T, hi * T] (1-based t).
double window_mean(const std::vector<double>& series, double lo, double hi);
// Mean over the last 10% of slots.
double final_window_mean(const std::vector<double>& series);

} // namespace qsched
