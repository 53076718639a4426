#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qsched/env.hpp"
#include "qsched/mab.hpp"

namespace qsched {

// Scenario-level description of one policy instance.
struct PolicyDescriptor {
  std::string name; // maxweight, maxweight-gt, lp-randomized, softmw, ssmw, softmw-plus, ssmw-plus
  std::string label;
  double M = 1.0;
  double delta = 0.0;
  std::optional<double> alpha; // softmw-plus only

  bool operator==(const PolicyDescriptor&) const = default;
};

const std::vector<std::string>& policy_roster();
bool is_bandit_policy(const std::string& name);
std::string default_label(const PolicyDescriptor& desc);
void validate(const PolicyDescriptor& desc);

struct PolicyConfig {
  double M = 1.0;
  int K = 1;
  double delta = 0.0;
  std::optional<double> alpha;
};

// Per-slot values exposed for traces and runtime checks. NaN when the policy
// has no learner.
struct Diagnostics {
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double eta = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double fed = std::numeric_limits<double>::quiet_NaN(); // reward given to the learner
  bool epoch_start = false;
};

struct SlotContext {
  long long t = 0;
  const RatePair* true_rates = nullptr; // read by maxweight-gt only
};

class Policy {
public:
  virtual ~Policy() = default;

  // Q_prev is the end-of-slot-(t-1) queue vector.
  virtual Arm decide(const QueueVector& q_prev, const SlotContext& ctx, CounterRng& rng) = 0;
  // service_observed is S_{t,a_t} of the slot just simulated.
  virtual void observe(Arm action, double service_observed, const QueueVector& q_new) = 0;

  virtual const Diagnostics& diagnostics() const { return diag_; }
  virtual std::string describe() const = 0;

protected:
  Diagnostics diag_;
};

std::unique_ptr<Policy> make_policy(const PolicyDescriptor& desc, const Environment& env);

// ---------------------------------------------------------------------------
// Building blocks, usable without the Policy wrapper.

// argmax_i Q_i * sigma_i, lowest index on ties.
Arm maxweight_decide(const QueueVector& q_prev, const VectorXd& sigma_est);

Arm lp_randomized_decide(const MixedAction& theta, CounterRng& rng);

struct SoftMWState {
  LearnerState<double> learner;
  double sum_q2 = 0.0; // sum_{s=0}^{t-1} ||Q_s||_2^2 when params for slot t are formed
  double L = 1.0;      // running max increment (softmw-plus), starts at M
  long long t = 0;
};

SoftMWState softmw_initial_state(const PolicyConfig& cfg);

StepParams<double> softmw_params(const SoftMWState& state, const QueueVector& q_prev, long long t,
                                 const PolicyConfig& cfg);
StepParams<double> softmw_plus_params(const SoftMWState& state, const QueueVector& q_prev, long long t,
                                      const PolicyConfig& cfg);

// L_t = max(L_{t-1}, ||Q_t - Q_{t-1}||_inf)
double update_increment_bound(double L_prev, const QueueVector& q_prev, const QueueVector& q_new);

// S' = S if S <= M t^{delta/4}, else 0.
double softmw_plus_clip(double service, long long t, const PolicyConfig& cfg);

struct SSMWEpochState {
  long long T0 = 0;  // slot index of the last decision before the epoch
  long long m = 1;   // epoch length
  long long tau = 1; // 1-based index within the epoch of the next slot
  double beta = 0.0;
  double eta = 0.0;
  QueueVector q_at_T0;
  LearnerState<double> learner;
  bool plus = false;
};

long long ssmw_epoch_length(const QueueVector& q_T0, double M);

SSMWEpochState ssmw_maybe_start_epoch(const std::optional<SSMWEpochState>& previous, const QueueVector& q_latest,
                                      long long t, const PolicyConfig& cfg, bool plus);

StepParams<double> ssmw_params(const SSMWEpochState& epoch, const QueueVector& q_prev, long long tau,
                               const PolicyConfig& cfg);

// SSMW+ feedback: Q_{T0+tau-1,a} S if it is <= m^{delta/3} M Q_{T0,a}, else 0.
double ssmw_plus_clip(const SSMWEpochState& epoch, Arm action, double q_prev_a, double service,
                      const PolicyConfig& cfg);

// Exploration direction Q / ||Q||_1, uniform when Q = 0.
VectorXd queue_direction(const QueueVector& q);

} // namespace qsched
