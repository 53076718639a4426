#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsched/env.hpp"
#include "qsched/types.hpp"

namespace qsched {

struct RunRecord;

struct CheckReport {
  std::string name;
  bool passed = true;
  double worst_slack = std::numeric_limits<double>::infinity();
  long long index = -1; // slot (or prefix length) of the worst slack
  int queue = -1;       // queue index when the check is per-queue
  double tolerance = 0.0;

  // Folds one observation in; a slack below -tolerance fails the check.
  void observe(double slack, long long at, int q = -1) {
    if (slack < worst_slack) {
      worst_slack = slack;
      index = at;
      queue = q;
    }
    if (slack < -tolerance) passed = false;
  }
};

std::string format_report(const CheckReport& r);

// Merge reports of the same check (e.g. across replications); keeps the worst.
CheckReport merge_reports(const CheckReport& a, const CheckReport& b);

inline constexpr double kDriftTol = 1e-9;
inline constexpr double kOrthogonalityTol = 1e-9;
inline constexpr double kBoundedDiffTol = 1e-9;

// Brute-force minimizer of sum_i y_i ln(y_i / scaled_i) over the floored
// simplex. The first K-1 coordinates range over {beta} U (resolution * Z) in
// [beta, 1]; the last is the remainder. Coarse pass at `resolution`, or at
// 10x that when `resolution` < 1e-2, followed by a refinement window of
// +-`window_cells` coarse cells at `resolution`.
MixedAction grid_projection_oracle(const VectorXd& scaled, double beta, double resolution, int window_cells = 6);

// Objective minimized by the projection (up to constants).
double projection_objective(const VectorXd& y, const VectorXd& scaled);

// sum_t (x_t/M)^2 <= 4 (sum_t x_t/M)^{3/2} on every prefix of a trace that
// starts at 0 with increments bounded by M.
CheckReport check_bounded_diff_sum(std::span<const double> series, double M);

// sum_t (x_t/M)^2 >= (1/3)(x_n/M)^3 on every prefix.
CheckReport check_bounded_diff_reverse(std::span<const double> series, double M);

// Per-slot slack of the quadratic Lyapunov drift bound,
// RHS - LHS with LHS = 1/2||Q_t||^2 - 1/2||Q_{t-1}||^2 and
// RHS = (K+1)M^2/2 + <Q_{t-1}, A_t - S_t 1_{a_t}>.
double drift_slack(const QueueVector& q_prev, const VectorXd& arrivals, double service_a, int action,
                   const QueueVector& q_new, double M);

// <Q_t, U_t> with U_t = max(-Q_{t-1} - A_t + S_t 1_{a_t}, 0).
double unused_service_inner(const QueueVector& q_prev, const VectorXd& arrivals, double service_a, int action,
                            const QueueVector& q_new);

// Stateful form of the sample-path checks, fed one slot at a time.
class SamplePathMonitor {
public:
  SamplePathMonitor(int K, double M, bool bounded_increments);

  void step(long long t, const QueueVector& q_prev, const VectorXd& arrivals, double service_a, int action,
            const QueueVector& q_new);

  std::vector<CheckReport> reports() const;

private:
  int K_;
  double M_;
  bool bounded_;
  CheckReport drift_;
  CheckReport orthogonality_;
  CheckReport bounded_diff_;
  CheckReport bounded_diff_reverse_;
  VectorXd sum_x_;
  VectorXd sum_x2_;
};

// Replays the drift check over a full-resolution record.
CheckReport check_drift_inequality(const RunRecord& record, double M, int K);
CheckReport check_unused_service(const RunRecord& record);
// Bounded-difference checks over every queue of a full-resolution record.
std::vector<CheckReport> check_bounded_diff_record(const RunRecord& record, double M);

// Bisection on eps with the feasibility test sum_i (lambda_i + eps)^+ / sigma_i <= 1.
ReferencePolicy lp_bisection_oracle(const RatePair& rates, double tol = 1e-12);

struct BanditInstance {
  VectorXd means; // Bernoulli reward means in [0, 1]
};

struct ProbeParams {
  double gamma = 0.1;
  double beta = 1e-3;
  std::optional<double> eta; // defaults to gamma / K, the largest rate that admits rewards up to 1
};

// EXP3.S+ with constant eta, beta, gamma and uniform e on a stationary
// Bernoulli bandit; returns the per-arm play frequencies over T rounds.
VectorXd exp3s_regret_probe(const BanditInstance& instance, long long T, std::uint64_t seed,
                            const ProbeParams& params = {});

} // namespace qsched
