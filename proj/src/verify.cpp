#include "qsched/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>

#include "qsched/mab.hpp"
#include "qsched/sim.hpp"

namespace qsched {

std::string format_report(const CheckReport& r) {
  std::string out = fmt::format("{:<24} {}  worst slack {:.6g}", r.name, r.passed ? "PASS" : "FAIL", r.worst_slack);
  if (r.index >= 0) out += fmt::format(" at {}", r.index);
  if (r.queue >= 0) out += fmt::format(" queue {}", r.queue);
  return out;
}

CheckReport merge_reports(const CheckReport& a, const CheckReport& b) {
  CheckReport out = a.worst_slack <= b.worst_slack ? a : b;
  out.passed = a.passed && b.passed;
  out.tolerance = std::max(a.tolerance, b.tolerance);
  return out;
}

double projection_objective(const VectorXd& y, const VectorXd& scaled) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y(i) > 0) total += y(i) * std::log(y(i) / scaled(i));
  return total;
}

namespace {

double entropy_term(double y, double s) { return y > 0 ? y * std::log(y / s) : 0.0; }

// Grid coordinates are integers j: j = 0 stands for beta, j >= first_step for
// j * h. `candidates[i]` lists the admissible j of free coordinate i in
// increasing value order.
struct GridSearch {
  double h;
  double beta;
  const VectorXd& s; // permuted so that the remainder coordinate is last
  int K;

  double value(long j) const { return j == 0 ? beta : static_cast<double>(j) * h; }

  std::vector<long> search(const std::vector<std::vector<long>>& candidates) const {
    const int free = K - 1;
    const long max_units = static_cast<long>(std::floor(1.0 / h + 1e-9));
    // Remainder cost indexed by (number of beta-valued coordinates, sum of j).
    std::vector<double> rem_cost(static_cast<std::size_t>(K) * static_cast<std::size_t>(max_units + 1));
    std::vector<char> rem_ok(rem_cost.size());
    for (int n = 0; n < K; ++n)
      for (long u = 0; u <= max_units; ++u) {
        const double r = 1.0 - n * beta - static_cast<double>(u) * h;
        const std::size_t idx = static_cast<std::size_t>(n) * static_cast<std::size_t>(max_units + 1) + static_cast<std::size_t>(u);
        rem_ok[idx] = r >= beta - 1e-12;
        rem_cost[idx] = rem_ok[idx] ? entropy_term(std::max(r, 0.0), s(K - 1)) : 0.0;
      }

    std::vector<std::vector<double>> cost(static_cast<std::size_t>(free));
    for (int i = 0; i < free; ++i)
      for (long j : candidates[static_cast<std::size_t>(i)]) cost[static_cast<std::size_t>(i)].push_back(entropy_term(value(j), s(i)));

    std::vector<long> current(static_cast<std::size_t>(free), 0), best(static_cast<std::size_t>(free), 0);
    double best_cost = std::numeric_limits<double>::infinity();

    std::function<void(int, int, long, double, double)> recurse = [&](int i, int n_beta, long units, double used,
                                                                      double partial) {
      if (i == free) {
        if (units > max_units) return;
        const std::size_t idx = static_cast<std::size_t>(n_beta) * static_cast<std::size_t>(max_units + 1) + static_cast<std::size_t>(units);
        if (!rem_ok[idx]) return;
        const double total = partial + rem_cost[idx];
        if (total < best_cost) {
          best_cost = total;
          best = current;
        }
        return;
      }
      const auto& cand = candidates[static_cast<std::size_t>(i)];
      const auto& c = cost[static_cast<std::size_t>(i)];
      // Every later coordinate (and the remainder) needs at least beta.
      const double reserve = beta * static_cast<double>(K - 1 - i);
      for (std::size_t k = 0; k < cand.size(); ++k) {
        const long j = cand[k];
        const double v = value(j);
        if (used + v + reserve > 1.0 + 1e-12) break;
        current[static_cast<std::size_t>(i)] = j;
        recurse(i + 1, n_beta + (j == 0 ? 1 : 0), units + j, used + v, partial + c[k]);
      }
    };
    recurse(0, 0, 0, 0.0, 0.0);
    return best;
  }
};

long first_step(double beta, double h) {
  const long j = static_cast<long>(std::floor(beta / h + 1e-9)) + 1;
  return std::max(j, 1L);
}

std::vector<long> full_candidates(double beta, double h) {
  std::vector<long> out{0};
  const long max_units = static_cast<long>(std::floor(1.0 / h + 1e-9));
  for (long j = first_step(beta, h); j <= max_units; ++j) out.push_back(j);
  return out;
}

} // namespace

MixedAction grid_projection_oracle(const VectorXd& scaled, double beta, double resolution, int window_cells) {
  const int K = static_cast<int>(scaled.size());
  if (K < 1 || K > 4) throw std::invalid_argument("grid_projection_oracle: K must be in [1, 4]");
  if (!(resolution > 0) || resolution > 1e-2 + 1e-15)
    throw std::invalid_argument("grid_projection_oracle: resolution must be in (0, 1e-2]");
  if (beta < 0 || beta * K > 1.0 + kFloorTol) throw std::invalid_argument("grid_projection_oracle: infeasible floor");
  if (K == 1) return VectorXd::Ones(1);

  // The largest coordinate takes the remainder.
  std::vector<int> perm(static_cast<std::size_t>(K));
  std::iota(perm.begin(), perm.end(), 0);
  const int largest = static_cast<int>(std::max_element(scaled.data(), scaled.data() + K) - scaled.data());
  std::swap(perm[static_cast<std::size_t>(largest)], perm.back());
  VectorXd s(K);
  for (int i = 0; i < K; ++i) s(i) = scaled(perm[static_cast<std::size_t>(i)]);

  const double h = resolution;
  std::vector<long> fine_best;
  if (resolution < 1e-2) {
    const long ratio = std::lround(1e-2 / resolution) > 1 ? 10 : 1;
    const double H = h * static_cast<double>(ratio);
    GridSearch coarse{H, beta, s, K};
    std::vector<std::vector<long>> cand(static_cast<std::size_t>(K - 1), full_candidates(beta, H));
    const std::vector<long> cb = coarse.search(cand);

    GridSearch fine{h, beta, s, K};
    const long max_units = static_cast<long>(std::floor(1.0 / h + 1e-9));
    const long lo_step = first_step(beta, h);
    std::vector<std::vector<long>> window(static_cast<std::size_t>(K - 1));
    for (int i = 0; i < K - 1; ++i) {
      const double centre = coarse.value(cb[static_cast<std::size_t>(i)]) / h;
      const long c = std::lround(centre);
      const long span = static_cast<long>(window_cells) * ratio;
      auto& w = window[static_cast<std::size_t>(i)];
      w.push_back(0);
      for (long j = std::max(lo_step, c - span); j <= std::min(max_units, c + span); ++j) w.push_back(j);
    }
    fine_best = fine.search(window);
  } else {
    GridSearch g{h, beta, s, K};
    std::vector<std::vector<long>> cand(static_cast<std::size_t>(K - 1), full_candidates(beta, h));
    fine_best = g.search(cand);
  }

  GridSearch g{h, beta, s, K};
  VectorXd y(K);
  double used = 0.0;
  for (int i = 0; i < K - 1; ++i) {
    y(i) = g.value(fine_best[static_cast<std::size_t>(i)]);
    used += y(i);
  }
  y(K - 1) = 1.0 - used;
  VectorXd out(K);
  for (int i = 0; i < K; ++i) out(perm[static_cast<std::size_t>(i)]) = y(i);
  return out;
}

CheckReport check_bounded_diff_sum(std::span<const double> series, double M) {
  CheckReport r;
  r.name = "bounded-diff-sum";
  r.tolerance = kBoundedDiffTol;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t n = 0; n < series.size(); ++n) {
    const double x = series[n] / M;
    sum += x;
    sum_sq += x * x;
    r.observe((4.0 * sum * std::sqrt(sum) - sum_sq) / std::max(1.0, sum_sq), static_cast<long long>(n + 1));
  }
  return r;
}

CheckReport check_bounded_diff_reverse(std::span<const double> series, double M) {
  CheckReport r;
  r.name = "bounded-diff-reverse";
  r.tolerance = kBoundedDiffTol;
  double sum_sq = 0.0;
  for (std::size_t n = 0; n < series.size(); ++n) {
    const double x = series[n] / M;
    sum_sq += x * x;
    const double floor = x * x * x / 3.0;
    r.observe((sum_sq - floor) / std::max(1.0, sum_sq), static_cast<long long>(n + 1));
  }
  return r;
}

double drift_slack(const QueueVector& q_prev, const VectorXd& arrivals, double service_a, int action,
                   const QueueVector& q_new, double M) {
  // With d = Q_t - Q_{t-1} and r = A_t - S_t 1_{a_t}, the slack
  // RHS - LHS equals (K+1)M^2/2 - sum_i (d_i^2/2 + Q_{t-1,i}(d_i - r_i)),
  // which avoids differencing two large squared norms.
  const Eigen::Index K = q_prev.size();
  double excess = 0.0;
  for (Eigen::Index i = 0; i < K; ++i) {
    const double d = q_new(i) - q_prev(i);
    const double r = arrivals(i) - (i == action ? service_a : 0.0);
    excess += 0.5 * d * d + q_prev(i) * (d - r);
  }
  return 0.5 * static_cast<double>(K + 1) * M * M - excess;
}

double unused_service_inner(const QueueVector& q_prev, const VectorXd& arrivals, double service_a, int action,
                            const QueueVector& q_new) {
  double inner = 0.0;
  for (Eigen::Index i = 0; i < q_prev.size(); ++i) {
    const double u = std::max(-q_prev(i) - arrivals(i) + (i == action ? service_a : 0.0), 0.0);
    inner += q_new(i) * u;
  }
  return inner;
}

SamplePathMonitor::SamplePathMonitor(int K, double M, bool bounded_increments)
    : K_(K), M_(M), bounded_(bounded_increments), sum_x_(VectorXd::Zero(K)), sum_x2_(VectorXd::Zero(K)) {
  drift_.name = "drift";
  drift_.tolerance = kDriftTol;
  orthogonality_.name = "unused-service";
  orthogonality_.tolerance = kOrthogonalityTol;
  bounded_diff_.name = "bounded-diff-sum";
  bounded_diff_.tolerance = kBoundedDiffTol;
  bounded_diff_reverse_.name = "bounded-diff-reverse";
  bounded_diff_reverse_.tolerance = kBoundedDiffTol;
}

void SamplePathMonitor::step(long long t, const QueueVector& q_prev, const VectorXd& arrivals, double service_a,
                             int action, const QueueVector& q_new) {
  orthogonality_.observe(0.0 - std::abs(unused_service_inner(q_prev, arrivals, service_a, action, q_new)), t);
  if (!bounded_) return;
  drift_.observe(drift_slack(q_prev, arrivals, service_a, action, q_new, M_), t);
  for (int i = 0; i < K_; ++i) {
    const double x = q_new(i) / M_;
    sum_x_(i) += x;
    sum_x2_(i) += x * x;
    const double s = sum_x_(i), s2 = sum_x2_(i);
    const double scale = std::max(1.0, s2);
    bounded_diff_.observe((4.0 * s * std::sqrt(s) - s2) / scale, t, i);
    bounded_diff_reverse_.observe((s2 - x * x * x / 3.0) / scale, t, i);
  }
}

std::vector<CheckReport> SamplePathMonitor::reports() const {
  if (!bounded_) return {orthogonality_};
  return {drift_, orthogonality_, bounded_diff_, bounded_diff_reverse_};
}

namespace {

void require_full_resolution(const RunRecord& record, const char* who) {
  if (!record.full_resolution() || record.arrivals.rows() != record.horizon)
    throw std::invalid_argument(fmt::format("{}: record must hold full-resolution queue and arrival traces", who));
}

} // namespace

CheckReport check_drift_inequality(const RunRecord& record, double M, int K) {
  require_full_resolution(record, "check_drift_inequality");
  if (record.K != K) throw std::invalid_argument("check_drift_inequality: K does not match the record");
  CheckReport r;
  r.name = "drift";
  r.tolerance = kDriftTol;
  QueueVector q_prev = QueueVector::Zero(K);
  for (long long t = 1; t <= record.horizon; ++t) {
    const QueueVector q_new = record.queues.row(t - 1).transpose();
    const VectorXd a = record.arrivals.row(t - 1).transpose();
    const auto idx = static_cast<std::size_t>(t - 1);
    r.observe(drift_slack(q_prev, a, record.service[idx], record.action[idx], q_new, M), t);
    q_prev = q_new;
  }
  return r;
}

CheckReport check_unused_service(const RunRecord& record) {
  require_full_resolution(record, "check_unused_service");
  CheckReport r;
  r.name = "unused-service";
  r.tolerance = kOrthogonalityTol;
  QueueVector q_prev = QueueVector::Zero(record.K);
  for (long long t = 1; t <= record.horizon; ++t) {
    const QueueVector q_new = record.queues.row(t - 1).transpose();
    const VectorXd a = record.arrivals.row(t - 1).transpose();
    const auto idx = static_cast<std::size_t>(t - 1);
    r.observe(0.0 - std::abs(unused_service_inner(q_prev, a, record.service[idx], record.action[idx], q_new)), t);
    q_prev = q_new;
  }
  return r;
}

std::vector<CheckReport> check_bounded_diff_record(const RunRecord& record, double M) {
  require_full_resolution(record, "check_bounded_diff_record");
  CheckReport fwd, rev;
  for (int i = 0; i < record.K; ++i) {
    std::vector<double> column(static_cast<std::size_t>(record.horizon));
    for (long long t = 0; t < record.horizon; ++t) column[static_cast<std::size_t>(t)] = record.queues(t, i);
    CheckReport f = check_bounded_diff_sum(column, M);
    CheckReport b = check_bounded_diff_reverse(column, M);
    if (f.index >= 0) f.queue = i;
    if (b.index >= 0) b.queue = i;
    fwd = i == 0 ? f : merge_reports(fwd, f);
    rev = i == 0 ? b : merge_reports(rev, b);
  }
  if (record.K == 0) return {};
  return {fwd, rev};
}

ReferencePolicy lp_bisection_oracle(const RatePair& rates, double tol) {
  const Eigen::Index K = rates.lambda.size();
  if (rates.sigma.size() != K || K == 0) throw std::invalid_argument("lp_bisection_oracle: dimension mismatch");
  if ((rates.sigma.array() <= 0).any()) throw std::invalid_argument("lp_bisection_oracle: sigma must be positive");
  auto load = [&](double eps) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < K; ++i) total += std::max(rates.lambda(i) + eps, 0.0) / rates.sigma(i);
    return total;
  };
  double lo = -rates.lambda.maxCoeff();
  double hi = rates.sigma.maxCoeff();
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (load(mid) <= 1.0 ? lo : hi) = mid;
  }
  ReferencePolicy out;
  out.eps = lo;
  out.theta.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) out.theta(i) = std::max(rates.lambda(i) + lo, 0.0) / rates.sigma(i);
  const double mass = out.theta.sum();
  if (mass > 0) out.theta /= mass;
  out.feasible = out.eps > 0;
  return out;
}

VectorXd exp3s_regret_probe(const BanditInstance& instance, long long T, std::uint64_t seed, const ProbeParams& params) {
  const Eigen::Index K = instance.means.size();
  if (K == 0) throw std::invalid_argument("exp3s_regret_probe: no arms");
  if (T < 1) throw std::invalid_argument("exp3s_regret_probe: T must be >= 1");
  StepParams<double> step;
  step.gamma = params.gamma;
  step.beta = params.beta;
  step.eta = params.eta.value_or(params.gamma / static_cast<double>(K));
  step.explore_dir = uniform_action(K);
  validate(step);

  const std::uint64_t key = stream_key({seed, static_cast<std::uint64_t>(Purpose::Probe)});
  auto learner = LearnerState<double>::uniform(K);
  VectorXd counts = VectorXd::Zero(K);
  for (long long t = 1; t <= T; ++t) {
    CounterRng rng(key, static_cast<std::uint64_t>(t));
    const VectorXd p = sampling_distribution(learner, step);
    const Arm a = sample_action(p, rng);
    const double reward = rng.uniform() < instance.means(a) ? 1.0 : 0.0;
    learner = feed_reward(learner, step, a, reward);
    counts(a) += 1.0;
  }
  return counts / static_cast<double>(T);
}

} // namespace qsched
