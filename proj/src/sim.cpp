#include "qsched/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace qsched {

QueueVector advance_queue(const QueueVector& q_prev, const StepSample& sample, Arm action) {
  QueueVector out;
  advance_queue(q_prev, sample.A, sample.S, action, out);
  return out;
}

void advance_queue(const QueueVector& q_prev, const VectorXd& arrivals, const VectorXd& services, Arm action,
                   QueueVector& out) {
  const Eigen::Index K = q_prev.size();
  if (arrivals.size() != K || services.size() != K) throw std::invalid_argument("advance_queue: dimension mismatch");
  if (action < 0 || action >= K) throw std::out_of_range("advance_queue: action out of range");
  out.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) {
    const double departed = i == action ? services(i) : 0.0;
    out(i) = std::max(q_prev(i) + arrivals(i) - departed, 0.0);
  }
}

QueueVector RunRecord::queue_at(long long t) const {
  if (t == 0) return QueueVector::Zero(K);
  if (!full_resolution()) throw std::logic_error("RunRecord::queue_at: record is down-sampled");
  return queues.row(t - 1).transpose();
}

std::uint64_t decision_key(std::uint64_t seed, int policy_id) {
  return stream_key({seed, static_cast<std::uint64_t>(policy_id) + 1, static_cast<std::uint64_t>(Purpose::Decision)});
}

std::uint64_t environment_key(std::uint64_t seed, int policy_id, bool common_random_numbers) {
  const std::uint64_t pid = common_random_numbers ? 0 : static_cast<std::uint64_t>(policy_id) + 1;
  return stream_key({seed, pid, static_cast<std::uint64_t>(Purpose::Arrival)});
}

RunRecord run_once(const Environment& env, const PolicyDescriptor& desc, std::uint64_t seed,
                   const RunOptions& options) {
  const EnvironmentSpec& spec = env.spec();
  const long long T = spec.horizon;
  const int K = spec.K;
  if (options.stride < 1) throw std::invalid_argument("run_once: stride must be >= 1");

  auto policy = make_policy(desc, env);
  const bool bandit = is_bandit_policy(desc.name);

  RunRecord rec;
  rec.horizon = T;
  rec.K = K;
  rec.M = spec.M;
  rec.stride = options.stride;
  const auto n = static_cast<std::size_t>(T);
  rec.action.reserve(n);
  rec.service.reserve(n);
  rec.total_q.reserve(n);
  if (bandit) {
    rec.gamma.reserve(n);
    rec.eta.reserve(n);
    rec.beta.reserve(n);
    rec.fed.reserve(n);
  }
  if (options.keep_queue_trace) {
    rec.arrivals.resize(T / options.stride, K);
    rec.queues.resize(T / options.stride, K);
  }

  SamplePathMonitor monitor(K, spec.M, has_bounded_increments(spec));
  const std::uint64_t dkey = decision_key(seed, options.policy_id);
  const std::uint64_t ekey = environment_key(seed, options.policy_id, options.common_random_numbers);

  QueueVector q = QueueVector::Zero(K);
  QueueVector q_new(K);
  StepSample sample;
  for (long long t = 1; t <= T; ++t) {
    try {
      CounterRng env_rng(ekey, static_cast<std::uint64_t>(t));
      env.sample(t, env_rng, sample);

      CounterRng decision_rng(dkey, static_cast<std::uint64_t>(t));
      const SlotContext ctx{t, &sample.rates};
      const Arm a = policy->decide(q, ctx, decision_rng);
      if (a < 0 || a >= K) throw InvariantViolation(fmt::format("policy returned arm {}", a));

      advance_queue(q, sample.A, sample.S, a, q_new);
      const double served = sample.S(a);
      policy->observe(a, served, q_new);

      if (options.checks) monitor.step(t, q, sample.A, served, a, q_new);

      rec.action.push_back(a);
      rec.service.push_back(served);
      rec.total_q.push_back(q_new.sum());
      if (bandit) {
        const Diagnostics& d = policy->diagnostics();
        rec.gamma.push_back(d.gamma);
        rec.eta.push_back(d.eta);
        rec.beta.push_back(d.beta);
        rec.fed.push_back(d.fed);
        if (d.epoch_start) rec.epoch_starts.push_back(t);
      }
      if (options.keep_queue_trace && t % options.stride == 0) {
        const Eigen::Index row = t / options.stride - 1;
        rec.arrivals.row(row) = sample.A.transpose();
        rec.queues.row(row) = q_new.transpose();
      }
      q.swap(q_new);
    } catch (const SimulationError&) {
      throw;
    } catch (const std::exception& e) {
      const std::string state = policy->describe();
      throw SimulationError(t, state,
                            fmt::format("{} failed at slot {}: {}\n  policy state: {}",
                                        desc.label.empty() ? desc.name : desc.label, t, e.what(), state));
    }
  }
  if (options.checks) rec.checks = monitor.reports();
  return rec;
}

double window_mean(const std::vector<double>& series, double lo, double hi) {
  const double T = static_cast<double>(series.size());
  const auto begin = static_cast<std::size_t>(std::floor(lo * T + 1e-9));
  const auto end = std::min(series.size(), static_cast<std::size_t>(std::floor(hi * T + 1e-9)));
  if (end <= begin) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += series[i];
  return sum / static_cast<double>(end - begin);
}

double final_window_mean(const std::vector<double>& series) { return window_mean(series, 0.9, 1.0); }

ScenarioResult replicate(const Environment& env, const std::vector<PolicyDescriptor>& policies, int n_reps,
                         std::uint64_t base_seed, const ReplicateOptions& options) {
  if (n_reps < 1) throw std::invalid_argument("replicate: n_reps must be >= 1");
  const std::size_t P = policies.size();
  const std::size_t R = static_cast<std::size_t>(n_reps);
  const std::size_t cells = P * R;

  struct Cell {
    std::vector<double> series;
    std::vector<CheckReport> checks;
  };
  std::vector<Cell> results(cells);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cells) return;
      const std::size_t p = c / R;
      const int r = static_cast<int>(c % R);
      try {
        RunOptions ro;
        ro.checks = options.checks;
        ro.keep_queue_trace = options.keep_queue_trace || static_cast<bool>(options.on_record);
        ro.stride = options.stride;
        ro.policy_id = static_cast<int>(p);
        ro.common_random_numbers = options.common_random_numbers;
        RunRecord rec = run_once(env, policies[p], base_seed + static_cast<std::uint64_t>(r), ro);
        if (options.on_record) {
          std::lock_guard lock(callback_mutex);
          options.on_record(p, r, rec);
        }
        results[c].series = std::move(rec.total_q);
        results[c].checks = std::move(rec.checks);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(cells);
        return;
      }
    }
  };

  unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cells));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);

  ScenarioResult out;
  out.horizon = env.spec().horizon;
  out.reps = n_reps;
  for (std::size_t p = 0; p < P; ++p) {
    PolicyResult pr;
    pr.policy = policies[p];
    if (pr.policy.label.empty()) pr.policy.label = default_label(pr.policy);
    const auto T = static_cast<std::size_t>(out.horizon);
    pr.mean.assign(T, 0.0);
    std::map<std::string, CheckReport> merged;
    std::vector<std::string> order;
    for (std::size_t r = 0; r < R; ++r) {
      Cell& cell = results[p * R + r];
      for (std::size_t t = 0; t < T; ++t) pr.mean[t] += cell.series[t];
      pr.rep_final_window.push_back(final_window_mean(cell.series));
      for (const auto& c : cell.checks) {
        auto it = merged.find(c.name);
        if (it == merged.end()) {
          merged.emplace(c.name, c);
          order.push_back(c.name);
        } else {
          it->second = merge_reports(it->second, c);
        }
      }
      pr.series.push_back(std::move(cell.series));
    }
    for (double& v : pr.mean) v /= static_cast<double>(R);
    for (const auto& name : order) pr.checks.push_back(merged.at(name));
    pr.final_window_mean = final_window_mean(pr.mean);
    double sum = 0.0;
    for (double v : pr.mean) sum += v;
    pr.time_average = T ? sum / static_cast<double>(T) : 0.0;
    out.policies.push_back(std::move(pr));
  }
  return out;
}

} // namespace qsched
