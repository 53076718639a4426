#include <gtest/gtest.h>

#include "qsched/sim.hpp"

using namespace qsched;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

RowMatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  RowMatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) m.row(i++) = vec(row).transpose();
  return m;
}

PolicyDescriptor desc(const std::string& name, double delta = 0.0) {
  PolicyDescriptor d;
  d.name = name;
  d.delta = delta;
  return d;
}

EnvironmentSpec five_queue_spec(long long T) {
  EnvironmentSpec s;
  s.K = 5;
  s.horizon = T;
  s.arrival.rates = vec({0.25, 0.2, 0.15, 0.1, 0.05});
  s.service.rates = vec({0.9, 0.85, 0.8, 0.59, 0.39});
  return s;
}

// Two queues driven by fixed arrival and service traces.
EnvironmentSpec trace_spec() {
  EnvironmentSpec s;
  s.K = 2;
  s.horizon = 10;
  s.arrival.kind = ProcessKind::Trace;
  s.arrival.trace = rows({{1, 1}, {1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 0}, {0, 0}, {0, 1}, {1, 1}, {0, 0}});
  s.service.kind = ProcessKind::Trace;
  s.service.trace = rows({{1, 1}, {1, 0}, {0, 1}, {1, 1}, {1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, 1}, {1, 1}});
  return s;
}

} // namespace

TEST(AdvanceQueue, Examples) {
  QueueVector out;
  advance_queue(vec({5}), vec({2}), vec({3}), 0, out);
  EXPECT_EQ(out, vec({4}));
  advance_queue(vec({1}), vec({0}), vec({3}), 0, out);
  EXPECT_EQ(out, vec({0}));
  advance_queue(vec({5, 7}), vec({1, 1}), vec({2, 2}), 0, out);
  EXPECT_EQ(out, vec({4, 8}));
  StepSample s{vec({1, 1}), vec({2, 2}), {}};
  EXPECT_EQ(advance_queue(vec({5, 7}), s, 1), vec({6, 6}));
  EXPECT_THROW(advance_queue(vec({5, 7}), s, 2), std::out_of_range);
}

TEST(RunOnce, EmptyHorizon) {
  const Environment env(five_queue_spec(0));
  const RunRecord rec = run_once(env, desc("softmw"), 1);
  EXPECT_EQ(rec.horizon, 0);
  EXPECT_TRUE(rec.action.empty());
  EXPECT_TRUE(rec.total_q.empty());
}

TEST(RunOnce, ZeroArrivalsKeepQueuesEmpty) {
  EnvironmentSpec s = five_queue_spec(500);
  s.arrival.rates.setZero();
  const Environment env(s);
  for (const auto& name : policy_roster()) {
    PolicyDescriptor d = desc(name, 0.5);
    if (name == "softmw-plus") d.alpha = 15.0;
    const RunRecord rec = run_once(env, d, 3);
    for (double q : rec.total_q) ASSERT_EQ(q, 0.0) << name;
    for (const auto& c : rec.checks) EXPECT_TRUE(c.passed) << name << " " << c.name;
  }
}

TEST(RunOnce, HandComputedTraceFixture) {
  const Environment env(trace_spec());
  const RunRecord rec = run_once(env, desc("maxweight-gt"), 0);
  const std::vector<Arm> actions{0, 0, 1, 1, 0, 1, 0, 0, 1, 0};
  const RowMatrixXd q = rows({{0, 1}, {0, 1}, {0, 1}, {1, 1}, {0, 1}, {1, 0}, {0, 0}, {0, 1}, {1, 1}, {0, 1}});
  EXPECT_EQ(rec.action, actions);
  EXPECT_EQ(rec.queues, q);
  EXPECT_EQ(rec.total_q, (std::vector<double>{1, 1, 1, 2, 1, 1, 0, 1, 2, 1}));
  EXPECT_EQ(rec.queue_at(0), VectorXd::Zero(2));
  EXPECT_EQ(rec.queue_at(4), vec({1, 1}));
  for (const auto& c : rec.checks) EXPECT_TRUE(c.passed) << c.name;
}

TEST(RunOnce, Downsampling) {
  const Environment env(five_queue_spec(1000));
  RunOptions o;
  o.stride = 7;
  const RunRecord rec = run_once(env, desc("maxweight"), 3, o);
  const RunRecord full = run_once(env, desc("maxweight"), 3);
  ASSERT_EQ(rec.queues.rows(), 1000 / 7);
  EXPECT_FALSE(rec.full_resolution());
  EXPECT_THROW(rec.queue_at(5), std::logic_error);
  for (Eigen::Index r = 0; r < rec.queues.rows(); ++r) EXPECT_EQ(rec.queues.row(r), full.queues.row((r + 1) * 7 - 1));
  EXPECT_EQ(rec.total_q.size(), 1000u);
}

TEST(RunOnce, ChecksCanBeDisabled) {
  const Environment env(five_queue_spec(100));
  RunOptions o;
  o.checks = false;
  EXPECT_TRUE(run_once(env, desc("ssmw"), 1, o).checks.empty());
  EXPECT_EQ(run_once(env, desc("ssmw"), 1).checks.size(), 4u);
}

TEST(RunOnce, Replay) {
  const Environment env(five_queue_spec(3000));
  const RunRecord a = run_once(env, desc("ssmw", 0.1), 8);
  const RunRecord b = run_once(env, desc("ssmw", 0.1), 8);
  EXPECT_EQ(a.action, b.action);
  EXPECT_EQ(a.queues, b.queues);
  EXPECT_EQ(a.gamma, b.gamma);
  const RunRecord c = run_once(env, desc("ssmw", 0.1), 9);
  EXPECT_NE(a.action, c.action);
}

TEST(RunOnce, CommonRandomNumbersShareArrivals) {
  const Environment env(five_queue_spec(500));
  RunOptions a, b;
  a.policy_id = 0;
  b.policy_id = 3;
  EXPECT_NE(run_once(env, desc("maxweight"), 1, a).arrivals, run_once(env, desc("softmw"), 1, b).arrivals);
  a.common_random_numbers = b.common_random_numbers = true;
  EXPECT_EQ(run_once(env, desc("maxweight"), 1, a).arrivals, run_once(env, desc("softmw"), 1, b).arrivals);
}

TEST(Replicate, SingleReplicationMeanIsTheSeries) {
  const Environment env(five_queue_spec(800));
  const ScenarioResult r = replicate(env, {desc("softmw", 0.5)}, 1, 4);
  ASSERT_EQ(r.policies.size(), 1u);
  EXPECT_EQ(r.policies[0].mean, r.policies[0].series[0]);
  EXPECT_EQ(r.policies[0].policy.label, "SoftMW-0.5");
}

TEST(Replicate, DeterministicTraceHasZeroVariance) {
  const Environment env(trace_spec());
  const ScenarioResult r = replicate(env, {desc("maxweight-gt")}, 2, 0);
  EXPECT_EQ(r.policies[0].series[0], r.policies[0].series[1]);
  EXPECT_EQ(r.policies[0].mean, r.policies[0].series[0]);
}

TEST(Replicate, MeanOfTwoSeeds) {
  const Environment env(five_queue_spec(600));
  const ScenarioResult r = replicate(env, {desc("lp-randomized")}, 2, 0);
  const RunRecord a = run_once(env, desc("lp-randomized"), 0);
  const RunRecord b = run_once(env, desc("lp-randomized"), 1);
  EXPECT_EQ(r.policies[0].series[0], a.total_q);
  EXPECT_EQ(r.policies[0].series[1], b.total_q);
  for (std::size_t t = 0; t < 600; ++t) EXPECT_DOUBLE_EQ(r.policies[0].mean[t], 0.5 * (a.total_q[t] + b.total_q[t]));
}

TEST(Replicate, IndependentOfThreadCount) {
  EnvironmentSpec s = five_queue_spec(2000);
  s.service.kind = ProcessKind::Ar1Bernoulli;
  const Environment env(s);
  const std::vector<PolicyDescriptor> pols{desc("maxweight"), desc("ssmw", 0.1), desc("softmw", 0.0)};
  ReplicateOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const ScenarioResult a = replicate(env, pols, 3, 10, one);
  const ScenarioResult b = replicate(env, pols, 3, 10, many);
  for (std::size_t p = 0; p < pols.size(); ++p) {
    EXPECT_EQ(a.policies[p].series, b.policies[p].series);
    EXPECT_EQ(a.policies[p].mean, b.policies[p].mean);
    EXPECT_EQ(a.policies[p].final_window_mean, b.policies[p].final_window_mean);
  }
}

TEST(Replicate, CallbackSeesEveryCell) {
  const Environment env(five_queue_spec(100));
  ReplicateOptions o;
  o.threads = 3;
  int calls = 0;
  o.on_record = [&](std::size_t, int, const RunRecord& rec) {
    ++calls;
    EXPECT_EQ(rec.queues.rows(), 100);
  };
  replicate(env, {desc("maxweight"), desc("ssmw")}, 3, 0, o);
  EXPECT_EQ(calls, 6);
}

TEST(Replicate, RejectsZeroReplications) {
  const Environment env(five_queue_spec(10));
  EXPECT_THROW(replicate(env, {desc("maxweight")}, 0, 0), std::invalid_argument);
}

TEST(WindowMean, Bounds) {
  std::vector<double> s(20);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i + 1);
  // Last 10%: t = 19, 20.
  EXPECT_DOUBLE_EQ(final_window_mean(s), 19.5);
  // t in (9, 10].
  EXPECT_DOUBLE_EQ(window_mean(s, 0.45, 0.5), 10.0);
  EXPECT_DOUBLE_EQ(window_mean(s, 0.0, 1.0), 10.5);
}
