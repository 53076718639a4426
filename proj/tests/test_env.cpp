#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "qsched/env.hpp"
#include "qsched/verify.hpp"

using namespace qsched;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

RatePair five_queue_rates() {
  return {vec({0.25, 0.2, 0.15, 0.1, 0.05}), vec({0.9, 0.85, 0.8, 0.59, 0.39})};
}

EnvironmentSpec bernoulli_spec(int K, long long T, double lambda, double sigma) {
  EnvironmentSpec s;
  s.K = K;
  s.horizon = T;
  s.arrival.rates = VectorXd::Constant(K, lambda);
  s.service.rates = VectorXd::Constant(K, sigma);
  return s;
}

EnvironmentSpec ar1_spec(long long T, std::uint64_t seed) {
  EnvironmentSpec s;
  s.K = 5;
  s.horizon = T;
  s.noise_seed = seed;
  s.arrival.rates = five_queue_rates().lambda;
  s.service.kind = ProcessKind::Ar1Bernoulli;
  s.service.rates = five_queue_rates().sigma;
  return s;
}

} // namespace

TEST(ReferenceLp, FiveQueueInstance) {
  const ReferencePolicy ref = solve_reference_lp(five_queue_rates());
  EXPECT_NEAR(ref.eps, 2.2207e-4, 1e-7);
  const double theta[] = {0.27802, 0.23556, 0.18778, 0.16987, 0.12877};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ref.theta(i), theta[i], 5e-6);
  EXPECT_TRUE(ref.feasible);
}

TEST(ReferenceLp, EmptyLoad) {
  const ReferencePolicy ref = solve_reference_lp({vec({0, 0}), vec({1, 1})});
  EXPECT_NEAR(ref.eps, 0.5, 1e-15);
  EXPECT_NEAR(ref.theta(0), 0.5, 1e-15);
  EXPECT_NEAR(ref.theta(1), 0.5, 1e-15);
}

TEST(ReferenceLp, OverloadedInstanceIsFlaggedInfeasible) {
  const RatePair r{vec({0.6, 0.6}), vec({1, 1})};
  const ReferencePolicy ref = solve_reference_lp(r);
  EXPECT_NEAR(ref.eps, -0.1, 1e-12);
  EXPECT_FALSE(ref.feasible);
  EXPECT_NEAR(lp_bisection_oracle(r).eps, ref.eps, 1e-8);
}

TEST(ReferenceLp, ConstraintsTightAndThetaOnSimplex) {
  const RatePair r = five_queue_rates();
  const ReferencePolicy ref = solve_reference_lp(r);
  EXPECT_NEAR(ref.theta.sum(), 1.0, 1e-12);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ref.theta(i) * r.sigma(i), r.lambda(i) + ref.eps, 1e-12);
}

TEST(ReferenceLp, AgreesWithBisectionOracle) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int K = 1 + trial % 6;
    RatePair r{VectorXd(K), VectorXd(K)};
    for (int i = 0; i < K; ++i) {
      r.lambda(i) = u(gen) * (trial % 2 ? 0.3 : 1.0);
      r.sigma(i) = 0.05 + 0.95 * u(gen);
    }
    const ReferencePolicy a = solve_reference_lp(r);
    const ReferencePolicy b = lp_bisection_oracle(r);
    EXPECT_NEAR(a.eps, b.eps, 1e-8) << "trial " << trial;
    EXPECT_NEAR(a.theta.sum(), 1.0, 1e-12);
    EXPECT_GE(a.theta.minCoeff(), 0.0);
  }
}

TEST(Ar1, ZeroStateZeroInnovation) {
  NoiseState s{VectorXd::Zero(3), 0.999, 0.0};
  CounterRng rng(1);
  EXPECT_TRUE(ar1_advance(s, rng).zeta.isZero());
}

TEST(Ar1, DecayWithoutInnovation) {
  NoiseState s{vec({1.0}), 0.999, 0.0};
  CounterRng rng(1);
  EXPECT_DOUBLE_EQ(ar1_advance(s, rng).zeta(0), 0.999);
}

TEST(EffectiveRates, Clamping) {
  const RatePair base{vec({0.1, 0.1, 0.1}), vec({0.9, 0.9, 0.39})};
  EXPECT_EQ(effective_rates(base, NoiseState{VectorXd::Zero(3)}).sigma, base.sigma);
  const RatePair r = effective_rates(base, NoiseState{vec({0.0, 0.5, -0.5})});
  EXPECT_DOUBLE_EQ(r.sigma(0), 0.9);
  EXPECT_DOUBLE_EQ(r.sigma(1), 1.0);
  EXPECT_DOUBLE_EQ(r.sigma(2), 0.0);
  EXPECT_EQ(r.lambda, base.lambda);
}

TEST(NoiseTrajectory, DeterministicPerSeed) {
  const RowMatrixXd a = generate_noise_trajectory(ar1_spec(5000, 3));
  const RowMatrixXd b = generate_noise_trajectory(ar1_spec(5000, 3));
  const RowMatrixXd c = generate_noise_trajectory(ar1_spec(5000, 4));
  EXPECT_EQ(a, b);
  EXPECT_EQ(trajectory_digest(a), trajectory_digest(b));
  EXPECT_NE(a, c);
  EXPECT_EQ(generate_noise_trajectory(ar1_spec(0, 3)).rows(), 0);
}

TEST(NoiseTrajectory, StationaryStandardDeviation) {
  const RowMatrixXd z = generate_noise_trajectory(ar1_spec(200000, 8));
  // Stationary sd of the AR(1) recursion: sd / sqrt(1 - phi^2).
  const double expected = 0.005 / std::sqrt(1.0 - 0.999 * 0.999);
  double sum_sq = 0.0;
  long n = 0;
  for (Eigen::Index t = 10000; t < z.rows(); ++t)
    for (Eigen::Index i = 0; i < z.cols(); ++i) {
      sum_sq += z(t, i) * z(t, i);
      ++n;
    }
  EXPECT_NEAR(std::sqrt(sum_sq / n), expected, 0.15 * expected);
}

TEST(NoiseTrajectory, FileRoundTrip) {
  const RowMatrixXd z = generate_noise_trajectory(ar1_spec(300, 9));
  const auto path = std::filesystem::temp_directory_path() / "qsched_noise_roundtrip.bin";
  write_noise_file(z, path);
  EXPECT_EQ(std::filesystem::file_size(path), 300u * 5u * 8u);
  EXPECT_EQ(read_noise_file(path, 5), z);
  std::filesystem::remove(path);
}

TEST(NoiseTrajectory, SharedAcrossReplications) {
  const Environment env(ar1_spec(1000, 2));
  const Environment copy(env.spec(), env.noise());
  EXPECT_EQ(trajectory_digest(*env.noise()), trajectory_digest(*copy.noise()));
  EXPECT_EQ(env.rates_at(500).sigma, copy.rates_at(500).sigma);
  for (long long t = 1; t <= 1000; t += 37) {
    const VectorXd s = env.rates_at(t).sigma;
    EXPECT_GE(s.minCoeff(), 0.0);
    EXPECT_LE(s.maxCoeff(), 1.0);
  }
}

TEST(SampleStep, DegenerateRates) {
  const EnvironmentSpec s = bernoulli_spec(2, 100, 1.0, 0.0);
  const RatePair r = base_rates(s);
  for (long long t = 1; t <= 100; ++t) {
    CounterRng rng(7, static_cast<std::uint64_t>(t));
    const StepSample x = sample_step(s, t, r, rng);
    EXPECT_EQ(x.A, VectorXd::Ones(2));
    EXPECT_EQ(x.S, VectorXd::Zero(2));
  }
}

TEST(SampleStep, BernoulliMean) {
  const EnvironmentSpec s = bernoulli_spec(1, 1000000, 0.3, 0.5);
  const RatePair r = base_rates(s);
  const std::uint64_t key = stream_key({42, static_cast<std::uint64_t>(Purpose::Arrival)});
  double sum = 0.0;
  StepSample x;
  for (long long t = 1; t <= s.horizon; ++t) {
    CounterRng rng(key, static_cast<std::uint64_t>(t));
    sample_step(s, t, r, rng, x);
    ASSERT_TRUE(x.A(0) == 0.0 || x.A(0) == 1.0);
    sum += x.A(0);
  }
  EXPECT_NEAR(sum / static_cast<double>(s.horizon), 0.3, 0.0015);
}

TEST(SampleStep, BernoulliScalesWithM) {
  EnvironmentSpec s = bernoulli_spec(3, 50, 0.5, 0.5);
  s.M = 2.5;
  const RatePair r = base_rates(s);
  for (long long t = 1; t <= 50; ++t) {
    CounterRng rng(3, static_cast<std::uint64_t>(t));
    const StepSample x = sample_step(s, t, r, rng);
    for (int i = 0; i < 3; ++i) {
      EXPECT_TRUE(x.A(i) == 0.0 || x.A(i) == 2.5);
      EXPECT_TRUE(x.S(i) == 0.0 || x.S(i) == 2.5);
    }
  }
}

TEST(SampleStep, HeavyTailedMoment) {
  EnvironmentSpec s = bernoulli_spec(1, 1000000, 0.3, 0.5);
  s.arrival.kind = ProcessKind::HeavyTailed;
  s.arrival.alpha = 2.0;
  const RatePair r = base_rates(s);
  const std::uint64_t key = stream_key({17, static_cast<std::uint64_t>(Purpose::Arrival)});
  double sum = 0.0, moment = 0.0, largest = 0.0;
  for (long long t = 1; t <= s.horizon; ++t) {
    CounterRng rng(key, static_cast<std::uint64_t>(t));
    const StepSample x = sample_step(s, t, r, rng);
    ASSERT_GE(x.A(0), 0.0);
    sum += x.A(0);
    moment += std::pow(x.A(0), s.arrival.alpha);
    largest = std::max(largest, x.A(0));
  }
  const double n = static_cast<double>(s.horizon);
  EXPECT_LE(moment / n, 1.1 * std::pow(s.M, s.arrival.alpha));
  EXPECT_NEAR(sum / n, 0.3, 0.01);
  // Unbounded support: samples well beyond M occur.
  EXPECT_GT(largest, 5.0 * s.M);
  EXPECT_FALSE(has_bounded_increments(s));
}

TEST(SampleStep, SlotOutsideHorizon) {
  const EnvironmentSpec s = bernoulli_spec(1, 10, 0.3, 0.5);
  CounterRng rng(1);
  EXPECT_THROW(sample_step(s, 0, base_rates(s), rng), std::out_of_range);
  EXPECT_THROW(sample_step(s, 11, base_rates(s), rng), std::out_of_range);
}

TEST(EnvironmentSpecValidation, RejectsBadFields) {
  EnvironmentSpec s = bernoulli_spec(2, 10, 0.3, 0.5);
  EXPECT_NO_THROW(validate(s));
  auto bad = s;
  bad.arrival.rates(0) = 1.5;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = s;
  bad.K = 0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = s;
  bad.M = 0;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = s;
  bad.arrival.kind = ProcessKind::HeavyTailed;
  bad.arrival.alpha = 1.5;
  EXPECT_THROW(validate(bad), std::invalid_argument);
  bad = s;
  bad.service.rates = vec({0.5});
  EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(ProcessKindNames, RoundTrip) {
  for (auto k : {ProcessKind::Bernoulli, ProcessKind::Ar1Bernoulli, ProcessKind::HeavyTailed, ProcessKind::Trace})
    EXPECT_EQ(process_kind_from_string(to_string(k)), k);
  EXPECT_THROW(process_kind_from_string("poisson"), std::invalid_argument);
}
