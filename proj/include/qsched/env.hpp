#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "qsched/rng.hpp"
#include "qsched/types.hpp"

namespace qsched {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct RatePair {
  VectorXd lambda; // arrival means, jobs/slot
  VectorXd sigma;  // service means, jobs/slot
};

struct NoiseState {
  VectorXd zeta;
  double phi = 0.999;
  double sd = 0.005;
};

enum class ProcessKind { Bernoulli, Ar1Bernoulli, HeavyTailed, Trace };

std::string to_string(ProcessKind kind);
ProcessKind process_kind_from_string(const std::string& name);

struct ProcessSpec {
  ProcessKind kind = ProcessKind::Bernoulli;
  VectorXd rates;     // base means; unused for Trace
  double phi = 0.999; // Ar1Bernoulli
  double sd = 0.005;  // Ar1Bernoulli
  double alpha = 2.0; // HeavyTailed moment order
  RowMatrixXd trace;  // Trace: row t-1 holds the slot-t values

  bool operator==(const ProcessSpec&) const = default;
};

struct EnvironmentSpec {
  int K = 1;
  double M = 1.0;
  long long horizon = 0;
  ProcessSpec arrival;
  ProcessSpec service;
  std::uint64_t noise_seed = 0;
  std::string noise_file; // optional audit dump of the AR(1) trajectory

  bool operator==(const EnvironmentSpec&) const = default;
};

// Throws std::invalid_argument naming the offending field.
void validate(const EnvironmentSpec& spec);

// True when every arrival and service sample lies in [0, M].
bool has_bounded_increments(const EnvironmentSpec& spec);

struct StepSample {
  VectorXd A;
  VectorXd S;
  RatePair rates;
};

struct ReferencePolicy {
  MixedAction theta;
  double eps = 0.0;
  bool feasible = false; // eps > 0: rates lie strictly inside the capacity region
};

// max eps s.t. theta in simplex, lambda_i + eps <= theta_i sigma_i. Closed
// form: on the active set I, eps = (1 - sum_I lambda_i/sigma_i) / sum_I 1/sigma_i
// and theta_i = (lambda_i + eps)/sigma_i; queues with lambda_i + eps < 0 drop
// out with theta_i = 0.
ReferencePolicy solve_reference_lp(const RatePair& rates);

NoiseState ar1_advance(const NoiseState& state, CounterRng& rng);

// sigma clamped to [0, 1] after adding the noise; lambda unchanged.
RatePair effective_rates(const RatePair& base, const NoiseState& noise);

// Row t-1 holds zeta_t for t = 1..T, all generated from spec.noise_seed.
RowMatrixXd generate_noise_trajectory(const EnvironmentSpec& spec);

// Flat little-endian float64, row-major [t][i].
void write_noise_file(const RowMatrixXd& trajectory, const std::filesystem::path& path);
RowMatrixXd read_noise_file(const std::filesystem::path& path, int K);

// FNV-1a over the raw little-endian bytes.
std::uint64_t trajectory_digest(const RowMatrixXd& trajectory);

// Base (pre-noise) rates: the configured means, or column means of a trace.
RatePair base_rates(const EnvironmentSpec& spec);

StepSample sample_step(const EnvironmentSpec& spec, long long t, const RatePair& rates, CounterRng& rng);
void sample_step(const EnvironmentSpec& spec, long long t, const RatePair& rates, CounterRng& rng, StepSample& out);

// Binds a spec to its (shared, read-only) noise trajectory and answers the
// per-slot rate question.
class Environment {
public:
  explicit Environment(EnvironmentSpec spec);
  Environment(EnvironmentSpec spec, std::shared_ptr<const RowMatrixXd> noise);

  const EnvironmentSpec& spec() const { return spec_; }
  const RatePair& base() const { return base_; }
  const std::shared_ptr<const RowMatrixXd>& noise() const { return noise_; }

  // Means in force during slot t (1-based).
  RatePair rates_at(long long t) const;
  void rates_at(long long t, RatePair& out) const;

  StepSample sample(long long t, CounterRng& rng) const;
  void sample(long long t, CounterRng& rng, StepSample& out) const;

private:
  EnvironmentSpec spec_;
  RatePair base_;
  std::shared_ptr<const RowMatrixXd> noise_;
};

} // namespace qsched
