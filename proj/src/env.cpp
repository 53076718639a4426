#include "qsched/env.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace qsched {

namespace {

// Heavy-tailed samples are B * Y with B ~ Bernoulli(q) and Y ~ Lomax(shape
// alpha + 1, scale 0.9 M), so E[Y^alpha] = (0.9 M)^alpha and E[B Y] = rate.
constexpr double kHeavyTailScale = 0.9;

double heavy_tail_scale(double M) { return kHeavyTailScale * M; }

double heavy_tail_mix(double rate, double alpha, double M) { return rate * alpha / heavy_tail_scale(M); }

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void validate_process(const ProcessSpec& p, const EnvironmentSpec& spec, const std::string& field) {
  const auto K = static_cast<Eigen::Index>(spec.K);
  if (p.kind == ProcessKind::Trace) {
    require(p.trace.cols() == K, field + ".trace: expected " + std::to_string(K) + " columns");
    require(p.trace.rows() >= spec.horizon, field + ".trace: fewer rows than the horizon");
    require(p.trace.allFinite() && (p.trace.array() >= 0).all(), field + ".trace: values must be finite and >= 0");
    require((p.trace.array() <= spec.M).all(), field + ".trace: values must not exceed M");
    return;
  }
  require(p.rates.size() == K, field + ".rates: expected " + std::to_string(K) + " entries");
  require(p.rates.allFinite() && (p.rates.array() >= 0).all(), field + ".rates: must be finite and >= 0");
  switch (p.kind) {
  case ProcessKind::Bernoulli:
  case ProcessKind::Ar1Bernoulli:
    require((p.rates.array() <= 1).all(), field + ".rates: Bernoulli rates must lie in [0, 1]");
    if (p.kind == ProcessKind::Ar1Bernoulli) {
      require(std::isfinite(p.phi), field + ".phi: must be finite");
      require(p.sd > 0 && std::isfinite(p.sd), field + ".sd: must be positive");
    }
    break;
  case ProcessKind::HeavyTailed:
    require(p.alpha >= 2 && std::isfinite(p.alpha), field + ".alpha: moment order must be >= 2");
    for (Eigen::Index i = 0; i < K; ++i)
      require(heavy_tail_mix(p.rates(i), p.alpha, spec.M) <= 1.0,
              field + ".rates: rate * alpha must not exceed 0.9 M for heavy-tailed processes");
    break;
  case ProcessKind::Trace:
    break;
  }
}

double draw(const ProcessSpec& p, double rate, double M, long long t, Eigen::Index i, CounterRng& rng) {
  switch (p.kind) {
  case ProcessKind::Bernoulli:
  case ProcessKind::Ar1Bernoulli:
    return rng.uniform() < rate ? M : 0.0;
  case ProcessKind::HeavyTailed: {
    const double u_mix = rng.uniform();
    const double u_tail = 1.0 - rng.uniform(); // (0, 1]
    if (u_mix >= heavy_tail_mix(rate, p.alpha, M)) return 0.0;
    return heavy_tail_scale(M) * (std::pow(u_tail, -1.0 / (p.alpha + 1.0)) - 1.0);
  }
  case ProcessKind::Trace:
    return p.trace(t - 1, i);
  }
  return 0.0;
}

} // namespace

std::string to_string(ProcessKind kind) {
  switch (kind) {
  case ProcessKind::Bernoulli: return "bernoulli";
  case ProcessKind::Ar1Bernoulli: return "ar1-bernoulli";
  case ProcessKind::HeavyTailed: return "heavy-tailed";
  case ProcessKind::Trace: return "trace";
  }
  return "?";
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "bernoulli") return ProcessKind::Bernoulli;
  if (name == "ar1-bernoulli") return ProcessKind::Ar1Bernoulli;
  if (name == "heavy-tailed") return ProcessKind::HeavyTailed;
  if (name == "trace") return ProcessKind::Trace;
  throw std::invalid_argument("unknown process kind '" + name + "'");
}

void validate(const EnvironmentSpec& spec) {
  require(spec.K >= 1, "K: must be >= 1");
  require(spec.M > 0 && std::isfinite(spec.M), "M: must be positive");
  require(spec.horizon >= 0, "horizon: must be >= 0");
  require(spec.arrival.kind != ProcessKind::Ar1Bernoulli, "arrival.kind: AR(1) noise applies to service only");
  validate_process(spec.arrival, spec, "arrival");
  validate_process(spec.service, spec, "service");
}

bool has_bounded_increments(const EnvironmentSpec& spec) {
  return spec.arrival.kind != ProcessKind::HeavyTailed && spec.service.kind != ProcessKind::HeavyTailed;
}

ReferencePolicy solve_reference_lp(const RatePair& rates) {
  const Eigen::Index k = rates.sigma.size();
  if (k == 0 || rates.lambda.size() != k) throw std::invalid_argument("solve_reference_lp: dimension mismatch");
  if ((rates.sigma.array() <= 0).any()) throw std::domain_error("solve_reference_lp: every sigma_i must be > 0");

  std::vector<bool> active(static_cast<std::size_t>(k), true);
  double eps = 0.0;
  for (;;) {
    double load = 0.0, inv = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      load += rates.lambda(i) / rates.sigma(i);
      inv += 1.0 / rates.sigma(i);
    }
    eps = (1.0 - load) / inv;
    bool changed = false;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (active[static_cast<std::size_t>(i)] && rates.lambda(i) + eps < 0) {
        active[static_cast<std::size_t>(i)] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }

  ReferencePolicy out;
  out.eps = eps;
  out.feasible = eps > 0;
  out.theta = VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i)
    if (active[static_cast<std::size_t>(i)]) out.theta(i) = (rates.lambda(i) + eps) / rates.sigma(i);
  return out;
}

NoiseState ar1_advance(const NoiseState& state, CounterRng& rng) {
  NoiseState next = state;
  for (Eigen::Index i = 0; i < next.zeta.size(); ++i)
    next.zeta(i) = state.phi * state.zeta(i) + state.sd * rng.gaussian();
  return next;
}

RatePair effective_rates(const RatePair& base, const NoiseState& noise) {
  RatePair out;
  out.lambda = base.lambda;
  out.sigma = (base.sigma + noise.zeta).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

RowMatrixXd generate_noise_trajectory(const EnvironmentSpec& spec) {
  if (spec.service.kind != ProcessKind::Ar1Bernoulli)
    throw std::invalid_argument("generate_noise_trajectory: service process is not AR(1)-noised");
  RowMatrixXd traj(spec.horizon, spec.K);
  CounterRng rng(stream_key({spec.noise_seed, static_cast<std::uint64_t>(Purpose::Noise)}));
  NoiseState state{VectorXd::Zero(spec.K), spec.service.phi, spec.service.sd};
  for (long long t = 0; t < spec.horizon; ++t) {
    state = ar1_advance(state, rng);
    traj.row(t) = state.zeta.transpose();
  }
  return traj;
}

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xFF) << (8 * (7 - b));
    return r;
  }
  return v;
}

} // namespace

void write_noise_file(const RowMatrixXd& trajectory, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (Eigen::Index t = 0; t < trajectory.rows(); ++t)
    for (Eigen::Index i = 0; i < trajectory.cols(); ++i) {
      const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(trajectory(t, i)));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

RowMatrixXd read_noise_file(const std::filesystem::path& path, int K) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t row_bytes = static_cast<std::size_t>(K) * 8;
  if (K <= 0 || bytes.size() % row_bytes != 0)
    throw std::runtime_error(path.string() + ": size is not a whole number of rows");
  RowMatrixXd traj(static_cast<Eigen::Index>(bytes.size() / row_bytes), K);
  for (Eigen::Index n = 0; n < traj.size(); ++n) {
    std::uint64_t bits;
    std::memcpy(&bits, bytes.data() + 8 * n, 8);
    traj.data()[n] = std::bit_cast<double>(to_le(bits));
  }
  return traj;
}

std::uint64_t trajectory_digest(const RowMatrixXd& trajectory) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Eigen::Index n = 0; n < trajectory.size(); ++n) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(trajectory.data()[n]));
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

RatePair base_rates(const EnvironmentSpec& spec) {
  auto means = [&](const ProcessSpec& p) -> VectorXd {
    if (p.kind != ProcessKind::Trace) return p.rates;
    if (spec.horizon == 0 || p.trace.rows() == 0) return VectorXd::Zero(spec.K);
    return p.trace.topRows(std::max<long long>(spec.horizon, 1)).colwise().mean().transpose();
  };
  return RatePair{means(spec.arrival), means(spec.service)};
}

namespace {

void draw_vectors(const EnvironmentSpec& spec, long long t, const RatePair& rates, CounterRng& rng, VectorXd& A,
                  VectorXd& S) {
  if (t < 1 || t > spec.horizon) throw std::out_of_range("sample_step: slot outside [1, T]");
  const Eigen::Index K = spec.K;
  A.resize(K);
  S.resize(K);
  for (Eigen::Index i = 0; i < K; ++i) A(i) = draw(spec.arrival, rates.lambda(i), spec.M, t, i, rng);
  for (Eigen::Index i = 0; i < K; ++i) S(i) = draw(spec.service, rates.sigma(i), spec.M, t, i, rng);
}

} // namespace

void sample_step(const EnvironmentSpec& spec, long long t, const RatePair& rates, CounterRng& rng, StepSample& out) {
  draw_vectors(spec, t, rates, rng, out.A, out.S);
  out.rates = rates;
}

StepSample sample_step(const EnvironmentSpec& spec, long long t, const RatePair& rates, CounterRng& rng) {
  StepSample out;
  sample_step(spec, t, rates, rng, out);
  return out;
}

Environment::Environment(EnvironmentSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  base_ = base_rates(spec_);
  if (spec_.service.kind == ProcessKind::Ar1Bernoulli)
    noise_ = std::make_shared<const RowMatrixXd>(generate_noise_trajectory(spec_));
}

Environment::Environment(EnvironmentSpec spec, std::shared_ptr<const RowMatrixXd> noise)
    : spec_(std::move(spec)), noise_(std::move(noise)) {
  validate(spec_);
  base_ = base_rates(spec_);
  if (spec_.service.kind == ProcessKind::Ar1Bernoulli) {
    if (!noise_ || noise_->rows() < spec_.horizon || noise_->cols() != spec_.K)
      throw std::invalid_argument("Environment: noise trajectory does not cover the horizon");
  }
}

void Environment::rates_at(long long t, RatePair& out) const {
  if (spec_.arrival.kind == ProcessKind::Trace) out.lambda = spec_.arrival.trace.row(t - 1).transpose();
  else out.lambda = base_.lambda;
  switch (spec_.service.kind) {
  case ProcessKind::Trace: out.sigma = spec_.service.trace.row(t - 1).transpose(); break;
  case ProcessKind::Ar1Bernoulli:
    out.sigma = (base_.sigma + noise_->row(t - 1).transpose()).cwiseMax(0.0).cwiseMin(1.0);
    break;
  default: out.sigma = base_.sigma; break;
  }
}

RatePair Environment::rates_at(long long t) const {
  RatePair out;
  rates_at(t, out);
  return out;
}

void Environment::sample(long long t, CounterRng& rng, StepSample& out) const {
  rates_at(t, out.rates);
  draw_vectors(spec_, t, out.rates, rng, out.A, out.S);
}

StepSample Environment::sample(long long t, CounterRng& rng) const {
  StepSample out;
  sample(t, rng, out);
  return out;
}

} // namespace qsched
