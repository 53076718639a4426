#include "qsched/sched.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace qsched {

namespace {

constexpr double kRateTol = 1e-12;

std::string vec_str(const VectorXd& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += fmt::format("{}{:.17g}", i ? ", " : "", v(i));
  return s + ")";
}

// Runtime guard on the exploration rate.
void check_rates(const StepParams<double>& params, long long t) {
  if (!(params.gamma <= 0.5 + kRateTol))
    throw InvariantViolation(fmt::format("gamma = {:.17g} exceeds 1/2 at slot {}", params.gamma, t));
  if (!(params.beta * static_cast<double>(params.explore_dir.size()) <= 1.0 + kRateTol))
    throw InvariantViolation(fmt::format("beta = {:.17g} exceeds 1/K at slot {}", params.beta, t));
  if (!(params.eta > 0) || !std::isfinite(params.eta))
    throw InvariantViolation(fmt::format("eta = {:.17g} not positive at slot {}", params.eta, t));
}

void fill_diag(Diagnostics& d, const StepParams<double>& params) {
  d.gamma = params.gamma;
  d.eta = params.eta;
  d.beta = params.beta;
  d.fed = std::numeric_limits<double>::quiet_NaN();
  d.epoch_start = false;
}

class MaxWeightPolicy final : public Policy {
public:
  MaxWeightPolicy(VectorXd sigma_est, bool ground_truth) : sigma_(std::move(sigma_est)), gt_(ground_truth) {}

  Arm decide(const QueueVector& q_prev, const SlotContext& ctx, CounterRng&) override {
    if (gt_) {
      if (!ctx.true_rates) throw std::logic_error("maxweight-gt needs the true service rates");
      return maxweight_decide(q_prev, ctx.true_rates->sigma);
    }
    return maxweight_decide(q_prev, sigma_);
  }

  void observe(Arm, double, const QueueVector&) override {}

  std::string describe() const override {
    return gt_ ? "maxweight-gt" : "maxweight sigma_est=" + vec_str(sigma_);
  }

private:
  VectorXd sigma_;
  bool gt_;
};

class LpRandomizedPolicy final : public Policy {
public:
  explicit LpRandomizedPolicy(MixedAction theta) : theta_(std::move(theta)) {}

  Arm decide(const QueueVector&, const SlotContext&, CounterRng& rng) override {
    return lp_randomized_decide(theta_, rng);
  }

  void observe(Arm, double, const QueueVector&) override {}

  std::string describe() const override { return "lp-randomized theta=" + vec_str(theta_); }

private:
  MixedAction theta_;
};

class SoftMWPolicy final : public Policy {
public:
  SoftMWPolicy(PolicyConfig cfg, bool plus) : cfg_(std::move(cfg)), plus_(plus), state_(softmw_initial_state(cfg_)) {}

  Arm decide(const QueueVector& q_prev, const SlotContext& ctx, CounterRng& rng) override {
    state_.t = ctx.t;
    state_.sum_q2 += q_prev.squaredNorm();
    params_ = plus_ ? softmw_plus_params(state_, q_prev, ctx.t, cfg_) : softmw_params(state_, q_prev, ctx.t, cfg_);
    check_rates(params_, ctx.t);
    // Schedules must be nonincreasing along the path.
    if (have_prev_) {
      if (params_.eta > prev_eta_ * (1.0 + kRateTol))
        throw InvariantViolation(fmt::format("eta increased at slot {}: {:.17g} -> {:.17g}", ctx.t, prev_eta_, params_.eta));
      if (params_.beta > prev_beta_ * (1.0 + kRateTol))
        throw InvariantViolation(fmt::format("beta increased at slot {}", ctx.t));
    }
    prev_eta_ = params_.eta;
    prev_beta_ = params_.beta;
    have_prev_ = true;

    fill_diag(diag_, params_);
    q_prev_ = q_prev;
    return sample_action(sampling_distribution(state_.learner, params_), rng);
  }

  void observe(Arm action, double service, const QueueVector& q_new) override {
    const double s = plus_ ? softmw_plus_clip(service, state_.t, cfg_) : service;
    const double g = q_prev_(action) * s;
    state_.learner = feed_reward(state_.learner, params_, action, g);
    diag_.fed = g;
    if (plus_) state_.L = update_increment_bound(state_.L, q_prev_, q_new);
  }

  std::string describe() const override {
    return fmt::format("{} t={} sum_q2={:.17g} L={:.17g} x={} eta={:.17g} beta={:.17g} gamma={:.17g} e={}",
                       plus_ ? "softmw-plus" : "softmw", state_.t, state_.sum_q2, state_.L, vec_str(state_.learner.x),
                       params_.eta, params_.beta, params_.gamma, vec_str(params_.explore_dir));
  }

private:
  PolicyConfig cfg_;
  bool plus_;
  SoftMWState state_;
  StepParams<double> params_;
  QueueVector q_prev_;
  double prev_eta_ = 0.0;
  double prev_beta_ = 0.0;
  bool have_prev_ = false;
};

class SSMWPolicy final : public Policy {
public:
  SSMWPolicy(PolicyConfig cfg, bool plus) : cfg_(std::move(cfg)), plus_(plus) {}

  Arm decide(const QueueVector& q_prev, const SlotContext& ctx, CounterRng& rng) override {
    bool started = false;
    if (!epoch_ || epoch_->tau > epoch_->m) {
      epoch_ = ssmw_maybe_start_epoch(epoch_, q_prev, ctx.t, cfg_, plus_);
      started = true;
    }
    t_ = ctx.t;
    params_ = ssmw_params(*epoch_, q_prev, epoch_->tau, cfg_);
    check_rates(params_, ctx.t);
    fill_diag(diag_, params_);
    diag_.epoch_start = started;
    q_prev_ = q_prev;
    return sample_action(sampling_distribution(epoch_->learner, params_), rng);
  }

  void observe(Arm action, double service, const QueueVector&) override {
    const double g = plus_ ? ssmw_plus_clip(*epoch_, action, q_prev_(action), service, cfg_) : q_prev_(action) * service;
    epoch_->learner = feed_reward(epoch_->learner, params_, action, g);
    diag_.fed = g;
    ++epoch_->tau;
  }

  std::string describe() const override {
    if (!epoch_) return plus_ ? "ssmw-plus (no epoch)" : "ssmw (no epoch)";
    return fmt::format("{} t={} T0={} m={} tau={} beta={:.17g} eta={:.17g} Q_T0={} x={} gamma={:.17g}",
                       plus_ ? "ssmw-plus" : "ssmw", t_, epoch_->T0, epoch_->m, epoch_->tau, epoch_->beta, epoch_->eta,
                       vec_str(epoch_->q_at_T0), vec_str(epoch_->learner.x), params_.gamma);
  }

private:
  PolicyConfig cfg_;
  bool plus_;
  std::optional<SSMWEpochState> epoch_;
  StepParams<double> params_;
  QueueVector q_prev_;
  long long t_ = 0;
};

} // namespace

const std::vector<std::string>& policy_roster() {
  static const std::vector<std::string> roster{"maxweight", "maxweight-gt", "lp-randomized", "softmw",
                                               "ssmw",      "softmw-plus",  "ssmw-plus"};
  return roster;
}

bool is_bandit_policy(const std::string& name) {
  return name == "softmw" || name == "ssmw" || name == "softmw-plus" || name == "ssmw-plus";
}

std::string default_label(const PolicyDescriptor& desc) {
  if (desc.name == "maxweight") return "MaxWeight";
  if (desc.name == "maxweight-gt") return "MaxWeightGT";
  if (desc.name == "lp-randomized") return "Randomized";
  if (desc.name == "softmw") return fmt::format("SoftMW-{}", desc.delta);
  if (desc.name == "ssmw") return fmt::format("SSMW-{}", desc.delta);
  if (desc.name == "softmw-plus") return fmt::format("SoftMW+-{}", desc.delta);
  if (desc.name == "ssmw-plus") return fmt::format("SSMW+-{}", desc.delta);
  return desc.name;
}

void validate(const PolicyDescriptor& desc) {
  const auto& roster = policy_roster();
  if (std::find(roster.begin(), roster.end(), desc.name) == roster.end())
    throw std::invalid_argument("policy.name: unknown policy '" + desc.name + "'");
  if (!(desc.M > 0) || !std::isfinite(desc.M)) throw std::invalid_argument("policy.M: must be positive");
  if (!(desc.delta >= 0) || !std::isfinite(desc.delta)) throw std::invalid_argument("policy.delta: must be >= 0");
  if (desc.name == "softmw-plus") {
    if (!desc.alpha || !(*desc.alpha > 14))
      throw std::invalid_argument("policy.alpha: softmw-plus requires alpha > 14");
    if (!(desc.delta > 0 && desc.delta <= 0.5))
      throw std::invalid_argument("policy.delta: softmw-plus requires 0 < delta <= 1/2");
  } else if (desc.alpha) {
    throw std::invalid_argument("policy.alpha: only softmw-plus takes a moment order");
  }
}

std::unique_ptr<Policy> make_policy(const PolicyDescriptor& desc, const Environment& env) {
  validate(desc);
  const PolicyConfig cfg{desc.M, env.spec().K, desc.delta, desc.alpha};
  if (desc.name == "maxweight") return std::make_unique<MaxWeightPolicy>(env.base().sigma, false);
  if (desc.name == "maxweight-gt") return std::make_unique<MaxWeightPolicy>(env.base().sigma, true);
  if (desc.name == "lp-randomized") return std::make_unique<LpRandomizedPolicy>(solve_reference_lp(env.base()).theta);
  if (desc.name == "softmw") return std::make_unique<SoftMWPolicy>(cfg, false);
  if (desc.name == "softmw-plus") return std::make_unique<SoftMWPolicy>(cfg, true);
  if (desc.name == "ssmw") return std::make_unique<SSMWPolicy>(cfg, false);
  if (desc.name == "ssmw-plus") return std::make_unique<SSMWPolicy>(cfg, true);
  throw std::invalid_argument("unknown policy '" + desc.name + "'");
}

Arm maxweight_decide(const QueueVector& q_prev, const VectorXd& sigma_est) {
  if (q_prev.size() != sigma_est.size()) throw std::invalid_argument("maxweight_decide: dimension mismatch");
  Arm best = 0;
  double best_w = q_prev(0) * sigma_est(0);
  for (Eigen::Index i = 1; i < q_prev.size(); ++i) {
    const double w = q_prev(i) * sigma_est(i);
    if (w > best_w) {
      best_w = w;
      best = static_cast<Arm>(i);
    }
  }
  return best;
}

Arm lp_randomized_decide(const MixedAction& theta, CounterRng& rng) { return sample_action(theta, rng); }

VectorXd queue_direction(const QueueVector& q) {
  const double total = q.sum();
  if (total <= 0) return uniform_action(q.size());
  return q / total;
}

SoftMWState softmw_initial_state(const PolicyConfig& cfg) {
  SoftMWState s;
  s.learner = LearnerState<double>::uniform(cfg.K);
  s.L = cfg.M;
  return s;
}

namespace {

StepParams<double> softmw_family_params(const SoftMWState& state, const QueueVector& q_prev, long long t,
                                        const PolicyConfig& cfg, double scale, double beta_power,
                                        double gamma_boost) {
  if (t < 1) throw std::invalid_argument("softmw_params: t must be >= 1");
  const double K = cfg.K;
  const double td = static_cast<double>(t);
  const double root = std::sqrt(86.0 * scale * scale * std::pow(K, 6) * std::pow(td, 1.5) + state.sum_q2);
  StepParams<double> p;
  p.beta = std::pow(td, -beta_power) / K;
  p.eta = std::pow(td, 0.25 - cfg.delta / 2) / (scale * root);
  const double l1 = q_prev.sum();
  p.explore_dir = queue_direction(q_prev);
  p.gamma = l1 > 0 ? cfg.M * gamma_boost * p.eta * l1 : 0.0;
  return p;
}

} // namespace

StepParams<double> softmw_params(const SoftMWState& state, const QueueVector& q_prev, long long t,
                                 const PolicyConfig& cfg) {
  return softmw_family_params(state, q_prev, t, cfg, cfg.M, 3.0, 1.0);
}

StepParams<double> softmw_plus_params(const SoftMWState& state, const QueueVector& q_prev, long long t,
                                      const PolicyConfig& cfg) {
  const double boost = std::pow(static_cast<double>(t), cfg.delta / 4);
  return softmw_family_params(state, q_prev, t, cfg, state.L, 4.0, boost);
}

double update_increment_bound(double L_prev, const QueueVector& q_prev, const QueueVector& q_new) {
  return std::max(L_prev, (q_new - q_prev).cwiseAbs().maxCoeff());
}

double softmw_plus_clip(double service, long long t, const PolicyConfig& cfg) {
  const double cap = cfg.M * std::pow(static_cast<double>(t), cfg.delta / 4);
  return service <= cap ? service : 0.0;
}

long long ssmw_epoch_length(const QueueVector& q_T0, double M) {
  const double inf_norm = q_T0.size() ? q_T0.cwiseAbs().maxCoeff() : 0.0;
  return std::max(static_cast<long long>(std::ceil(inf_norm / (2.0 * M))), 1LL);
}

SSMWEpochState ssmw_maybe_start_epoch(const std::optional<SSMWEpochState>& previous, const QueueVector& q_latest,
                                      long long t, const PolicyConfig& cfg, bool plus) {
  if (t < 1) throw std::invalid_argument("ssmw_maybe_start_epoch: t must be >= 1");
  if (previous && previous->tau <= previous->m)
    throw std::logic_error("ssmw_maybe_start_epoch: previous epoch still active");
  SSMWEpochState e;
  e.T0 = t - 1;
  e.m = ssmw_epoch_length(q_latest, cfg.M);
  e.tau = 1;
  e.plus = plus;
  e.q_at_T0 = q_latest;
  const double K = cfg.K;
  const double m = static_cast<double>(e.m);
  const double M = cfg.M;
  if (plus) {
    e.beta = std::pow(m, -3.0) / K;
    e.eta = 1.0 / (4.0 * M * M * M * K * std::pow(m, 1.0 + 2.0 * cfg.delta / 3.0));
  } else {
    e.beta = std::pow(m, -2.0) / K;
    e.eta = 1.0 / (6.0 * M * M * K * std::pow(m, 1.0 + cfg.delta / 2.0));
  }
  // Warm start from the previous epoch's final mixed action.
  if (previous) e.learner = LearnerState<double>{project_floored_simplex(previous->learner.x, e.beta), std::nullopt, 0};
  else e.learner = LearnerState<double>::uniform(cfg.K);
  return e;
}

StepParams<double> ssmw_params(const SSMWEpochState& epoch, const QueueVector& q_prev, long long tau,
                               const PolicyConfig& cfg) {
  if (tau < 1 || tau > epoch.m) throw std::out_of_range("ssmw_params: tau outside [1, m]");
  StepParams<double> p;
  p.eta = epoch.eta;
  p.beta = epoch.beta;
  if (epoch.plus) {
    p.explore_dir = uniform_action(cfg.K);
    const double q_inf = epoch.q_at_T0.cwiseAbs().maxCoeff();
    p.gamma = std::pow(static_cast<double>(epoch.m), cfg.delta / 3.0) * cfg.K * cfg.M * epoch.eta * q_inf;
  } else {
    const double l1 = q_prev.sum();
    p.explore_dir = queue_direction(q_prev);
    p.gamma = l1 > 0 ? cfg.M * epoch.eta * l1 : 0.0;
  }
  return p;
}

double ssmw_plus_clip(const SSMWEpochState& epoch, Arm action, double q_prev_a, double service,
                      const PolicyConfig& cfg) {
  const double g = q_prev_a * service;
  const double cap = std::pow(static_cast<double>(epoch.m), cfg.delta / 3.0) * cfg.M * epoch.q_at_T0(action);
  return g <= cap ? g : 0.0;
}

} // namespace qsched
