#pragma once

// EXP3.S+ learner: mirror descent with the negative-entropy regularizer on a
// floored simplex, plus explicit exploration mixing and importance-weighted
// bandit feedback.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qsched/rng.hpp"
#include "qsched/types.hpp"

namespace qsched {

template <typename Scalar>
struct StepParams {
  Scalar eta{1};   // learning rate
  Scalar beta{0};  // implicit exploration floor
  Scalar gamma{0}; // explicit exploration rate
  Vector<Scalar> explore_dir;
};

template <typename Scalar>
void validate(const StepParams<Scalar>& params) {
  const auto k = params.explore_dir.size();
  if (k == 0) throw std::invalid_argument("StepParams: empty exploration direction");
  if (!(params.eta > 0) || !std::isfinite(static_cast<double>(params.eta)))
    throw std::invalid_argument("StepParams: eta must be positive and finite");
  if (params.beta < 0 || params.beta * Scalar(k) > Scalar(1) + Scalar(kFloorTol))
    throw std::invalid_argument("StepParams: beta outside [0, 1/K]");
  if (params.gamma < 0 || params.gamma > Scalar(0.5) + Scalar(kFloorTol))
    throw std::invalid_argument("StepParams: gamma outside [0, 1/2]");
  if (!is_mixed_action(params.explore_dir))
    throw std::invalid_argument("StepParams: exploration direction not on the simplex");
}

// Bregman projection of `scaled` (x_i * exp(eta * g_i)) onto
// { y in simplex : y_i >= beta }. Coordinates pinned to the floor are set to
// beta exactly; the rest keep their proportions to `scaled`.
template <typename Derived>
Vector<typename Derived::Scalar>
project_floored_simplex(const Eigen::MatrixBase<Derived>& scaled, typename Derived::Scalar beta) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index k = scaled.size();
  if (k == 0) throw std::invalid_argument("project_floored_simplex: empty input");
  for (Eigen::Index i = 0; i < k; ++i) {
    const Scalar v = scaled(i);
    if (!std::isfinite(static_cast<double>(v)))
      throw std::overflow_error("project_floored_simplex: non-finite input; rescale before exponentiation");
    if (!(v > 0)) throw std::invalid_argument("project_floored_simplex: entries must be positive");
  }
  if (!(beta >= 0)) throw std::invalid_argument("project_floored_simplex: negative floor");
  const Scalar slack = Scalar(1) - beta * Scalar(k);
  if (slack < -Scalar(kFloorTol))
    throw std::domain_error("project_floored_simplex: infeasible floor (beta * K > 1)");

  Vector<Scalar> out(k);
  // beta = 1/K leaves a single feasible point.
  if (slack <= Scalar(kFloorTol)) {
    out.setConstant(beta);
    return out;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return scaled(a) < scaled(b); });

  // tail[i] = sum of the sorted values from position i on.
  std::vector<Scalar> tail(static_cast<std::size_t>(k) + 1, Scalar(0));
  for (Eigen::Index i = k - 1; i >= 0; --i)
    tail[static_cast<std::size_t>(i)] = tail[static_cast<std::size_t>(i) + 1] + scaled(order[static_cast<std::size_t>(i)]);

  Eigen::Index boundary = k - 1;
  for (Eigen::Index i = 0; i < k; ++i) {
    const Scalar mass = Scalar(1) - beta * Scalar(i);
    const Scalar smallest_free = mass * scaled(order[static_cast<std::size_t>(i)]) / tail[static_cast<std::size_t>(i)];
    if (smallest_free >= beta) {
      boundary = i;
      break;
    }
  }

  const Scalar mass = Scalar(1) - beta * Scalar(boundary);
  const Scalar denom = tail[static_cast<std::size_t>(boundary)];
  for (Eigen::Index pos = 0; pos < k; ++pos) {
    const Eigen::Index idx = order[static_cast<std::size_t>(pos)];
    out(idx) = pos < boundary ? beta : mass * scaled(idx) / denom;
  }
  return out;
}

// p = (1 - gamma) x + gamma e
template <typename DerivedX, typename DerivedE>
Vector<typename DerivedX::Scalar> mix_exploration(const Eigen::MatrixBase<DerivedX>& x,
                                                  typename DerivedX::Scalar gamma,
                                                  const Eigen::MatrixBase<DerivedE>& e) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != e.size()) throw std::invalid_argument("mix_exploration: dimension mismatch");
  if (gamma < 0 || gamma > Scalar(0.5) + Scalar(kFloorTol))
    throw std::invalid_argument("mix_exploration: gamma outside [0, 1/2]");
  return (Scalar(1) - gamma) * x + gamma * e;
}

// Inverse CDF on a single uniform draw u in [0, 1): the first index whose
// cumulative probability exceeds u.
template <typename Derived>
Arm sample_action(const Eigen::MatrixBase<Derived>& p, double u) {
  double cumulative = 0.0;
  Arm last_positive = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p(i));
    if (pi > 0) last_positive = static_cast<Arm>(i);
    cumulative += pi;
    if (u < cumulative) return static_cast<Arm>(i);
  }
  return last_positive;
}

template <typename Derived>
Arm sample_action(const Eigen::MatrixBase<Derived>& p, CounterRng& rng) {
  return sample_action(p, rng.uniform());
}

// One-hot g~ with g~_a = reward / p_a.
template <typename Derived>
Vector<typename Derived::Scalar> importance_weighted_estimate(const Eigen::MatrixBase<Derived>& p, Arm action,
                                                              typename Derived::Scalar reward) {
  Vector<typename Derived::Scalar> g = Vector<typename Derived::Scalar>::Zero(p.size());
  if (reward != 0) g(action) = reward / p(action);
  return g;
}

template <typename Scalar>
struct LearnerState {
  Vector<Scalar> x;
  std::optional<StepParams<Scalar>> last_params;
  long long round = 0;

  static LearnerState uniform(Eigen::Index k) {
    return LearnerState{Vector<Scalar>::Constant(k, Scalar(1) / Scalar(k)), std::nullopt, 0};
  }
};

template <typename Scalar>
Vector<Scalar> sampling_distribution(const LearnerState<Scalar>& state, const StepParams<Scalar>& params) {
  return mix_exploration(state.x, params.gamma, params.explore_dir);
}

inline constexpr double kRewardSlack = 1e-9;
inline constexpr double kMaxExponent = 700.0;

// The largest reward the learner accepts on `action` under `params`.
template <typename Scalar>
Scalar reward_bound(const StepParams<Scalar>& params, Arm action) {
  return params.gamma * params.explore_dir(action) / params.eta;
}

template <typename Scalar>
LearnerState<Scalar> feed_reward(const LearnerState<Scalar>& state, const StepParams<Scalar>& params, Arm action,
                                 Scalar reward) {
  validate(params);
  const auto k = state.x.size();
  if (params.explore_dir.size() != k) throw std::invalid_argument("feed_reward: dimension mismatch");
  if (action < 0 || action >= k) throw std::out_of_range("feed_reward: action out of range");
  if (!(reward >= 0) || !std::isfinite(static_cast<double>(reward)))
    throw std::invalid_argument("feed_reward: reward must be finite and nonnegative");
  if (state.last_params && params.beta > state.last_params->beta + Scalar(kFloorTol))
    throw InvariantViolation("feed_reward: exploration floor increased within a learner instance");

  const Scalar bound = reward_bound(params, action);
  using std::max;
  if (reward > bound + Scalar(kRewardSlack) * max(Scalar(1), bound))
    throw FeedbackTooLarge("feed_reward: reward exceeds gamma * e_a / eta");

  LearnerState<Scalar> next;
  next.round = state.round + 1;
  next.last_params = params;

  Scalar exponent = 0;
  if (reward > 0) {
    const Vector<Scalar> p = sampling_distribution(state, params);
    exponent = params.eta * reward / p(action);
    if (exponent > Scalar(kMaxExponent)) throw std::overflow_error("feed_reward: exponent overflow");
    if (exponent > Scalar(1) + Scalar(kRewardSlack))
      throw InvariantViolation("feed_reward: eta * g~ exceeds 1");
  }
  // Shift by the maximum exponent (the played one): the played coordinate
  // keeps x_a, every other coordinate is scaled by exp(-exponent).
  Vector<Scalar> scaled = state.x;
  if (exponent > 0) {
    using std::exp;
    const Scalar damp = exp(-exponent);
    for (Eigen::Index i = 0; i < k; ++i)
      if (i != action) scaled(i) *= damp;
  }
  next.x = project_floored_simplex(scaled, params.beta);
  return next;
}

} // namespace qsched
