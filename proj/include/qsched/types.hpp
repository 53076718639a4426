#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace qsched {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using VectorXd = Vector<double>;

// A point of the probability simplex (x_t, p_t, e_t, theta).
using MixedAction = VectorXd;

// Per-type backlog Q_t at the end of a slot.
using QueueVector = VectorXd;

using Arm = int;

// Raised when a runtime invariant that the algorithms guarantee analytically
// does not hold. Always a bug, never recoverable.
class InvariantViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// The learner was fed a reward larger than eta^-1 * gamma * e_a.
class FeedbackTooLarge : public InvariantViolation {
public:
  using InvariantViolation::InvariantViolation;
};

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kFloorTol = 1e-12;

template <typename Derived>
bool is_mixed_action(const Eigen::MatrixBase<Derived>& x, double floor = 0.0) {
  using std::abs;
  if (x.size() == 0) return false;
  if (!x.allFinite()) return false;
  if ((x.array() < floor - kFloorTol).any()) return false;
  if ((x.array() < 0).any()) return false;
  return abs(static_cast<double>(x.sum()) - 1.0) <= kSimplexSumTol;
}

inline VectorXd uniform_action(Eigen::Index k) {
  return VectorXd::Constant(k, 1.0 / static_cast<double>(k));
}

} // namespace qsched
