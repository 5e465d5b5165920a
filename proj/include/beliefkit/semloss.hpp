#ifndef BELIEFKIT_SEMLOSS_HPP_
#define BELIEFKIT_SEMLOSS_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "beliefkit/formula.hpp"

namespace beliefkit {

template <typename Scalar>
using BeliefVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kDefaultClamp = 1e-7;

class UnsatisfiableConstraint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The satisfying assignments of a formula over a fixed variable count,
/// compiled once and reused across belief vectors.
struct SatisfyingSet {
  int num_vars = 0;
  std::vector<ModelMask> models;

  static SatisfyingSet compile(const Formula& f, int num_vars = -1,
                               int max_vars = kDefaultMaxVars) {
    if (num_vars < 0) num_vars = f.variable_count();
    return SatisfyingSet{num_vars, satisfying_masks(f, num_vars, max_vars)};
  }

  bool empty() const { return models.empty(); }
};

template <typename Scalar>
struct LossResult {
  Scalar probability;
  Scalar loss;  // nats
  BeliefVector<Scalar> gradient;  // d loss / d p
};

template <typename Derived>
BeliefVector<typename Derived::Scalar> clamp_beliefs(const Eigen::MatrixBase<Derived>& p,
                                                     typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  return p.derived().cwiseMax(Scalar(eps)).cwiseMin(Scalar(1) - Scalar(eps));
}

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const std::vector<Scalar>& terms) {
  if (terms.empty()) return -std::numeric_limits<Scalar>::infinity();
  Scalar hi = terms.front();
  for (Scalar t : terms) hi = std::max(hi, t);
  if (!std::isfinite(hi)) return hi;
  Scalar acc(0);
  for (Scalar t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

template <typename Scalar>
struct LogFactors {
  BeliefVector<Scalar> log_true;
  BeliefVector<Scalar> log_false;
};

template <typename Derived>
LogFactors<typename Derived::Scalar> log_factors(const SatisfyingSet& sat,
                                                 const Eigen::MatrixBase<Derived>& beliefs,
                                                 typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (beliefs.size() != sat.num_vars) {
    throw std::invalid_argument("belief vector length " + std::to_string(beliefs.size()) +
                                " does not match " + std::to_string(sat.num_vars) +
                                " formula variables");
  }
  const BeliefVector<Scalar> p = clamp_beliefs(beliefs, eps);
  return {p.array().log().matrix(), (Scalar(1) - p.array()).log().matrix()};
}

template <typename Scalar>
Scalar log_weight(ModelMask z, const LogFactors<Scalar>& f) {
  Scalar w(0);
  for (Eigen::Index j = 0; j < f.log_true.size(); ++j) {
    w += ((z >> j) & 1u) ? f.log_true[j] : f.log_false[j];
  }
  return w;
}

}  // namespace detail

/// ln P(formula) under independent Bernoulli beliefs, i.e. the log of the
/// weighted model count. Returns -inf for an empty model set.
template <typename Derived>
typename Derived::Scalar log_constraint_probability(
    const SatisfyingSet& sat, const Eigen::MatrixBase<Derived>& beliefs,
    typename Derived::Scalar eps = typename Derived::Scalar(kDefaultClamp)) {
  using Scalar = typename Derived::Scalar;
  const auto f = detail::log_factors(sat, beliefs, eps);
  std::vector<Scalar> terms;
  terms.reserve(sat.models.size());
  for (ModelMask z : sat.models) terms.push_back(detail::log_weight(z, f));
  return detail::log_sum_exp(terms);
}

/// P(formula) = Σ_{z ⊨ formula} Π_j p_j^[z_j] (1 - p_j)^[¬z_j].
template <typename Derived>
typename Derived::Scalar constraint_probability(
    const SatisfyingSet& sat, const Eigen::MatrixBase<Derived>& beliefs,
    typename Derived::Scalar eps = typename Derived::Scalar(kDefaultClamp)) {
  if (sat.empty()) throw UnsatisfiableConstraint("constraint has no satisfying assignment");
  return std::exp(log_constraint_probability(sat, beliefs, eps));
}

template <typename Derived>
typename Derived::Scalar constraint_probability(
    const Formula& f, const Eigen::MatrixBase<Derived>& beliefs,
    typename Derived::Scalar eps = typename Derived::Scalar(kDefaultClamp)) {
  return constraint_probability(SatisfyingSet::compile(f, static_cast<int>(beliefs.size())),
                                beliefs, eps);
}

/// -ln P(formula) and its gradient with respect to the (clamped) beliefs.
///
/// dP/dp_j = P(formula | z_j = true) - P(formula | z_j = false), both read
/// off the same model set by dropping variable j's factor.
template <typename Derived>
LossResult<typename Derived::Scalar> semantic_loss(
    const SatisfyingSet& sat, const Eigen::MatrixBase<Derived>& beliefs,
    typename Derived::Scalar eps = typename Derived::Scalar(kDefaultClamp)) {
  using Scalar = typename Derived::Scalar;
  if (sat.empty()) throw UnsatisfiableConstraint("constraint has no satisfying assignment");
  const auto f = detail::log_factors(sat, beliefs, eps);

  std::vector<Scalar> weights;
  weights.reserve(sat.models.size());
  for (ModelMask z : sat.models) weights.push_back(detail::log_weight(z, f));
  const Scalar log_p = detail::log_sum_exp(weights);

  const int n = sat.num_vars;
  BeliefVector<Scalar> grad(n);
  std::vector<Scalar> pos, neg;
  for (int j = 0; j < n; ++j) {
    pos.clear();
    neg.clear();
    for (std::size_t k = 0; k < sat.models.size(); ++k) {
      if ((sat.models[k] >> j) & 1u) {
        pos.push_back(weights[k] - f.log_true[j]);
      } else {
        neg.push_back(weights[k] - f.log_false[j]);
      }
    }
    const Scalar given_true = std::exp(detail::log_sum_exp(pos) - log_p);
    const Scalar given_false = std::exp(detail::log_sum_exp(neg) - log_p);
    grad[j] = -(given_true - given_false);
  }
  return {std::exp(log_p), -log_p, std::move(grad)};
}

template <typename Derived>
LossResult<typename Derived::Scalar> semantic_loss(
    const Formula& f, const Eigen::MatrixBase<Derived>& beliefs,
    typename Derived::Scalar eps = typename Derived::Scalar(kDefaultClamp)) {
  return semantic_loss(SatisfyingSet::compile(f, static_cast<int>(beliefs.size())), beliefs, eps);
}

}  // namespace beliefkit

#endif  // BELIEFKIT_SEMLOSS_HPP_
