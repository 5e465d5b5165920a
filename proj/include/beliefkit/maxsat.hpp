#ifndef BELIEFKIT_MAXSAT_HPP_
#define BELIEFKIT_MAXSAT_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "beliefkit/belief.hpp"
#include "beliefkit/formula.hpp"
#include "beliefkit/kb.hpp"

namespace beliefkit {

/// Inference-time belief correction for one subject: the most likely truth
/// assignment under the model's beliefs that satisfies the hard formulas.
struct CorrectionProblem {
  std::string subject;
  VarTable variables;      // property names
  Eigen::VectorXd beliefs;  // one per variable
  std::vector<Formula> hard;
};

struct MaxSatOptions {
  /// Components up to this size are searched exhaustively with no budget.
  int max_exact_vars = kDefaultMaxVars;
  /// Search-node budget per larger component before falling back.
  std::size_t node_budget = 2'000'000;
  double clamp_epsilon = 1e-7;
};

struct Correction {
  Assignment assignment;
  std::size_t violated = 0;
  double log_likelihood = 0;  // Σ_j ln p_j or ln(1 - p_j)
  /// False when a component exhausted its budget and a best-effort or
  /// greedy-repair answer was returned instead of a proven optimum.
  bool exact = true;
};

/// The problem for `subject` from its grounded constraints (evidence is not
/// used: formulas are the bare implications).
CorrectionProblem build_problem(const std::string& subject,
                                std::span<const GroundedConstraint> grounded,
                                const BeliefModel& model, double clamp_epsilon = 1e-7);

/// Minimizes (violated formulas, -log-likelihood) lexicographically; exact
/// ties go to the assignment that is lexicographically smallest with false
/// before true. The problem decomposes into independent components.
Correction correct_beliefs(const CorrectionProblem& problem, const MaxSatOptions& options = {});

/// Log-likelihood of an assignment, summed in variable order.
double assignment_log_likelihood(const Eigen::VectorXd& beliefs, const Assignment& z,
                                 double clamp_epsilon = 1e-7);
std::size_t count_violations(std::span<const Formula> formulas, const Assignment& z);

struct SubjectCorrection {
  CorrectionProblem problem;
  Correction correction;
};

/// Groups grounded constraints by subject and corrects each subject.
std::vector<SubjectCorrection> correct_all(std::span<const GroundedConstraint> grounded,
                                           const BeliefModel& model,
                                           const MaxSatOptions& options = {}, int jobs = 1);

}  // namespace beliefkit

#endif  // BELIEFKIT_MAXSAT_HPP_
