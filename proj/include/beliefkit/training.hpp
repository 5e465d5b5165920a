#ifndef BELIEFKIT_TRAINING_HPP_
#define BELIEFKIT_TRAINING_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beliefkit/belief.hpp"
#include "beliefkit/kb.hpp"
#include "beliefkit/semloss.hpp"

namespace beliefkit {

enum class Objective { kSft, kLoco };
enum class OptimizerKind { kSgd, kAdamW };

std::string to_string(Objective o);
std::string to_string(OptimizerKind o);
Objective parse_objective(const std::string& name);
OptimizerKind parse_optimizer(const std::string& name);

/// Defaults: 5 epochs at a fixed learning rate of 3e-4 with decoupled weight
/// decay 1e-2 (AdamW, betas 0.9/0.999).
struct TrainConfig {
  int epochs = 5;
  double learning_rate = 3e-4;
  double weight_decay = 1e-2;
  int batch_size = 64;
  std::uint64_t seed = 0;
  Objective objective = Objective::kLoco;
  double clamp_epsilon = kDefaultClamp;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Weight of an additive cross-entropy term on the labelled training facts
  /// when the objective is loco.
  double sft_weight = 0.0;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  double mean_loss = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// A grounded constraint resolved against a model vocabulary, with its
/// satisfying assignments (evidence included) enumerated once.
struct CompiledConstraint {
  std::vector<FactIndex> variables;
  SatisfyingSet models;
};

CompiledConstraint compile_constraint(const GroundedConstraint& g, const Vocabulary& vocab);
std::vector<CompiledConstraint> compile_constraints(std::span<const GroundedConstraint> grounded,
                                                    const Vocabulary& vocab);

/// Mean binary cross-entropy of the clamped beliefs against the labels.
double sft_loss(const BeliefModel& model, std::span<const Fact> batch,
                double eps = kDefaultClamp);
/// Mean semantic loss of each constraint's formula with evidence conjoined.
double loco_loss(const BeliefModel& model, std::span<const GroundedConstraint> batch,
                 double eps = kDefaultClamp);
double loco_loss(const BeliefModel& model, std::span<const CompiledConstraint> batch,
                 double eps = kDefaultClamp);

/// Adds the gradient of the batch-mean loss into `grad`; returns the mean loss.
double accumulate_sft(const BeliefModel& model, std::span<const FactIndex> facts,
                      std::span<const std::uint8_t> labels, double eps, double scale,
                      GradientBuffer& grad);
double accumulate_loco(const BeliefModel& model, std::span<const CompiledConstraint> batch,
                       double eps, double scale, GradientBuffer& grad);

/// Decoupled-weight-decay optimizer over a flat parameter vector. A
/// coordinate is updated (and decayed) only once it has received a gradient.
class Optimizer {
 public:
  Optimizer(const TrainConfig& config, Eigen::Index size);
  void step(Eigen::VectorXd& params, const GradientBuffer& grad);

 private:
  TrainConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::vector<std::uint8_t> active_;
  long long t_ = 0;
};

struct TrainingData {
  /// Labelled facts; used by sft and by the optional sft term of loco.
  const FactSet* facts = nullptr;
  /// Grounded constraints with evidence; used by loco.
  const std::vector<GroundedConstraint>* constraints = nullptr;
};

/// Runs `epochs` shuffled passes of mini-batch steps and returns the per-epoch
/// mean loss. Deterministic given config.seed.
TrainHistory train(const TrainConfig& config, const TrainingData& data, BeliefModel& model);

}  // namespace beliefkit

#endif  // BELIEFKIT_TRAINING_HPP_
