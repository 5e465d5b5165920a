#ifndef BELIEFKIT_EXPERIMENT_HPP_
#define BELIEFKIT_EXPERIMENT_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "beliefkit/belief.hpp"
#include "beliefkit/evaluation.hpp"
#include "beliefkit/kb.hpp"
#include "beliefkit/training.hpp"

namespace beliefkit {

/// Invalid configuration or arguments (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A referenced input file does not exist (exit code 2).
class MissingInput : public std::runtime_error {
 public:
  explicit MissingInput(const std::string& path)
      : std::runtime_error("no such file: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class Method { kSft, kLoco, kMaxSat, kZeroTrain };

std::string to_string(Method m);
/// Accepts sft, loco, maxsat-baseline, zero-train; throws ConfigError.
Method parse_method(const std::string& name);

struct ModelSpec {
  std::string kind = "embedding";  // tabular | embedding | provider
  int dim = 32;
  /// Saved parameters to start from instead of a fresh initialization.
  std::string parameters;
  std::string endpoint;  // exec:<command> or tcp:<host>:<port>
  double timeout_seconds = 30;
  int max_in_flight = 8;
};

struct ExperimentConfig {
  std::string train_facts;  // training distribution (calibration)
  std::string eval_facts;   // evaluation distribution (silver); optional
  std::string constraints;
  DataFormat format = DataFormat::kAuto;

  std::string split = "t1";  // t1 | t1t2
  double fraction = 0.05;    // t1t2 only

  /// The only source of randomness; split, initialization and training seeds
  /// are derived from it.
  std::uint64_t seed = 0;
  TrainConfig train;
  ModelSpec model;
  std::vector<Method> methods{Method::kLoco};
  std::string out;
  int jobs = 1;

  /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
  static ExperimentConfig from_json(std::string_view text, const std::string& base_dir = "");
  /// Every field, defaults included.
  std::string to_json() const;
  /// Throws ConfigError.
  void validate() const;
};

ExperimentConfig load_config(const std::string& path);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct GroundSummary {
  std::size_t antecedent_facts = 0;
  std::size_t consequent_facts = 0;
  std::size_t excluded_facts = 0;
  std::size_t grounded = 0;  // instantiated constraints, before evidence
  std::size_t skipped = 0;   // contradicted by evidence
};

/// Loaded inputs plus everything derived from them that all methods share.
struct ExperimentData {
  FactSet train_facts;
  std::optional<FactSet> eval_facts;
  ConstraintSet constraints;
  Vocabulary vocabulary;

  FactSet train_set;          // labelled facts the methods learn from
  GroundingResult grounded;   // train_set grounding with evidence
  FactSplit train_report;     // facts scored on the training distribution
  std::vector<std::string> train_subjects;
  FactSplit eval_report;
  std::vector<std::string> eval_subjects;
  std::string subset;  // "T1" or "T1+T2 5%" style label
};

/// Throws MissingInput for absent files and KB errors for bad contents.
ExperimentData prepare(const ExperimentConfig& config);

/// Grounding statistics of one facts file against the constraints.
GroundSummary ground_summary(const FactSet& facts, const ConstraintSet& constraints);

struct CorrectionSummary {
  std::size_t subjects = 0;
  std::size_t unsatisfiable_subjects = 0;
  std::size_t violated = 0;  // hard formulas left violated
  bool exact = true;
};

struct MethodResult {
  Method method = Method::kLoco;
  Report train;
  std::optional<Report> eval;
  TrainHistory history;
  std::optional<CorrectionSummary> train_correction;
  std::optional<CorrectionSummary> eval_correction;
  std::unique_ptr<BeliefModel> model;
  double seconds = 0;
};

std::unique_ptr<BeliefModel> make_model(const ExperimentConfig& config, const Vocabulary& vocab);

MethodResult run_method(const ExperimentConfig& config, const ExperimentData& data, Method method);

/// Runs every configured method and writes the output directory:
/// report_train.{json,txt}, report_eval.{json,txt}, history.json,
/// grounded.json, config_resolved.json, table.txt and, for embedding models,
/// similarity.csv and model_<method>.json. On failure the files written so far
/// are removed.
std::vector<MethodResult> run_experiment(const ExperimentConfig& config);

std::string save_model(const BeliefModel& model);
std::unique_ptr<BeliefModel> load_model(const std::string& path);

}  // namespace beliefkit

#endif  // BELIEFKIT_EXPERIMENT_HPP_
