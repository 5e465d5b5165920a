#ifndef BELIEFKIT_EVALUATION_HPP_
#define BELIEFKIT_EVALUATION_HPP_

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "beliefkit/belief.hpp"
#include "beliefkit/kb.hpp"

namespace beliefkit {

/// Thresholded belief; p = 0.5 counts as false.
inline bool predict_truth(double p) { return p > 0.5; }

/// Predicted truth value for (subject, property).
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual bool predict(std::string_view subject, std::string_view property) const = 0;
};

class ThresholdPredictor final : public Predictor {
 public:
  explicit ThresholdPredictor(const BeliefModel& model) : model_(model) {}
  bool predict(std::string_view subject, std::string_view property) const override {
    return predict_truth(model_.belief(subject, property));
  }

 private:
  const BeliefModel& model_;
};

/// Explicit truth values take precedence; everything else defers to `fallback`.
class OverridePredictor final : public Predictor {
 public:
  explicit OverridePredictor(const Predictor& fallback) : fallback_(fallback) {}
  void set(std::string subject, std::string property, bool value);
  bool predict(std::string_view subject, std::string_view property) const override;

 private:
  const Predictor& fallback_;
  std::map<std::pair<std::string, std::string>, bool, std::less<>> values_;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  /// F1 of the positive class; 1 when tp + fp + fn = 0.
  double f1() const;
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

struct Report {
  ConfusionCounts antecedents;
  ConfusionCounts consequents;
  ConfusionCounts total;
  std::size_t active = 0;    // (subject, constraint) pairs whose antecedent literal is believed
  std::size_t violated = 0;  // active pairs whose consequent literal is not believed

  double antecedent_f1() const { return antecedents.f1(); }
  double consequent_f1() const { return consequents.f1(); }
  double total_f1() const { return total.f1(); }
  /// 1 - violated / active, or 1 when nothing is active.
  double consistency() const;
};

ConfusionCounts confusion(const Predictor& predictor, const FactSet& facts);

/// F1 per split and overall; consistency fields are left at zero.
Report f1_scores(const Predictor& predictor, const FactSplit& split);

struct ConsistencyCounts {
  std::size_t active = 0;
  std::size_t violated = 0;
  double score() const;
};

/// Iterates subjects × general constraints, querying both literals.
ConsistencyCounts logical_consistency(const Predictor& predictor,
                                      std::span<const std::string> subjects,
                                      const ConstraintSet& constraints, int jobs = 1);

Report evaluate(const Predictor& predictor, const FactSplit& split,
                std::span<const std::string> subjects, const ConstraintSet& constraints,
                int jobs = 1);

struct SimilarityMatrix {
  Eigen::MatrixXd values;  // NaN where undefined
  std::vector<std::pair<int, int>> undefined;  // pairs involving a zero vector
};

/// Cosine similarity between subject embeddings.
SimilarityMatrix similarity_matrix(const EmbeddingBeliefModel& model,
                                   std::span<const std::string> subjects_a,
                                   std::span<const std::string> subjects_b);

std::string report_json(const Report& report, int indent = 1);
/// Fixed-width table mirroring (method, train subset, antecedent F1,
/// consequent F1, total F1, consistency[, seconds]).
struct TableRow {
  std::string method;
  std::string subset;
  Report report;
  double seconds = -1;  // omitted when negative
};
std::string format_table(std::span<const TableRow> rows);
std::string similarity_csv(const SimilarityMatrix& m, std::span<const std::string> rows,
                           std::span<const std::string> cols);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace beliefkit

#endif  // BELIEFKIT_EVALUATION_HPP_
