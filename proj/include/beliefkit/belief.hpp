#ifndef BELIEFKIT_BELIEF_HPP_
#define BELIEFKIT_BELIEF_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "beliefkit/formula.hpp"
#include "beliefkit/kb.hpp"

namespace beliefkit {

class UnregisteredFact : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Dense (subject, property) coordinates into a Vocabulary.
struct FactIndex {
  int subject = -1;
  int property = -1;
};

/// The subjects and properties a model can be queried about.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> subjects, std::vector<std::string> properties);

  /// Subjects of every fact set, properties of the facts and constraints.
  static Vocabulary from(std::span<const FactSet* const> fact_sets,
                         const ConstraintSet& constraints);

  const VarTable& subjects() const { return subjects_; }
  const VarTable& properties() const { return properties_; }
  int num_subjects() const { return subjects_.size(); }
  int num_properties() const { return properties_.size(); }

  std::optional<FactIndex> find(std::string_view subject, std::string_view property) const;
  /// Throws UnregisteredFact.
  FactIndex index(std::string_view subject, std::string_view property) const;

 private:
  VarTable subjects_;
  VarTable properties_;
};

/// Dense gradient plus the set of coordinates that received a contribution.
struct GradientBuffer {
  Eigen::VectorXd values;
  std::vector<std::uint8_t> touched;

  explicit GradientBuffer(Eigen::Index size = 0)
      : values(Eigen::VectorXd::Zero(size)), touched(static_cast<std::size_t>(size), 0) {}

  void add(Eigen::Index i, double g) {
    values[i] += g;
    touched[static_cast<std::size_t>(i)] = 1;
  }
  void reset() {
    values.setZero();
    std::fill(touched.begin(), touched.end(), 0);
  }
};

/// p_θ(z_f = true) for facts f = (subject, property).
class BeliefModel {
 public:
  virtual ~BeliefModel() = default;

  virtual std::string kind() const = 0;
  const Vocabulary& vocabulary() const { return vocab_; }

  virtual double belief(FactIndex f) const = 0;
  double belief(std::string_view subject, std::string_view property) const {
    return belief(vocab_.index(subject, property));
  }
  double belief(const Fact& f) const { return belief(f.subject, f.property); }

  virtual bool trainable() const { return true; }
  virtual Eigen::VectorXd& parameters() = 0;
  virtual const Eigen::VectorXd& parameters() const = 0;

  /// Accumulates dloss/dθ = dloss_dp · p(1 - p) · dlogit/dθ into `grad`.
  virtual void add_gradient(FactIndex f, double dloss_dp, GradientBuffer& grad) const = 0;

  virtual std::unique_ptr<BeliefModel> clone() const = 0;

 protected:
  explicit BeliefModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  Vocabulary vocab_;
};

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// One logit per (subject, property) cell of the vocabulary grid.
class TabularBeliefModel final : public BeliefModel {
 public:
  explicit TabularBeliefModel(Vocabulary vocab, double initial_logit = 0.0);

  std::string kind() const override { return "tabular"; }
  double belief(FactIndex f) const override;
  using BeliefModel::belief;
  Eigen::VectorXd& parameters() override { return logits_; }
  const Eigen::VectorXd& parameters() const override { return logits_; }
  void add_gradient(FactIndex f, double dloss_dp, GradientBuffer& grad) const override;
  std::unique_ptr<BeliefModel> clone() const override;

  double logit(FactIndex f) const { return logits_[offset(f)]; }
  void set_logit(FactIndex f, double value) { logits_[offset(f)] = value; }
  Eigen::Index offset(FactIndex f) const;

 private:
  Eigen::VectorXd logits_;  // row-major subject × property grid
};

/// logistic(u_s · v_p + b_p + c) with subject and property embeddings.
class EmbeddingBeliefModel final : public BeliefModel {
 public:
  static constexpr int kDefaultDim = 32;
  static constexpr double kInitStddev = 0.1;

  EmbeddingBeliefModel(Vocabulary vocab, int dim = kDefaultDim, std::uint64_t seed = 0);

  std::string kind() const override { return "embedding"; }
  double belief(FactIndex f) const override;
  using BeliefModel::belief;
  Eigen::VectorXd& parameters() override { return params_; }
  const Eigen::VectorXd& parameters() const override { return params_; }
  void add_gradient(FactIndex f, double dloss_dp, GradientBuffer& grad) const override;
  std::unique_ptr<BeliefModel> clone() const override;

  int dim() const { return dim_; }
  double logit(FactIndex f) const;

  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMatrix> subject_vectors();
  Eigen::Map<const RowMatrix> subject_vectors() const;
  Eigen::Map<RowMatrix> property_vectors();
  Eigen::Map<const RowMatrix> property_vectors() const;
  Eigen::Map<Eigen::VectorXd> property_bias();
  Eigen::Map<const Eigen::VectorXd> property_bias() const;
  double& global_bias() { return params_[params_.size() - 1]; }
  double global_bias() const { return params_[params_.size() - 1]; }

  Eigen::Index subject_offset(int s) const { return Eigen::Index{s} * dim_; }
  Eigen::Index property_offset(int p) const {
    return Eigen::Index{vocab_.num_subjects()} * dim_ + Eigen::Index{p} * dim_;
  }
  Eigen::Index bias_offset(int p) const {
    return Eigen::Index{vocab_.num_subjects() + vocab_.num_properties()} * dim_ + p;
  }

 private:
  int dim_;
  Eigen::VectorXd params_;  // [U (S×d) | V (P×d) | b (P) | c]
};

/// Standalone chain rule for one fact: dloss/dθ as a dense vector.
Eigen::VectorXd parameter_gradient(const BeliefModel& model, FactIndex f, double dloss_dp);

// ---------------------------------------------------------------------------
// Prompt rendering

/// A question pattern with `{subject}` and `{property}` slots, each exactly
/// once, plus the two answer options read back from the language model.
class QueryTemplate {
 public:
  QueryTemplate(std::string pattern, std::string positive = "Yes", std::string negative = "No");

  const std::string& pattern() const { return pattern_; }
  const std::string& positive() const { return positive_; }
  const std::string& negative() const { return negative_; }

 private:
  std::string pattern_;
  std::string positive_;
  std::string negative_;
};

/// Relation-specific question templates and object phrasing. Properties are
/// "Relation,object" (e.g. "IsA,flower") or run-together camel case
/// ("IsAflower", "CanFly").
class PhrasingTable {
 public:
  struct Rule {
    std::string question;  // with {subject} and {property}
    bool article = false;  // prefix the object with a/an
  };

  /// Version tag of the built-in table.
  static constexpr const char* kVersion = "phrasing-v1";
  static const PhrasingTable& builtin();

  PhrasingTable(std::map<std::string, Rule> rules, Rule fallback);

  /// Template for the fact's relation, falling back to "Is it true that ...".
  QueryTemplate template_for(std::string_view property) const;
  /// The object phrase substituted into the {property} slot.
  std::string property_phrase(std::string_view property) const;

  /// Splits a property into (relation, object); relation may be empty.
  std::pair<std::string, std::string> split(std::string_view property) const;

 private:
  const Rule& rule_for(const std::string& relation) const;
  std::map<std::string, Rule> rules_;
  Rule fallback_;
};

/// Wraps a question in the multiple-choice answer format.
std::string multiple_choice_prompt(std::string_view question, std::string_view positive,
                                   std::string_view negative);

/// "a daffodil", "an albatross".
std::string subject_phrase(std::string_view subject);

std::string render_query(const Fact& fact, const QueryTemplate& tmpl,
                         const PhrasingTable& phrasing = PhrasingTable::builtin());
/// Uses the phrasing table's template for the fact's relation.
std::string render_query(const Fact& fact, const PhrasingTable& phrasing = PhrasingTable::builtin());

}  // namespace beliefkit

#endif  // BELIEFKIT_BELIEF_HPP_
