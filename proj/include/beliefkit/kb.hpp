#ifndef BELIEFKIT_KB_HPP_
#define BELIEFKIT_KB_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "beliefkit/formula.hpp"

namespace beliefkit {

class KbParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KbIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Fact {
  std::string subject;
  std::string property;  // e.g. "IsA,mammal"
  std::optional<bool> label;

  bool operator==(const Fact&) const = default;
};

struct Literal {
  std::string property;
  bool polarity = true;

  bool operator==(const Literal&) const = default;
};

struct GeneralConstraint {
  Literal antecedent;
  Literal consequent;
  std::optional<double> weight;

  bool operator==(const GeneralConstraint&) const = default;
};

/// Facts sorted by (subject, property), unique per pair.
class FactSet {
 public:
  FactSet() = default;
  /// Identical duplicates collapse; conflicting labels throw KbIntegrityError.
  explicit FactSet(std::vector<Fact> facts);

  std::size_t size() const { return facts_.size(); }
  bool empty() const { return facts_.empty(); }
  auto begin() const { return facts_.begin(); }
  auto end() const { return facts_.end(); }
  const Fact& operator[](std::size_t i) const { return facts_[i]; }
  std::span<const Fact> facts() const { return facts_; }

  const Fact* find(std::string_view subject, std::string_view property) const;
  bool contains(std::string_view subject, std::string_view property) const {
    return find(subject, property) != nullptr;
  }
  /// Sorted subject names.
  std::vector<std::string> subjects() const;
  /// Indices into facts() for one subject, in property order.
  std::span<const std::size_t> facts_of(std::string_view subject) const;
  std::span<const std::size_t> facts_with(std::string_view property) const;

  bool operator==(const FactSet& other) const { return facts_ == other.facts_; }

 private:
  std::vector<Fact> facts_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_subject_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_property_;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  /// Throws KbIntegrityError on a self-implication.
  explicit ConstraintSet(std::vector<GeneralConstraint> constraints);

  std::size_t size() const { return constraints_.size(); }
  bool empty() const { return constraints_.empty(); }
  auto begin() const { return constraints_.begin(); }
  auto end() const { return constraints_.end(); }
  const GeneralConstraint& operator[](std::size_t i) const { return constraints_[i]; }
  std::span<const GeneralConstraint> constraints() const { return constraints_; }

  bool is_antecedent(std::string_view property) const;
  bool is_consequent(std::string_view property) const;
  /// Every property mentioned by some constraint, sorted.
  std::vector<std::string> properties() const;

  bool operator==(const ConstraintSet& other) const { return constraints_ == other.constraints_; }

 private:
  std::vector<GeneralConstraint> constraints_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> as_antecedent_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> as_consequent_;
};

/// A general constraint instantiated for one subject. Variables name
/// properties of `subject`; the formula excludes evidence, which is kept
/// separately and applied by full_formula().
struct GroundedConstraint {
  std::string subject;
  VarTable variables;
  Formula formula;
  std::vector<std::pair<int, bool>> evidence;
  std::size_t origin = 0;  // index into the ConstraintSet

  Formula full_formula() const;
};

struct SkippedGrounding {
  std::string subject;
  std::size_t origin = 0;
  std::string reason;
};

struct GroundingResult {
  std::vector<GroundedConstraint> constraints;
  std::vector<SkippedGrounding> skipped;  // evidence made the constraint unsatisfiable
};

struct FactSplit {
  FactSet antecedents;  // T1: property is an antecedent of some constraint
  FactSet consequents;  // T2: property only ever appears as a consequent
  std::size_t excluded = 0;  // property appears in no constraint
};

enum class DataFormat { kAuto, kCanonical, kBeliefBank };

/// Canonical: {"facts": [{"subject", "property", "label"}...]}.
/// BeliefBank: {subject: {property: "yes" | "no"}}.
FactSet parse_facts(std::string_view document, DataFormat format = DataFormat::kAuto);
/// Canonical: {"constraints": [{"antecedent": {"property", "polarity"},
/// "consequent": {...}, "weight"?}...]}. BeliefBank: {"nodes", "links"}.
ConstraintSet parse_constraints(std::string_view document, DataFormat format = DataFormat::kAuto);

std::string write_facts(const FactSet& facts);
std::string write_constraints(const ConstraintSet& constraints);
std::string write_grounded(const GroundingResult& grounded);

FactSet load_facts(const std::string& path, DataFormat format = DataFormat::kAuto);
ConstraintSet load_constraints(const std::string& path, DataFormat format = DataFormat::kAuto);

/// For each subject of `facts` and each constraint whose antecedent or
/// consequent property is a known fact of that subject, emits the implication
/// over that subject's facts. With evidence, known facts of the subject that
/// occur in the formula are conjoined as unit literals.
GroundingResult ground_constraints(const ConstraintSet& constraints, const FactSet& facts,
                                   bool with_evidence);

FactSplit split_t1_t2(const FactSet& facts, const ConstraintSet& constraints);

/// Seeded uniform sample of floor(fraction * n) facts; returns (sample, rest).
std::pair<FactSet, FactSet> sample_fraction(const FactSet& facts, double fraction,
                                            std::uint64_t seed);

FactSet merge(const FactSet& a, const FactSet& b);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace beliefkit

#endif  // BELIEFKIT_KB_HPP_
