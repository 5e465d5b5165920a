#ifndef BELIEFKIT_FORMULA_HPP_
#define BELIEFKIT_FORMULA_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace beliefkit {

/// Interns variable names to dense ids in first-occurrence order.
class VarTable {
 public:
  VarTable() = default;
  explicit VarTable(std::vector<std::string> names);

  int intern(std::string_view name);
  std::optional<int> find(std::string_view name) const;
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const VarTable& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int, std::less<>> index_;
};

enum class Op { kTrue, kFalse, kVar, kNot, kAnd, kOr, kImplies, kIff };

/// Immutable propositional formula. Copies share structure.
class Formula {
 public:
  /// The constant `true`.
  Formula();

  static Formula constant(bool value);
  static Formula var(int id);
  static Formula negation(Formula f);
  static Formula conjunction(std::vector<Formula> operands);
  static Formula disjunction(std::vector<Formula> operands);
  static Formula implies(Formula lhs, Formula rhs);
  static Formula iff(Formula lhs, Formula rhs);
  /// Var(id) when `polarity` holds, Not(Var(id)) otherwise.
  static Formula literal(int id, bool polarity);

  Op op() const;
  int var_id() const;
  std::span<const Formula> children() const;
  /// One past the largest variable id mentioned (0 for closed formulas).
  int variable_count() const;

  /// Structural equality.
  bool operator==(const Formula& other) const;

 private:
  struct Node;
  explicit Formula(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

using Assignment = std::vector<bool>;

/// Models packed as bit masks: bit j set means variable j is true.
using ModelMask = std::uint32_t;

inline constexpr int kDefaultMaxVars = 20;
inline constexpr int kHardMaxVars = 30;

class FormulaParseError : public std::runtime_error {
 public:
  FormulaParseError(const std::string& message, std::size_t position);
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the constraint DSL:
///
///   lit  := ['!'] atom
///   atom := IDENT | "quoted name" | 'true' | 'false' | '(' expr ')'
///   expr := lit | expr '&' expr | expr '|' expr | expr '->' expr | expr '<->' expr
///
/// Precedence from tightest: !, &, |, ->, <->. `->` and `<->` associate to
/// the right; unparenthesized `&`/`|` chains become one n-ary node.
/// Variables are interned into `vars` in first-occurrence order.
Formula parse_formula(std::string_view text, VarTable& vars);

/// Prints in the DSL grammar; parse_formula(to_string(f)) is structurally f.
std::string to_string(const Formula& f, const VarTable& vars);

/// Throws std::invalid_argument when the assignment is shorter than
/// f.variable_count().
bool evaluate(const Formula& f, const Assignment& z);
bool evaluate(const Formula& f, ModelMask z);

enum class Truth : std::int8_t { kFalse = 0, kTrue = 1, kUnknown = 2 };

/// Kleene three-valued evaluation; `partial[j]` is kUnknown for unassigned j.
Truth evaluate_partial(const Formula& f, std::span<const Truth> partial);

/// All satisfying assignments over `num_vars` variables (default:
/// f.variable_count()), ordered lexicographically with true before false.
std::vector<Assignment> satisfying_assignments(const Formula& f, int num_vars = -1,
                                               int max_vars = kDefaultMaxVars);

/// Same enumeration, packed. Used by the semantic-loss kernels.
std::vector<ModelMask> satisfying_masks(const Formula& f, int num_vars = -1,
                                        int max_vars = kDefaultMaxVars);

/// Replaces every Var(i) with Var(mapping[i]).
Formula rename_variables(const Formula& f, std::span<const int> mapping);

/// Sorted distinct variable ids occurring in f.
std::vector<int> variables_of(const Formula& f);

/// f ∧ l1 ∧ … ∧ lk with li = Var(id) or Not(Var(id)).
Formula conjoin_evidence(const Formula& f, std::span<const std::pair<int, bool>> evidence);

}  // namespace beliefkit

#endif  // BELIEFKIT_FORMULA_HPP_
