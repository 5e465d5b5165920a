#include "beliefkit/formula.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace beliefkit {

// ---------------------------------------------------------------------------
// VarTable

VarTable::VarTable(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

int VarTable::intern(std::string_view name) {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  const int id = size();
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<int> VarTable::find(std::string_view name) const {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Formula

struct Formula::Node {
  Op op = Op::kTrue;
  int var = -1;
  std::vector<Formula> children;
  int var_count = 0;
};

Formula::Formula() : Formula(constant(true)) {}

Formula::Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Formula Formula::constant(bool value) {
  static const auto kTop = std::make_shared<const Node>(Node{Op::kTrue, -1, {}, 0});
  static const auto kBottom = std::make_shared<const Node>(Node{Op::kFalse, -1, {}, 0});
  return Formula(value ? kTop : kBottom);
}

Formula Formula::var(int id) {
  if (id < 0) throw std::invalid_argument("variable id must be non-negative");
  return Formula(std::make_shared<const Node>(Node{Op::kVar, id, {}, id + 1}));
}

namespace {

int max_var_count(const std::vector<Formula>& children) {
  int n = 0;
  for (const auto& c : children) n = std::max(n, c.variable_count());
  return n;
}

}  // namespace

Formula Formula::negation(Formula f) {
  std::vector<Formula> ch{std::move(f)};
  const int n = max_var_count(ch);
  return Formula(std::make_shared<const Node>(Node{Op::kNot, -1, std::move(ch), n}));
}

Formula Formula::conjunction(std::vector<Formula> operands) {
  if (operands.empty()) return constant(true);
  if (operands.size() == 1) return std::move(operands.front());
  const int n = max_var_count(operands);
  return Formula(std::make_shared<const Node>(Node{Op::kAnd, -1, std::move(operands), n}));
}

Formula Formula::disjunction(std::vector<Formula> operands) {
  if (operands.empty()) return constant(false);
  if (operands.size() == 1) return std::move(operands.front());
  const int n = max_var_count(operands);
  return Formula(std::make_shared<const Node>(Node{Op::kOr, -1, std::move(operands), n}));
}

Formula Formula::implies(Formula lhs, Formula rhs) {
  std::vector<Formula> ch{std::move(lhs), std::move(rhs)};
  const int n = max_var_count(ch);
  return Formula(std::make_shared<const Node>(Node{Op::kImplies, -1, std::move(ch), n}));
}

Formula Formula::iff(Formula lhs, Formula rhs) {
  std::vector<Formula> ch{std::move(lhs), std::move(rhs)};
  const int n = max_var_count(ch);
  return Formula(std::make_shared<const Node>(Node{Op::kIff, -1, std::move(ch), n}));
}

Formula Formula::literal(int id, bool polarity) {
  return polarity ? var(id) : negation(var(id));
}

Op Formula::op() const { return node_->op; }
int Formula::var_id() const { return node_->var; }
std::span<const Formula> Formula::children() const { return node_->children; }
int Formula::variable_count() const { return node_->var_count; }

bool Formula::operator==(const Formula& other) const {
  if (node_ == other.node_) return true;
  if (node_->op != other.node_->op || node_->var != other.node_->var) return false;
  return node_->children == other.node_->children;
}

// ---------------------------------------------------------------------------
// Parser

FormulaParseError::FormulaParseError(const std::string& message, std::size_t position)
    : std::runtime_error(message + " at position " + std::to_string(position)),
      position_(position) {}

namespace {

enum class Tok { kIdent, kQuoted, kNot, kAnd, kOr, kImplies, kIff, kLParen, kRParen, kEnd };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '!') {
      out.push_back({Tok::kNot, "!", i++});
    } else if (c == '&') {
      out.push_back({Tok::kAnd, "&", i++});
    } else if (c == '|') {
      out.push_back({Tok::kOr, "|", i++});
    } else if (c == '(') {
      out.push_back({Tok::kLParen, "(", i++});
    } else if (c == ')') {
      out.push_back({Tok::kRParen, ")", i++});
    } else if (s.substr(i, 2) == "->") {
      out.push_back({Tok::kImplies, "->", i});
      i += 2;
    } else if (s.substr(i, 3) == "<->") {
      out.push_back({Tok::kIff, "<->", i});
      i += 3;
    } else if (c == '"') {
      const std::size_t start = i++;
      std::string text;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          text.push_back(s[i + 1]);
          i += 2;
        } else if (s[i] == '"') {
          ++i;
          closed = true;
          break;
        } else {
          text.push_back(s[i++]);
        }
      }
      if (!closed) throw FormulaParseError("unterminated quoted name", start);
      if (text.empty()) throw FormulaParseError("empty quoted name", start);
      out.push_back({Tok::kQuoted, std::move(text), start});
    } else if (is_ident_start(c)) {
      const std::size_t start = i;
      while (i < s.size() && is_ident_char(s[i])) ++i;
      out.push_back({Tok::kIdent, std::string(s.substr(start, i - start)), start});
    } else {
      throw FormulaParseError(std::string("unexpected character '") + c + "'", i);
    }
  }
  out.push_back({Tok::kEnd, "", s.size()});
  return out;
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, VarTable& vars) : toks_(std::move(tokens)), vars_(vars) {}

  Formula parse() {
    if (peek().kind == Tok::kEnd) throw FormulaParseError("empty formula", 0);
    Formula f = parse_iff();
    if (peek().kind != Tok::kEnd) {
      throw FormulaParseError("unexpected '" + peek().text + "'", peek().pos);
    }
    return f;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  Formula parse_iff() {
    Formula lhs = parse_implies();
    if (peek().kind == Tok::kIff) {
      next();
      return Formula::iff(std::move(lhs), parse_iff());
    }
    return lhs;
  }

  Formula parse_implies() {
    Formula lhs = parse_or();
    if (peek().kind == Tok::kImplies) {
      next();
      return Formula::implies(std::move(lhs), parse_implies());
    }
    return lhs;
  }

  Formula parse_or() {
    std::vector<Formula> ops{parse_and()};
    while (peek().kind == Tok::kOr) {
      next();
      ops.push_back(parse_and());
    }
    return ops.size() == 1 ? std::move(ops.front()) : Formula::disjunction(std::move(ops));
  }

  Formula parse_and() {
    std::vector<Formula> ops{parse_unary()};
    while (peek().kind == Tok::kAnd) {
      next();
      ops.push_back(parse_unary());
    }
    return ops.size() == 1 ? std::move(ops.front()) : Formula::conjunction(std::move(ops));
  }

  Formula parse_unary() {
    if (peek().kind == Tok::kNot) {
      next();
      return Formula::negation(parse_unary());
    }
    return parse_atom();
  }

  Formula parse_atom() {
    const Token& t = next();
    switch (t.kind) {
      case Tok::kIdent:
        if (t.text == "true") return Formula::constant(true);
        if (t.text == "false") return Formula::constant(false);
        return Formula::var(vars_.intern(t.text));
      case Tok::kQuoted:
        return Formula::var(vars_.intern(t.text));
      case Tok::kLParen: {
        Formula inner = parse_iff();
        if (peek().kind != Tok::kRParen) throw FormulaParseError("expected ')'", peek().pos);
        next();
        return inner;
      }
      case Tok::kEnd:
        throw FormulaParseError("unexpected end of input", t.pos);
      default:
        throw FormulaParseError("unexpected '" + t.text + "'", t.pos);
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  VarTable& vars_;
};

}  // namespace

Formula parse_formula(std::string_view text, VarTable& vars) {
  return Parser(tokenize(text), vars).parse();
}

// ---------------------------------------------------------------------------
// Printer

namespace {

int precedence(Op op) {
  switch (op) {
    case Op::kIff: return 1;
    case Op::kImplies: return 2;
    case Op::kOr: return 3;
    case Op::kAnd: return 4;
    default: return 5;
  }
}

bool plain_identifier(const std::string& name) {
  if (name.empty() || !is_ident_start(name[0])) return false;
  if (name == "true" || name == "false") return false;
  return std::all_of(name.begin(), name.end(), is_ident_char);
}

void print_name(std::ostream& os, const std::string& name) {
  if (plain_identifier(name)) {
    os << name;
    return;
  }
  os << '"';
  for (char c : name) {
    if (c == '"' || c == '\\') os << '\\';
    os << c;
  }
  os << '"';
}

void print(std::ostream& os, const Formula& f, const VarTable& vars);

void print_child(std::ostream& os, const Formula& child, bool parens, const VarTable& vars) {
  if (parens) os << '(';
  print(os, child, vars);
  if (parens) os << ')';
}

void print(std::ostream& os, const Formula& f, const VarTable& vars) {
  const int prec = precedence(f.op());
  switch (f.op()) {
    case Op::kTrue: os << "true"; return;
    case Op::kFalse: os << "false"; return;
    case Op::kVar:
      if (f.var_id() < vars.size()) {
        print_name(os, vars.name(f.var_id()));
      } else {
        os << "\"#" << f.var_id() << '"';
      }
      return;
    case Op::kNot: {
      const Formula& c = f.children()[0];
      os << '!';
      print_child(os, c, precedence(c.op()) < 5, vars);
      return;
    }
    case Op::kAnd:
    case Op::kOr: {
      const char* sep = f.op() == Op::kAnd ? " & " : " | ";
      bool first = true;
      for (const auto& c : f.children()) {
        if (!first) os << sep;
        first = false;
        print_child(os, c, precedence(c.op()) <= prec, vars);
      }
      return;
    }
    case Op::kImplies:
    case Op::kIff: {
      const Formula& lhs = f.children()[0];
      const Formula& rhs = f.children()[1];
      print_child(os, lhs, precedence(lhs.op()) <= prec, vars);
      os << (f.op() == Op::kImplies ? " -> " : " <-> ");
      print_child(os, rhs, precedence(rhs.op()) < prec, vars);
      return;
    }
  }
}

}  // namespace

std::string to_string(const Formula& f, const VarTable& vars) {
  std::ostringstream os;
  print(os, f, vars);
  return os.str();
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <typename Lookup>
bool eval(const Formula& f, const Lookup& value) {
  switch (f.op()) {
    case Op::kTrue: return true;
    case Op::kFalse: return false;
    case Op::kVar: return value(f.var_id());
    case Op::kNot: return !eval(f.children()[0], value);
    case Op::kAnd:
      for (const auto& c : f.children())
        if (!eval(c, value)) return false;
      return true;
    case Op::kOr:
      for (const auto& c : f.children())
        if (eval(c, value)) return true;
      return false;
    case Op::kImplies:
      return !eval(f.children()[0], value) || eval(f.children()[1], value);
    case Op::kIff:
      return eval(f.children()[0], value) == eval(f.children()[1], value);
  }
  return false;
}

}  // namespace

bool evaluate(const Formula& f, const Assignment& z) {
  if (static_cast<int>(z.size()) < f.variable_count()) {
    throw std::invalid_argument("assignment has " + std::to_string(z.size()) +
                                " entries, formula needs " + std::to_string(f.variable_count()));
  }
  return eval(f, [&z](int id) { return static_cast<bool>(z[static_cast<std::size_t>(id)]); });
}

bool evaluate(const Formula& f, ModelMask z) {
  return eval(f, [z](int id) { return ((z >> id) & 1u) != 0; });
}

Truth evaluate_partial(const Formula& f, std::span<const Truth> partial) {
  switch (f.op()) {
    case Op::kTrue: return Truth::kTrue;
    case Op::kFalse: return Truth::kFalse;
    case Op::kVar: return partial[static_cast<std::size_t>(f.var_id())];
    case Op::kNot: {
      const Truth t = evaluate_partial(f.children()[0], partial);
      if (t == Truth::kUnknown) return t;
      return t == Truth::kTrue ? Truth::kFalse : Truth::kTrue;
    }
    case Op::kAnd: {
      Truth acc = Truth::kTrue;
      for (const auto& c : f.children()) {
        const Truth t = evaluate_partial(c, partial);
        if (t == Truth::kFalse) return Truth::kFalse;
        if (t == Truth::kUnknown) acc = Truth::kUnknown;
      }
      return acc;
    }
    case Op::kOr: {
      Truth acc = Truth::kFalse;
      for (const auto& c : f.children()) {
        const Truth t = evaluate_partial(c, partial);
        if (t == Truth::kTrue) return Truth::kTrue;
        if (t == Truth::kUnknown) acc = Truth::kUnknown;
      }
      return acc;
    }
    case Op::kImplies: {
      const Truth a = evaluate_partial(f.children()[0], partial);
      if (a == Truth::kFalse) return Truth::kTrue;
      const Truth b = evaluate_partial(f.children()[1], partial);
      if (b == Truth::kTrue) return Truth::kTrue;
      if (a == Truth::kTrue && b == Truth::kFalse) return Truth::kFalse;
      return Truth::kUnknown;
    }
    case Op::kIff: {
      const Truth a = evaluate_partial(f.children()[0], partial);
      const Truth b = evaluate_partial(f.children()[1], partial);
      if (a == Truth::kUnknown || b == Truth::kUnknown) return Truth::kUnknown;
      return a == b ? Truth::kTrue : Truth::kFalse;
    }
  }
  return Truth::kUnknown;
}

// ---------------------------------------------------------------------------
// Enumeration

std::vector<ModelMask> satisfying_masks(const Formula& f, int num_vars, int max_vars) {
  if (num_vars < 0) num_vars = f.variable_count();
  if (num_vars < f.variable_count()) {
    throw std::invalid_argument("num_vars smaller than the formula's variable count");
  }
  const int cap = std::min(max_vars, kHardMaxVars);
  if (num_vars > cap) {
    throw CapacityError("formula has " + std::to_string(num_vars) +
                        " variables; enumeration limit is " + std::to_string(cap));
  }
  std::vector<ModelMask> out;
  const std::uint64_t total = std::uint64_t{1} << num_vars;
  for (std::uint64_t k = 0; k < total; ++k) {
    // Counter bit (n-1-j) set means variable j is false, so k = 0 is all-true
    // and variable 0 is the most significant position.
    ModelMask mask = 0;
    for (int j = 0; j < num_vars; ++j) {
      if (((k >> (num_vars - 1 - j)) & 1u) == 0) mask |= ModelMask{1} << j;
    }
    if (evaluate(f, mask)) out.push_back(mask);
  }
  return out;
}

std::vector<Assignment> satisfying_assignments(const Formula& f, int num_vars, int max_vars) {
  if (num_vars < 0) num_vars = f.variable_count();
  std::vector<Assignment> out;
  for (ModelMask m : satisfying_masks(f, num_vars, max_vars)) {
    Assignment z(static_cast<std::size_t>(num_vars));
    for (int j = 0; j < num_vars; ++j) z[static_cast<std::size_t>(j)] = ((m >> j) & 1u) != 0;
    out.push_back(std::move(z));
  }
  return out;
}

Formula rename_variables(const Formula& f, std::span<const int> mapping) {
  switch (f.op()) {
    case Op::kTrue:
    case Op::kFalse:
      return f;
    case Op::kVar:
      return Formula::var(mapping[static_cast<std::size_t>(f.var_id())]);
    case Op::kNot:
      return Formula::negation(rename_variables(f.children()[0], mapping));
    case Op::kImplies:
      return Formula::implies(rename_variables(f.children()[0], mapping),
                              rename_variables(f.children()[1], mapping));
    case Op::kIff:
      return Formula::iff(rename_variables(f.children()[0], mapping),
                          rename_variables(f.children()[1], mapping));
    case Op::kAnd:
    case Op::kOr: {
      std::vector<Formula> ops;
      for (const auto& c : f.children()) ops.push_back(rename_variables(c, mapping));
      return f.op() == Op::kAnd ? Formula::conjunction(std::move(ops))
                                : Formula::disjunction(std::move(ops));
    }
  }
  return f;
}

namespace {

void collect_vars(const Formula& f, std::vector<int>& out) {
  if (f.op() == Op::kVar) out.push_back(f.var_id());
  for (const auto& c : f.children()) collect_vars(c, out);
}

}  // namespace

std::vector<int> variables_of(const Formula& f) {
  std::vector<int> out;
  collect_vars(f, out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Formula conjoin_evidence(const Formula& f, std::span<const std::pair<int, bool>> evidence) {
  if (evidence.empty()) return f;
  std::vector<Formula> ops;
  ops.reserve(evidence.size() + 1);
  ops.push_back(f);
  for (const auto& [id, value] : evidence) ops.push_back(Formula::literal(id, value));
  return Formula::conjunction(std::move(ops));
}

}  // namespace beliefkit
