#include "beliefkit/maxsat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "beliefkit/evaluation.hpp"

namespace beliefkit {

namespace {

double clamp(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

/// Lexicographic search key: fewer violations, then lower cost (= -log
/// likelihood), then the assignment itself with false < true.
struct Incumbent {
  bool found = false;
  std::size_t violated = 0;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> values;
};

bool lex_less(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// Depth-first branch and bound over one connected component.
///
/// In hard mode every formula must hold: definite violations prune and
/// formulas with a single open variable force it (unit propagation). In soft
/// mode violations are counted and minimized first.
class ComponentSearch {
 public:
  ComponentSearch(std::vector<Formula> formulas, std::vector<double> cost_true,
                  std::vector<double> cost_false, bool hard, std::size_t budget)
      : formulas_(std::move(formulas)),
        cost_true_(std::move(cost_true)),
        cost_false_(std::move(cost_false)),
        hard_(hard),
        budget_(budget) {
    const std::size_t n = cost_true_.size();
    partial_.assign(n, Truth::kUnknown);
    var_formulas_.resize(n);
    formula_vars_.resize(formulas_.size());
    is_false_.assign(formulas_.size(), 0);
    for (std::size_t f = 0; f < formulas_.size(); ++f) {
      formula_vars_[f] = variables_of(formulas_[f]);
      for (int v : formula_vars_[f]) var_formulas_[static_cast<std::size_t>(v)].push_back(f);
    }
    base_cost_ = 0;
    for (std::size_t v = 0; v < n; ++v) base_cost_ += std::min(cost_true_[v], cost_false_[v]);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [this](int a, int b) {
      return var_formulas_[static_cast<std::size_t>(a)].size() >
             var_formulas_[static_cast<std::size_t>(b)].size();
    });
  }

  /// Returns true when the search space was exhausted within budget.
  bool run() {
    // Formulas without variables are decided up front.
    for (std::size_t f = 0; f < formulas_.size(); ++f) {
      if (formula_vars_[f].empty() && evaluate_partial(formulas_[f], partial_) == Truth::kFalse) {
        if (hard_) return true;
        is_false_[f] = 1;
        ++false_count_;
      }
    }
    search();
    return !exhausted_;
  }

  const Incumbent& best() const { return best_; }

 private:
  struct TrailEntry {
    bool is_var;
    int id;
  };

  bool preferred(int v) const {
    return cost_true_[static_cast<std::size_t>(v)] < cost_false_[static_cast<std::size_t>(v)];
  }

  double regret(int v, bool value) const {
    const auto k = static_cast<std::size_t>(v);
    return (value ? cost_true_[k] : cost_false_[k]) - std::min(cost_true_[k], cost_false_[k]);
  }

  // Assigns and (in hard mode) propagates; false on conflict.
  bool assign(int v, bool value) {
    std::vector<std::pair<int, bool>> queue{{v, value}};
    while (!queue.empty()) {
      const auto [x, val] = queue.back();
      queue.pop_back();
      const auto k = static_cast<std::size_t>(x);
      if (partial_[k] != Truth::kUnknown) {
        if ((partial_[k] == Truth::kTrue) != val) return false;
        continue;
      }
      partial_[k] = val ? Truth::kTrue : Truth::kFalse;
      regret_ += regret(x, val);
      trail_.push_back({true, x});
      for (std::size_t f : var_formulas_[k]) {
        if (is_false_[f]) continue;
        const Truth t = evaluate_partial(formulas_[f], partial_);
        if (t == Truth::kFalse) {
          is_false_[f] = 1;
          ++false_count_;
          trail_.push_back({false, static_cast<int>(f)});
          if (hard_) return false;
        } else if (hard_ && t == Truth::kUnknown) {
          int open = -1;
          int n_open = 0;
          for (int y : formula_vars_[f]) {
            if (partial_[static_cast<std::size_t>(y)] == Truth::kUnknown) {
              open = y;
              ++n_open;
            }
          }
          if (n_open != 1) continue;
          const auto ky = static_cast<std::size_t>(open);
          partial_[ky] = Truth::kTrue;
          const bool true_ok = evaluate_partial(formulas_[f], partial_) != Truth::kFalse;
          partial_[ky] = Truth::kFalse;
          const bool false_ok = evaluate_partial(formulas_[f], partial_) != Truth::kFalse;
          partial_[ky] = Truth::kUnknown;
          if (!true_ok && !false_ok) return false;
          if (true_ok != false_ok) queue.emplace_back(open, true_ok);
        }
      }
    }
    return true;
  }

  void undo(std::size_t mark) {
    while (trail_.size() > mark) {
      const TrailEntry e = trail_.back();
      trail_.pop_back();
      if (e.is_var) {
        const auto k = static_cast<std::size_t>(e.id);
        regret_ -= regret(e.id, partial_[k] == Truth::kTrue);
        partial_[k] = Truth::kUnknown;
      } else {
        is_false_[static_cast<std::size_t>(e.id)] = 0;
        --false_count_;
      }
    }
  }

  bool pruned() const {
    if (!best_.found) return false;
    if (false_count_ != best_.violated) return false_count_ > best_.violated;
    const double bound = base_cost_ + regret_;
    return bound > best_.cost + 1e-9 * (1.0 + std::abs(best_.cost));
  }

  void leaf() {
    std::vector<std::uint8_t> values(partial_.size());
    double cost = 0;
    for (std::size_t v = 0; v < partial_.size(); ++v) {
      values[v] = partial_[v] == Truth::kTrue ? 1 : 0;
      cost += values[v] ? cost_true_[v] : cost_false_[v];
    }
    bool better = !best_.found || false_count_ < best_.violated;
    if (!better && false_count_ == best_.violated) {
      better = cost < best_.cost || (cost == best_.cost && lex_less(values, best_.values));
    }
    if (better) {
      best_.found = true;
      best_.violated = false_count_;
      best_.cost = cost;
      best_.values = std::move(values);
    }
  }

  void search() {
    if (exhausted_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    if (pruned()) return;
    int next = -1;
    for (int v : order_) {
      if (partial_[static_cast<std::size_t>(v)] == Truth::kUnknown) {
        next = v;
        break;
      }
    }
    if (next < 0) {
      leaf();
      return;
    }
    const bool first = preferred(next);
    for (bool value : {first, !first}) {
      const std::size_t mark = trail_.size();
      if (assign(next, value)) search();
      undo(mark);
      if (exhausted_) return;
    }
  }

  std::vector<Formula> formulas_;
  std::vector<double> cost_true_;
  std::vector<double> cost_false_;
  bool hard_;
  std::size_t budget_;

  std::vector<Truth> partial_;
  std::vector<std::vector<std::size_t>> var_formulas_;
  std::vector<std::vector<int>> formula_vars_;
  std::vector<std::uint8_t> is_false_;
  std::vector<int> order_;
  std::vector<TrailEntry> trail_;
  std::size_t false_count_ = 0;
  double base_cost_ = 0;
  double regret_ = 0;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
  Incumbent best_;
};

// Flip-based descent on violations (then cost) from the thresholded beliefs.
std::vector<std::uint8_t> greedy_repair(const std::vector<Formula>& formulas,
                                        const std::vector<double>& cost_true,
                                        const std::vector<double>& cost_false) {
  const std::size_t n = cost_true.size();
  std::vector<std::uint8_t> z(n);
  for (std::size_t v = 0; v < n; ++v) z[v] = cost_true[v] < cost_false[v] ? 1 : 0;
  std::vector<std::vector<std::size_t>> var_formulas(n);
  for (std::size_t f = 0; f < formulas.size(); ++f) {
    for (int v : variables_of(formulas[f])) var_formulas[static_cast<std::size_t>(v)].push_back(f);
  }
  const auto holds = [&](std::size_t f) {
    return evaluate(formulas[f], Assignment(z.begin(), z.end()));
  };
  for (std::size_t iter = 0; iter < 4 * n + 16; ++iter) {
    int best_var = -1;
    long best_gain = 0;
    double best_delta = 0;
    for (std::size_t v = 0; v < n; ++v) {
      long before = 0;
      for (std::size_t f : var_formulas[v]) before += holds(f) ? 0 : 1;
      z[v] ^= 1;
      long after = 0;
      for (std::size_t f : var_formulas[v]) after += holds(f) ? 0 : 1;
      z[v] ^= 1;
      const long gain = before - after;
      const double delta = z[v] ? cost_false[v] - cost_true[v] : cost_true[v] - cost_false[v];
      if (gain > best_gain || (gain == best_gain && gain > 0 && delta < best_delta)) {
        best_var = static_cast<int>(v);
        best_gain = gain;
        best_delta = delta;
      }
    }
    if (best_var < 0) break;
    z[static_cast<std::size_t>(best_var)] ^= 1;
  }
  return z;
}

struct ComponentResult {
  std::vector<std::uint8_t> values;
  bool exact = true;
};

ComponentResult solve_component(const std::vector<Formula>& formulas,
                                const std::vector<double>& cost_true,
                                const std::vector<double>& cost_false,
                                const MaxSatOptions& options) {
  const std::size_t n = cost_true.size();
  if (static_cast<int>(n) <= options.max_exact_vars) {
    ComponentSearch soft(formulas, cost_true, cost_false, false,
                         std::numeric_limits<std::size_t>::max());
    soft.run();
    return {soft.best().values, true};
  }
  ComponentSearch hard(formulas, cost_true, cost_false, true, options.node_budget);
  const bool complete = hard.run();
  if (hard.best().found) return {hard.best().values, complete};
  if (complete) {
    // Proven unsatisfiable: minimize the number of violated formulas.
    ComponentSearch soft(formulas, cost_true, cost_false, false, options.node_budget);
    const bool soft_complete = soft.run();
    if (soft.best().found) return {soft.best().values, soft_complete};
  }
  return {greedy_repair(formulas, cost_true, cost_false), false};
}

}  // namespace

double assignment_log_likelihood(const Eigen::VectorXd& beliefs, const Assignment& z,
                                 double clamp_epsilon) {
  double ll = 0;
  for (Eigen::Index j = 0; j < beliefs.size(); ++j) {
    const double p = clamp(beliefs[j], clamp_epsilon);
    ll += z[static_cast<std::size_t>(j)] ? std::log(p) : std::log(1.0 - p);
  }
  return ll;
}

std::size_t count_violations(std::span<const Formula> formulas, const Assignment& z) {
  std::size_t n = 0;
  for (const auto& f : formulas) n += evaluate(f, z) ? 0 : 1;
  return n;
}

CorrectionProblem build_problem(const std::string& subject,
                                std::span<const GroundedConstraint> grounded,
                                const BeliefModel& model, double clamp_epsilon) {
  CorrectionProblem p;
  p.subject = subject;
  for (const auto& g : grounded) {
    if (g.subject != subject) continue;
    std::vector<int> mapping;
    for (const auto& name : g.variables.names()) mapping.push_back(p.variables.intern(name));
    p.hard.push_back(rename_variables(g.formula, mapping));
  }
  p.beliefs.resize(p.variables.size());
  for (int j = 0; j < p.variables.size(); ++j) {
    p.beliefs[j] = clamp(model.belief(subject, p.variables.name(j)), clamp_epsilon);
  }
  return p;
}

Correction correct_beliefs(const CorrectionProblem& problem, const MaxSatOptions& options) {
  const int n = problem.variables.size();
  if (problem.beliefs.size() != n) {
    throw std::invalid_argument("one belief per variable required");
  }
  for (const auto& f : problem.hard) {
    if (f.variable_count() > n) throw std::invalid_argument("formula mentions unknown variable");
  }

  // Union-find over variables linked by a shared formula.
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&parent](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::vector<std::vector<int>> fvars(problem.hard.size());
  for (std::size_t f = 0; f < problem.hard.size(); ++f) {
    fvars[f] = variables_of(problem.hard[f]);
    for (std::size_t k = 1; k < fvars[f].size(); ++k) {
      const int a = find(fvars[f][0]);
      const int b = find(fvars[f][k]);
      if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
    }
  }
  std::map<int, std::vector<int>> components;  // root -> sorted member ids
  for (int v = 0; v < n; ++v) components[find(v)].push_back(v);
  std::map<int, std::vector<std::size_t>> component_formulas;
  std::vector<std::size_t> closed_formulas;
  for (std::size_t f = 0; f < problem.hard.size(); ++f) {
    if (fvars[f].empty()) {
      closed_formulas.push_back(f);
    } else {
      component_formulas[find(fvars[f][0])].push_back(f);
    }
  }

  Correction out;
  out.assignment.assign(static_cast<std::size_t>(n), false);
  for (const auto& [root, members] : components) {
    std::vector<int> local(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < members.size(); ++i) {
      local[static_cast<std::size_t>(members[i])] = static_cast<int>(i);
    }
    std::vector<Formula> formulas;
    for (std::size_t f : component_formulas[root]) {
      formulas.push_back(rename_variables(problem.hard[f], local));
    }
    std::vector<double> cost_true, cost_false;
    for (int v : members) {
      const double p = clamp(problem.beliefs[v], options.clamp_epsilon);
      cost_true.push_back(-std::log(p));
      cost_false.push_back(-std::log(1.0 - p));
    }
    const auto result = solve_component(formulas, cost_true, cost_false, options);
    out.exact = out.exact && result.exact;
    for (std::size_t i = 0; i < members.size(); ++i) {
      out.assignment[static_cast<std::size_t>(members[i])] = result.values[i] != 0;
    }
  }
  out.violated = count_violations(problem.hard, out.assignment);
  out.log_likelihood =
      assignment_log_likelihood(problem.beliefs, out.assignment, options.clamp_epsilon);
  return out;
}

std::vector<SubjectCorrection> correct_all(std::span<const GroundedConstraint> grounded,
                                           const BeliefModel& model, const MaxSatOptions& options,
                                           int jobs) {
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<GroundedConstraint>> by_subject;
  for (const auto& g : grounded) {
    auto [it, inserted] = by_subject.try_emplace(g.subject);
    if (inserted) subjects.push_back(g.subject);
    it->second.push_back(g);
  }
  std::sort(subjects.begin(), subjects.end());
  std::vector<SubjectCorrection> out(subjects.size());
  // Problems are built serially: provider-backed models are not thread-safe.
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out[i].problem = build_problem(subjects[i], by_subject[subjects[i]], model,
                                   options.clamp_epsilon);
  }
  parallel_for(subjects.size(), jobs, [&](std::size_t i) {
    out[i].correction = correct_beliefs(out[i].problem, options);
  });
  return out;
}

}  // namespace beliefkit
