#include "beliefkit/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace beliefkit {

using nlohmann::json;

void OverridePredictor::set(std::string subject, std::string property, bool value) {
  values_[{std::move(subject), std::move(property)}] = value;
}

bool OverridePredictor::predict(std::string_view subject, std::string_view property) const {
  // std::pair has no heterogeneous comparison with string_view pairs.
  auto it = values_.find(std::pair<std::string, std::string>(subject, property));
  if (it != values_.end()) return it->second;
  return fallback_.predict(subject, property);
}

double ConfusionCounts::f1() const {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double ConsistencyCounts::score() const {
  if (active == 0) return 1.0;
  return 1.0 - static_cast<double>(violated) / static_cast<double>(active);
}

double Report::consistency() const { return ConsistencyCounts{active, violated}.score(); }

ConfusionCounts confusion(const Predictor& predictor, const FactSet& facts) {
  ConfusionCounts c;
  for (const auto& f : facts) {
    if (!f.label) continue;
    const bool pred = predictor.predict(f.subject, f.property);
    if (pred && *f.label) ++c.tp;
    else if (pred && !*f.label) ++c.fp;
    else if (!pred && *f.label) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Report f1_scores(const Predictor& predictor, const FactSplit& split) {
  Report r;
  r.antecedents = confusion(predictor, split.antecedents);
  r.consequents = confusion(predictor, split.consequents);
  r.total = r.antecedents;
  r.total += r.consequents;
  return r;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&]() {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ConsistencyCounts logical_consistency(const Predictor& predictor,
                                      std::span<const std::string> subjects,
                                      const ConstraintSet& constraints, int jobs) {
  std::vector<ConsistencyCounts> per_subject(subjects.size());
  parallel_for(subjects.size(), jobs, [&](std::size_t i) {
    ConsistencyCounts c;
    for (const auto& k : constraints) {
      const bool ante = predictor.predict(subjects[i], k.antecedent.property) == k.antecedent.polarity;
      if (!ante) continue;
      ++c.active;
      const bool cons = predictor.predict(subjects[i], k.consequent.property) == k.consequent.polarity;
      if (!cons) ++c.violated;
    }
    per_subject[i] = c;
  });
  ConsistencyCounts total;
  for (const auto& c : per_subject) {
    total.active += c.active;
    total.violated += c.violated;
  }
  return total;
}

Report evaluate(const Predictor& predictor, const FactSplit& split,
                std::span<const std::string> subjects, const ConstraintSet& constraints,
                int jobs) {
  Report r = f1_scores(predictor, split);
  const auto c = logical_consistency(predictor, subjects, constraints, jobs);
  r.active = c.active;
  r.violated = c.violated;
  return r;
}

SimilarityMatrix similarity_matrix(const EmbeddingBeliefModel& model,
                                   std::span<const std::string> subjects_a,
                                   std::span<const std::string> subjects_b) {
  const auto u = model.subject_vectors();
  const auto& names = model.vocabulary().subjects();
  const auto rows_of = [&](std::span<const std::string> subjects) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(subjects.size()), model.dim());
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const auto id = names.find(subjects[i]);
      if (!id) throw UnregisteredFact("subject '" + subjects[i] + "' has no embedding");
      m.row(static_cast<Eigen::Index>(i)) = u.row(*id);
    }
    return m;
  };
  const Eigen::MatrixXd a = rows_of(subjects_a);
  const Eigen::MatrixXd b = rows_of(subjects_b);
  const Eigen::VectorXd na = a.rowwise().norm();
  const Eigen::VectorXd nb = b.rowwise().norm();

  SimilarityMatrix out;
  out.values = a * b.transpose();
  for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
      if (na[i] == 0.0 || nb[j] == 0.0) {
        out.values(i, j) = std::numeric_limits<double>::quiet_NaN();
        out.undefined.emplace_back(static_cast<int>(i), static_cast<int>(j));
      } else {
        out.values(i, j) = std::clamp(out.values(i, j) / (na[i] * nb[j]), -1.0, 1.0);
      }
    }
  }
  return out;
}

namespace {

json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}, {"f1", c.f1()}};
}

std::string fixed(double v, int precision) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

std::string report_json(const Report& report, int indent) {
  json doc{{"antecedents", counts_json(report.antecedents)},
           {"consequents", counts_json(report.consequents)},
           {"total", counts_json(report.total)},
           {"logical_consistency",
            {{"score", report.consistency()},
             {"active", report.active},
             {"violated", report.violated}}}};
  return doc.dump(indent) + "\n";
}

std::string format_table(std::span<const TableRow> rows) {
  const bool timed = std::any_of(rows.begin(), rows.end(),
                                 [](const TableRow& r) { return r.seconds >= 0; });
  std::size_t w_method = 6, w_subset = 12;
  for (const auto& r : rows) {
    w_method = std::max(w_method, r.method.size());
    w_subset = std::max(w_subset, r.subset.size());
  }
  std::ostringstream os;
  const auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  const auto lpad = [](const std::string& s, std::size_t w) {
    return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
  };
  os << pad("Method", w_method) << "  " << pad("Train subset", w_subset) << "  "
     << lpad("Antecedents F1", 14) << "  " << lpad("Consequents F1", 14) << "  "
     << lpad("Total F1", 8) << "  " << lpad("Logical consistency", 19);
  if (timed) os << "  " << lpad("Seconds", 9);
  os << "\n";
  for (const auto& r : rows) {
    os << pad(r.method, w_method) << "  " << pad(r.subset, w_subset) << "  "
       << lpad(fixed(r.report.antecedent_f1(), 2), 14) << "  "
       << lpad(fixed(r.report.consequent_f1(), 2), 14) << "  "
       << lpad(fixed(r.report.total_f1(), 2), 8) << "  "
       << lpad(fixed(r.report.consistency(), 2), 19);
    if (timed) os << "  " << lpad(r.seconds >= 0 ? fixed(r.seconds, 2) : "-", 9);
    os << "\n";
  }
  return os.str();
}

std::string similarity_csv(const SimilarityMatrix& m, std::span<const std::string> rows,
                           std::span<const std::string> cols) {
  const auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };
  std::ostringstream os;
  os << "subject";
  for (const auto& c : cols) os << ',' << quote(c);
  os << '\n';
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    os << quote(rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
      os << ',';
      if (std::isnan(m.values(i, j))) {
        os << "NaN";
      } else {
        os << fixed(m.values(i, j), 6);
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace beliefkit
