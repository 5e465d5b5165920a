#include "beliefkit/belief.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>

namespace beliefkit {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> subjects, std::vector<std::string> properties)
    : subjects_(std::move(subjects)), properties_(std::move(properties)) {}

Vocabulary Vocabulary::from(std::span<const FactSet* const> fact_sets,
                            const ConstraintSet& constraints) {
  std::set<std::string> subjects;
  std::set<std::string> properties;
  for (const FactSet* fs : fact_sets) {
    for (const auto& f : *fs) {
      subjects.insert(f.subject);
      properties.insert(f.property);
    }
  }
  for (auto& p : constraints.properties()) properties.insert(std::move(p));
  return Vocabulary({subjects.begin(), subjects.end()}, {properties.begin(), properties.end()});
}

std::optional<FactIndex> Vocabulary::find(std::string_view subject,
                                          std::string_view property) const {
  auto s = subjects_.find(subject);
  auto p = properties_.find(property);
  if (!s || !p) return std::nullopt;
  return FactIndex{*s, *p};
}

FactIndex Vocabulary::index(std::string_view subject, std::string_view property) const {
  if (auto f = find(subject, property)) return *f;
  throw UnregisteredFact("fact (" + std::string(subject) + ", " + std::string(property) +
                         ") is not registered with the model");
}

// ---------------------------------------------------------------------------
// Tabular

TabularBeliefModel::TabularBeliefModel(Vocabulary vocab, double initial_logit)
    : BeliefModel(std::move(vocab)) {
  logits_ = Eigen::VectorXd::Constant(
      Eigen::Index{vocab_.num_subjects()} * vocab_.num_properties(), initial_logit);
}

Eigen::Index TabularBeliefModel::offset(FactIndex f) const {
  if (f.subject < 0 || f.subject >= vocab_.num_subjects() || f.property < 0 ||
      f.property >= vocab_.num_properties()) {
    throw UnregisteredFact("fact index out of range");
  }
  return Eigen::Index{f.subject} * vocab_.num_properties() + f.property;
}

double TabularBeliefModel::belief(FactIndex f) const { return logistic(logits_[offset(f)]); }

void TabularBeliefModel::add_gradient(FactIndex f, double dloss_dp, GradientBuffer& grad) const {
  const double p = belief(f);
  grad.add(offset(f), dloss_dp * p * (1.0 - p));
}

std::unique_ptr<BeliefModel> TabularBeliefModel::clone() const {
  return std::make_unique<TabularBeliefModel>(*this);
}

// ---------------------------------------------------------------------------
// Embedding

EmbeddingBeliefModel::EmbeddingBeliefModel(Vocabulary vocab, int dim, std::uint64_t seed)
    : BeliefModel(std::move(vocab)), dim_(dim) {
  if (dim <= 0) throw std::invalid_argument("embedding dimension must be positive");
  const Eigen::Index s = vocab_.num_subjects();
  const Eigen::Index p = vocab_.num_properties();
  params_ = Eigen::VectorXd::Zero((s + p) * dim + p + 1);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  for (Eigen::Index i = 0; i < (s + p) * dim; ++i) params_[i] = normal(rng);
}

Eigen::Map<EmbeddingBeliefModel::RowMatrix> EmbeddingBeliefModel::subject_vectors() {
  return {params_.data(), vocab_.num_subjects(), dim_};
}
Eigen::Map<const EmbeddingBeliefModel::RowMatrix> EmbeddingBeliefModel::subject_vectors() const {
  return {params_.data(), vocab_.num_subjects(), dim_};
}
Eigen::Map<EmbeddingBeliefModel::RowMatrix> EmbeddingBeliefModel::property_vectors() {
  return {params_.data() + property_offset(0), vocab_.num_properties(), dim_};
}
Eigen::Map<const EmbeddingBeliefModel::RowMatrix> EmbeddingBeliefModel::property_vectors() const {
  return {params_.data() + property_offset(0), vocab_.num_properties(), dim_};
}
Eigen::Map<Eigen::VectorXd> EmbeddingBeliefModel::property_bias() {
  return {params_.data() + bias_offset(0), vocab_.num_properties()};
}
Eigen::Map<const Eigen::VectorXd> EmbeddingBeliefModel::property_bias() const {
  return {params_.data() + bias_offset(0), vocab_.num_properties()};
}

double EmbeddingBeliefModel::logit(FactIndex f) const {
  if (f.subject < 0 || f.subject >= vocab_.num_subjects() || f.property < 0 ||
      f.property >= vocab_.num_properties()) {
    throw UnregisteredFact("fact index out of range");
  }
  const auto u = params_.segment(subject_offset(f.subject), dim_);
  const auto v = params_.segment(property_offset(f.property), dim_);
  return u.dot(v) + params_[bias_offset(f.property)] + global_bias();
}

double EmbeddingBeliefModel::belief(FactIndex f) const { return logistic(logit(f)); }

void EmbeddingBeliefModel::add_gradient(FactIndex f, double dloss_dp, GradientBuffer& grad) const {
  const double p = belief(f);
  const double g = dloss_dp * p * (1.0 - p);
  const Eigen::Index us = subject_offset(f.subject);
  const Eigen::Index vp = property_offset(f.property);
  for (int k = 0; k < dim_; ++k) {
    grad.add(us + k, g * params_[vp + k]);
    grad.add(vp + k, g * params_[us + k]);
  }
  grad.add(bias_offset(f.property), g);
  grad.add(params_.size() - 1, g);
}

std::unique_ptr<BeliefModel> EmbeddingBeliefModel::clone() const {
  return std::make_unique<EmbeddingBeliefModel>(*this);
}

Eigen::VectorXd parameter_gradient(const BeliefModel& model, FactIndex f, double dloss_dp) {
  GradientBuffer buf(model.parameters().size());
  model.add_gradient(f, dloss_dp, buf);
  return buf.values;
}

// ---------------------------------------------------------------------------
// Prompt rendering

namespace {

std::size_t count_occurrences(const std::string& s, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// "CanFly" -> "can fly", "living_thing" -> "living thing".
std::string humanize(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '_') {
      out.push_back(' ');
      continue;
    }
    if (std::isupper(static_cast<unsigned char>(c)) && i > 0 && s[i - 1] != ' ' &&
        s[i - 1] != '_' && !std::isupper(static_cast<unsigned char>(s[i - 1]))) {
      out.push_back(' ');
    }
    out.push_back(c);
  }
  return lower(out);
}

std::string with_article(const std::string& noun) {
  if (noun.empty()) return noun;
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(noun[0])));
  const bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
  return (vowel ? "an " : "a ") + noun;
}

}  // namespace

QueryTemplate::QueryTemplate(std::string pattern, std::string positive, std::string negative)
    : pattern_(std::move(pattern)), positive_(std::move(positive)), negative_(std::move(negative)) {
  if (count_occurrences(pattern_, "{subject}") != 1 ||
      count_occurrences(pattern_, "{property}") != 1) {
    throw std::invalid_argument(
        "query template must contain {subject} and {property} exactly once: '" + pattern_ + "'");
  }
  if (positive_.empty() || negative_.empty() || positive_ == negative_) {
    throw std::invalid_argument("query template needs two distinct answer options");
  }
}

std::string multiple_choice_prompt(std::string_view question, std::string_view positive,
                                   std::string_view negative) {
  std::string out = "$answer$ ; $mcoptions$ = (A) ";
  out.append(positive).append(". (B) ").append(negative).append(". ; $question$ = ");
  out.append(question);
  return out;
}

std::string subject_phrase(std::string_view subject) { return with_article(std::string(subject)); }

PhrasingTable::PhrasingTable(std::map<std::string, Rule> rules, Rule fallback)
    : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

const PhrasingTable& PhrasingTable::builtin() {
  static const PhrasingTable table(
      {
          {"IsA", {"Is {subject} {property}?", true}},
          {"HasA", {"Does {subject} have {property}?", true}},
          {"HasPart", {"Does {subject} have {property}?", true}},
          {"HasProperty", {"Is {subject} {property}?", false}},
          {"CapableOf", {"Can {subject} {property}?", false}},
          {"MadeOf", {"Is {subject} made of {property}?", false}},
      },
      {"Is it true that {subject} {property}?", false});
  return table;
}

std::pair<std::string, std::string> PhrasingTable::split(std::string_view property) const {
  if (const auto comma = property.find(','); comma != std::string_view::npos) {
    return {std::string(property.substr(0, comma)), std::string(property.substr(comma + 1))};
  }
  // Run-together form: longest known relation prefix followed by the object.
  std::string best;
  for (const auto& [relation, _] : rules_) {
    if (relation.size() < property.size() && property.substr(0, relation.size()) == relation &&
        relation.size() > best.size()) {
      best = relation;
    }
  }
  if (!best.empty()) return {best, std::string(property.substr(best.size()))};
  return {"", std::string(property)};
}

const PhrasingTable::Rule& PhrasingTable::rule_for(const std::string& relation) const {
  auto it = rules_.find(relation);
  return it == rules_.end() ? fallback_ : it->second;
}

QueryTemplate PhrasingTable::template_for(std::string_view property) const {
  const auto [relation, _] = split(property);
  return QueryTemplate(multiple_choice_prompt(rule_for(relation).question, "Yes", "No"));
}

std::string PhrasingTable::property_phrase(std::string_view property) const {
  const auto [relation, object] = split(property);
  auto it = rules_.find(relation);
  if (it == rules_.end()) {
    // Unknown relation: speak it as a verb phrase, e.g. "can fly".
    std::string phrase = humanize(relation);
    const std::string obj = humanize(object);
    if (!phrase.empty() && !obj.empty()) phrase.push_back(' ');
    return phrase + obj;
  }
  const std::string obj = humanize(object);
  return it->second.article ? with_article(obj) : obj;
}

std::string render_query(const Fact& fact, const QueryTemplate& tmpl,
                         const PhrasingTable& phrasing) {
  // Slots are located in the pattern, not in the partially rendered output.
  const std::string& pat = tmpl.pattern();
  const auto s = pat.find("{subject}");
  const auto p = pat.find("{property}");
  const std::string subject = subject_phrase(fact.subject);
  const std::string property = phrasing.property_phrase(fact.property);
  std::string out;
  if (s < p) {
    out = pat.substr(0, s) + subject + pat.substr(s + 9, p - s - 9) + property + pat.substr(p + 10);
  } else {
    out = pat.substr(0, p) + property + pat.substr(p + 10, s - p - 10) + subject + pat.substr(s + 9);
  }
  return out;
}

std::string render_query(const Fact& fact, const PhrasingTable& phrasing) {
  return render_query(fact, phrasing.template_for(fact.property), phrasing);
}

}  // namespace beliefkit
