#include "beliefkit/kb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace beliefkit {

using nlohmann::json;

// ---------------------------------------------------------------------------
// FactSet / ConstraintSet

FactSet::FactSet(std::vector<Fact> facts) {
  for (const auto& f : facts) {
    if (f.subject.empty() || f.property.empty()) {
      throw KbIntegrityError("fact with empty subject or property");
    }
  }
  std::stable_sort(facts.begin(), facts.end(), [](const Fact& a, const Fact& b) {
    return std::tie(a.subject, a.property) < std::tie(b.subject, b.property);
  });
  for (auto& f : facts) {
    if (!facts_.empty() && facts_.back().subject == f.subject &&
        facts_.back().property == f.property) {
      if (facts_.back().label != f.label) {
        throw KbIntegrityError("conflicting labels for fact (" + f.subject + ", " + f.property +
                               ")");
      }
      continue;
    }
    facts_.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    by_subject_[facts_[i].subject].push_back(i);
    by_property_[facts_[i].property].push_back(i);
  }
}

const Fact* FactSet::find(std::string_view subject, std::string_view property) const {
  auto it = by_subject_.find(subject);
  if (it == by_subject_.end()) return nullptr;
  const auto& idx = it->second;
  auto pos = std::lower_bound(idx.begin(), idx.end(), property,
                              [this](std::size_t i, std::string_view p) {
                                return facts_[i].property < p;
                              });
  if (pos == idx.end() || facts_[*pos].property != property) return nullptr;
  return &facts_[*pos];
}

std::vector<std::string> FactSet::subjects() const {
  std::vector<std::string> out;
  out.reserve(by_subject_.size());
  for (const auto& [s, _] : by_subject_) out.push_back(s);
  return out;
}

std::span<const std::size_t> FactSet::facts_of(std::string_view subject) const {
  auto it = by_subject_.find(subject);
  if (it == by_subject_.end()) return {};
  return it->second;
}

std::span<const std::size_t> FactSet::facts_with(std::string_view property) const {
  auto it = by_property_.find(property);
  if (it == by_property_.end()) return {};
  return it->second;
}

ConstraintSet::ConstraintSet(std::vector<GeneralConstraint> constraints)
    : constraints_(std::move(constraints)) {
  for (std::size_t i = 0; i < constraints_.size(); ++i) {
    const auto& c = constraints_[i];
    if (c.antecedent.property.empty() || c.consequent.property.empty()) {
      throw KbIntegrityError("constraint " + std::to_string(i) + " has an empty property");
    }
    if (c.antecedent.property == c.consequent.property) {
      throw KbIntegrityError("constraint " + std::to_string(i) + " is a self-implication on " +
                             c.antecedent.property);
    }
    as_antecedent_[c.antecedent.property].push_back(i);
    as_consequent_[c.consequent.property].push_back(i);
  }
}

bool ConstraintSet::is_antecedent(std::string_view property) const {
  return as_antecedent_.find(property) != as_antecedent_.end();
}

bool ConstraintSet::is_consequent(std::string_view property) const {
  return as_consequent_.find(property) != as_consequent_.end();
}

std::vector<std::string> ConstraintSet::properties() const {
  std::set<std::string> all;
  for (const auto& [p, _] : as_antecedent_) all.insert(p);
  for (const auto& [p, _] : as_consequent_) all.insert(p);
  return {all.begin(), all.end()};
}

Formula GroundedConstraint::full_formula() const { return conjoin_evidence(formula, evidence); }

// ---------------------------------------------------------------------------
// Parsing

namespace {

json parse_json(std::string_view document) {
  try {
    return json::parse(document);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number for the diagnostic.
    const std::size_t offset = std::min<std::size_t>(e.byte, document.size());
    const auto line = 1 + std::count(document.begin(), document.begin() + offset, '\n');
    throw KbParseError("malformed JSON at line " + std::to_string(line) + ": " + e.what());
  }
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw KbParseError(where + ": missing string field '" + key + "'");
  }
  if (it->get_ref<const std::string&>().empty()) {
    throw KbParseError(where + ": empty field '" + key + "'");
  }
  return it->get<std::string>();
}

bool yes_no(const json& v, const std::string& where) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "yes") return true;
    if (s == "no") return false;
  }
  throw KbParseError(where + ": unknown truth marker " + v.dump());
}

bool looks_canonical_facts(const json& doc) {
  auto it = doc.find("facts");
  return it != doc.end() && it->is_array();
}

FactSet parse_canonical_facts(const json& doc) {
  std::vector<Fact> facts;
  if (doc.empty()) return FactSet{};
  const auto& arr = doc.at("facts");
  facts.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "facts[" + std::to_string(i) + "]";
    const auto& rec = arr[i];
    if (!rec.is_object()) throw KbParseError(where + ": record is not an object");
    Fact f{require_string(rec, "subject", where), require_string(rec, "property", where),
           std::nullopt};
    if (auto it = rec.find("label"); it != rec.end() && !it->is_null()) {
      if (!it->is_boolean()) throw KbParseError(where + ": label must be true or false");
      f.label = it->get<bool>();
    }
    facts.push_back(std::move(f));
  }
  return FactSet(std::move(facts));
}

FactSet parse_beliefbank_facts(const json& doc) {
  std::vector<Fact> facts;
  for (const auto& [subject, props] : doc.items()) {
    if (!props.is_object()) throw KbParseError("subject '" + subject + "': expected an object");
    for (const auto& [property, value] : props.items()) {
      facts.push_back({subject, property, yes_no(value, subject + "/" + property)});
    }
  }
  return FactSet(std::move(facts));
}

Literal parse_literal(const json& rec, const std::string& where) {
  if (!rec.is_object()) throw KbParseError(where + ": literal is not an object");
  Literal lit{require_string(rec, "property", where), true};
  if (auto it = rec.find("polarity"); it != rec.end()) {
    if (!it->is_boolean()) throw KbParseError(where + ": unknown polarity marker " + it->dump());
    lit.polarity = it->get<bool>();
  }
  return lit;
}

ConstraintSet parse_canonical_constraints(const json& doc) {
  std::vector<GeneralConstraint> out;
  if (doc.empty()) return ConstraintSet{};
  const auto& arr = doc.at("constraints");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "constraints[" + std::to_string(i) + "]";
    const auto& rec = arr[i];
    if (!rec.is_object() || !rec.contains("antecedent") || !rec.contains("consequent")) {
      throw KbParseError(where + ": expected antecedent and consequent");
    }
    GeneralConstraint c{parse_literal(rec["antecedent"], where + ".antecedent"),
                        parse_literal(rec["consequent"], where + ".consequent"), std::nullopt};
    if (auto it = rec.find("weight"); it != rec.end() && !it->is_null()) {
      if (!it->is_number()) throw KbParseError(where + ": weight must be numeric");
      c.weight = it->get<double>();
    }
    out.push_back(std::move(c));
  }
  return ConstraintSet(std::move(out));
}

// Published constraint graph: links carry "weight" ∈ {yes_yes, yes_no, no_yes,
// no_no} giving (source polarity, target polarity), "direction" ∈ {forward,
// back} and an optional numeric "score".
ConstraintSet parse_beliefbank_constraints(const json& doc) {
  std::vector<GeneralConstraint> out;
  const auto& links = doc.at("links");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string where = "links[" + std::to_string(i) + "]";
    const auto& rec = links[i];
    const std::string source = require_string(rec, "source", where);
    const std::string target = require_string(rec, "target", where);
    const std::string marker = require_string(rec, "weight", where);
    const auto sep = marker.find('_');
    if (sep == std::string::npos) throw KbParseError(where + ": unknown polarity marker " + marker);
    const bool src_pol = yes_no(json(marker.substr(0, sep)), where + ".weight");
    const bool tgt_pol = yes_no(json(marker.substr(sep + 1)), where + ".weight");
    std::string direction = "forward";
    if (auto it = rec.find("direction"); it != rec.end()) {
      if (!it->is_string()) throw KbParseError(where + ": direction must be a string");
      direction = it->get<std::string>();
    }
    GeneralConstraint c;
    if (direction == "forward") {
      c.antecedent = {source, src_pol};
      c.consequent = {target, tgt_pol};
    } else if (direction == "back") {
      c.antecedent = {target, tgt_pol};
      c.consequent = {source, src_pol};
    } else {
      throw KbParseError(where + ": unknown direction '" + direction + "'");
    }
    if (auto it = rec.find("score"); it != rec.end() && it->is_number()) {
      c.weight = it->get<double>();
    }
    out.push_back(std::move(c));
  }
  return ConstraintSet(std::move(out));
}

}  // namespace

FactSet parse_facts(std::string_view document, DataFormat format) {
  const json doc = parse_json(document);
  if (!doc.is_object()) throw KbParseError("facts document must be a JSON object");
  switch (format) {
    case DataFormat::kCanonical: return parse_canonical_facts(doc);
    case DataFormat::kBeliefBank: return parse_beliefbank_facts(doc);
    case DataFormat::kAuto:
      return looks_canonical_facts(doc) || doc.empty() ? parse_canonical_facts(doc)
                                                        : parse_beliefbank_facts(doc);
  }
  return {};
}

ConstraintSet parse_constraints(std::string_view document, DataFormat format) {
  const json doc = parse_json(document);
  if (!doc.is_object()) throw KbParseError("constraints document must be a JSON object");
  const bool graph = doc.contains("links");
  if (format == DataFormat::kBeliefBank || (format == DataFormat::kAuto && graph)) {
    if (!graph) throw KbParseError("constraint graph has no 'links' array");
    return parse_beliefbank_constraints(doc);
  }
  if (!doc.empty() && !(doc.contains("constraints") && doc["constraints"].is_array())) {
    throw KbParseError("constraints document has no 'constraints' array");
  }
  return parse_canonical_constraints(doc);
}

// ---------------------------------------------------------------------------
// Writing

std::string write_facts(const FactSet& facts) {
  json arr = json::array();
  for (const auto& f : facts) {
    json rec{{"subject", f.subject}, {"property", f.property}};
    if (f.label) rec["label"] = *f.label;
    arr.push_back(std::move(rec));
  }
  return json{{"facts", std::move(arr)}}.dump(1) + "\n";
}

std::string write_constraints(const ConstraintSet& constraints) {
  json arr = json::array();
  for (const auto& c : constraints) {
    json rec{{"antecedent", {{"property", c.antecedent.property},
                             {"polarity", c.antecedent.polarity}}},
             {"consequent", {{"property", c.consequent.property},
                             {"polarity", c.consequent.polarity}}}};
    if (c.weight) rec["weight"] = *c.weight;
    arr.push_back(std::move(rec));
  }
  return json{{"constraints", std::move(arr)}}.dump(1) + "\n";
}

std::string write_grounded(const GroundingResult& grounded) {
  json arr = json::array();
  for (const auto& g : grounded.constraints) {
    json ev = json::array();
    for (const auto& [id, value] : g.evidence) {
      ev.push_back({{"property", g.variables.name(id)}, {"label", value}});
    }
    arr.push_back({{"subject", g.subject},
                   {"origin", g.origin},
                   {"formula", to_string(g.formula, g.variables)},
                   {"evidence", std::move(ev)}});
  }
  json skipped = json::array();
  for (const auto& s : grounded.skipped) {
    skipped.push_back({{"subject", s.subject}, {"origin", s.origin}, {"reason", s.reason}});
  }
  return json{{"grounded", std::move(arr)}, {"skipped", std::move(skipped)}}.dump(1) + "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path);
}

FactSet load_facts(const std::string& path, DataFormat format) {
  try {
    return parse_facts(read_file(path), format);
  } catch (const KbParseError& e) {
    throw KbParseError(path + ": " + e.what());
  }
}

ConstraintSet load_constraints(const std::string& path, DataFormat format) {
  try {
    return parse_constraints(read_file(path), format);
  } catch (const KbParseError& e) {
    throw KbParseError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Grounding and splits

GroundingResult ground_constraints(const ConstraintSet& constraints, const FactSet& facts,
                                   bool with_evidence) {
  GroundingResult out;
  for (const auto& subject : facts.subjects()) {
    for (std::size_t ci = 0; ci < constraints.size(); ++ci) {
      const auto& c = constraints[ci];
      const Fact* ante = facts.find(subject, c.antecedent.property);
      const Fact* cons = facts.find(subject, c.consequent.property);
      if (ante == nullptr && cons == nullptr) continue;

      GroundedConstraint g;
      g.subject = subject;
      g.origin = ci;
      const int a = g.variables.intern(c.antecedent.property);
      const int b = g.variables.intern(c.consequent.property);
      g.formula = Formula::implies(Formula::literal(a, c.antecedent.polarity),
                                   Formula::literal(b, c.consequent.polarity));
      if (with_evidence) {
        if (ante != nullptr && ante->label) g.evidence.emplace_back(a, *ante->label);
        if (cons != nullptr && cons->label) g.evidence.emplace_back(b, *cons->label);
        if (satisfying_masks(g.full_formula(), g.variables.size()).empty()) {
          out.skipped.push_back({subject, ci, "evidence contradicts the implication"});
          continue;
        }
      }
      out.constraints.push_back(std::move(g));
    }
  }
  return out;
}

FactSplit split_t1_t2(const FactSet& facts, const ConstraintSet& constraints) {
  std::vector<Fact> t1, t2;
  std::size_t excluded = 0;
  for (const auto& f : facts) {
    if (constraints.is_antecedent(f.property)) {
      t1.push_back(f);
    } else if (constraints.is_consequent(f.property)) {
      t2.push_back(f);
    } else {
      ++excluded;
    }
  }
  return {FactSet(std::move(t1)), FactSet(std::move(t2)), excluded};
}

std::pair<FactSet, FactSet> sample_fraction(const FactSet& facts, double fraction,
                                            std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("fraction must lie in [0, 1]");
  }
  const std::size_t n = facts.size();
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Fact> picked, rest;
  for (std::size_t i = 0; i < n; ++i) (i < k ? picked : rest).push_back(facts[order[i]]);
  return {FactSet(std::move(picked)), FactSet(std::move(rest))};
}

FactSet merge(const FactSet& a, const FactSet& b) {
  std::vector<Fact> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  return FactSet(std::move(all));
}

}  // namespace beliefkit
