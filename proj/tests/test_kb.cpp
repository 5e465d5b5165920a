#include <doctest.h>

#include <string>

#include "beliefkit/kb.hpp"

using namespace beliefkit;

namespace {

FactSet facts_of(std::vector<Fact> v) { return FactSet(std::move(v)); }

GeneralConstraint imp(std::string a, bool pa, std::string b, bool pb) {
  return {{std::move(a), pa}, {std::move(b), pb}, std::nullopt};
}

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("kb") {

TEST_CASE("canonical facts") {
  const FactSet fs = parse_facts(R"({"facts": [
    {"subject": "daffodil", "property": "IsA,flower", "label": true},
    {"subject": "albatross", "property": "CapableOf,fly", "label": false},
    {"subject": "daffodil", "property": "IsA,flower", "label": true}]})");
  REQUIRE(fs.size() == 2);
  CHECK(fs[0].subject == "albatross");
  CHECK(fs.subjects() == std::vector<std::string>{"albatross", "daffodil"});
  CHECK(fs.find("daffodil", "IsA,flower")->label == true);
  CHECK(fs.facts_with("IsA,flower").size() == 1);
  CHECK(parse_facts("{}").empty());
}

TEST_CASE("dataset facts layout") {
  const FactSet fs = parse_facts(R"({"daffodil": {"IsA,flower": "yes", "CapableOf,fly": "no"}})");
  REQUIRE(fs.size() == 2);
  CHECK(fs.find("daffodil", "CapableOf,fly")->label == false);
  CHECK_THROWS_AS(parse_facts(R"({"x": {"IsA,y": "maybe"}})"), KbParseError);
}

TEST_CASE("conflicting duplicates name the pair") {
  const std::string msg = error_of([] {
    parse_facts(R"({"facts": [{"subject": "s", "property": "p", "label": true},
                              {"subject": "s", "property": "p", "label": false}]})");
  });
  CHECK(msg.find("(s, p)") != std::string::npos);
  CHECK_THROWS_AS(facts_of({{"s", "p", true}, {"s", "p", false}}), KbIntegrityError);
}

TEST_CASE("malformed documents report a locator") {
  CHECK(error_of([] { parse_facts("{\n\"facts\": [\n}"); }).find("line 3") != std::string::npos);
  CHECK(error_of([] { parse_facts(R"({"facts": [{"subject": "s"}]})"); }).find("facts[0]") !=
        std::string::npos);
  CHECK(error_of([] {
          parse_facts(R"({"facts": [{"subject": "s", "property": "p", "label": true},
                                    {"subject": "s", "property": "q", "label": "yes"}]})");
        }).find("facts[1]") != std::string::npos);
}

TEST_CASE("canonical constraints") {
  const ConstraintSet cs = parse_constraints(R"({"constraints": [
    {"antecedent": {"property": "IsA,bird", "polarity": true},
     "consequent": {"property": "CapableOf,fly", "polarity": true}, "weight": 0.8},
    {"antecedent": {"property": "IsA,plant", "polarity": true},
     "consequent": {"property": "CapableOf,fly", "polarity": false}}]})");
  REQUIRE(cs.size() == 2);
  CHECK(cs[0] == GeneralConstraint{{"IsA,bird", true}, {"CapableOf,fly", true}, 0.8});
  CHECK(cs[1].consequent.polarity == false);
  CHECK(cs.is_antecedent("IsA,bird"));
  CHECK_FALSE(cs.is_antecedent("CapableOf,fly"));
  CHECK(cs.is_consequent("CapableOf,fly"));
  CHECK(parse_constraints("{}").empty());
}

TEST_CASE("constraint graph layout") {
  const ConstraintSet cs = parse_constraints(R"({"nodes": [], "links": [
    {"source": "IsA,bird", "target": "CapableOf,fly", "weight": "yes_yes", "direction": "forward", "score": 0.9},
    {"source": "IsA,plant", "target": "CapableOf,fly", "weight": "yes_no"},
    {"source": "HasPart,wing", "target": "IsA,bird", "weight": "yes_yes", "direction": "back"}]})");
  REQUIRE(cs.size() == 3);
  CHECK(cs[0] == GeneralConstraint{{"IsA,bird", true}, {"CapableOf,fly", true}, 0.9});
  CHECK(cs[1] == imp("IsA,plant", true, "CapableOf,fly", false));
  CHECK(cs[2] == imp("IsA,bird", true, "HasPart,wing", true));
  CHECK_THROWS_AS(parse_constraints(R"({"links": [{"source": "a", "target": "b", "weight": "yes_maybe"}]})"),
                  KbParseError);
  CHECK_THROWS_AS(parse_constraints(R"({"links": [{"source": "a", "target": "b", "weight": "sure"}]})"),
                  KbParseError);
}

TEST_CASE("self-implication is an integrity error") {
  CHECK_THROWS_AS(ConstraintSet({imp("p", true, "p", false)}), KbIntegrityError);
  CHECK_THROWS_AS(parse_constraints(R"({"links": [{"source": "a", "target": "a", "weight": "yes_no"}]})"),
                  KbIntegrityError);
}

TEST_CASE("canonical files round-trip") {
  const FactSet fs = facts_of({{"b", "p", true}, {"a", "q", false}, {"a", "r", std::nullopt}});
  CHECK(parse_facts(write_facts(fs)) == fs);
  const ConstraintSet cs({imp("p", true, "q", false), {{"q", false}, {"r", true}, 0.25}});
  CHECK(parse_constraints(write_constraints(cs)) == cs);
}

TEST_CASE("grounding with evidence, daffodil") {
  const FactSet fs = facts_of({{"daffodil", "IsAflower", true}});
  const ConstraintSet cs({imp("IsAflower", true, "IsMortal", true)});
  const GroundingResult g = ground_constraints(cs, fs, true);
  REQUIRE(g.constraints.size() == 1);
  const auto& gc = g.constraints[0];
  CHECK(gc.subject == "daffodil");
  CHECK(gc.variables.names() == std::vector<std::string>{"IsAflower", "IsMortal"});
  const Formula z1 = Formula::var(0), z2 = Formula::var(1);
  CHECK(gc.full_formula() == Formula::conjunction({Formula::implies(z1, z2), z1}));
  CHECK(ground_constraints(cs, fs, false).constraints[0].full_formula() == Formula::implies(z1, z2));
}

TEST_CASE("grounding skips contradicted constraints and only touches known subjects") {
  const FactSet fs = facts_of({{"s", "a", true}, {"s", "b", false}, {"t", "c", true}});
  const ConstraintSet cs({imp("a", true, "b", true), imp("c", true, "d", true), imp("x", true, "y", true)});
  const GroundingResult g = ground_constraints(cs, fs, true);
  REQUIRE(g.constraints.size() == 1);
  CHECK(g.constraints[0].subject == "t");
  REQUIRE(g.skipped.size() == 1);
  CHECK(g.skipped[0].subject == "s");
  CHECK(g.skipped[0].origin == 0);
  CHECK(ground_constraints(cs, fs, false).constraints.size() == 2);
}

TEST_CASE("grounding is monotone in the facts") {
  const ConstraintSet cs({imp("a", true, "b", true), imp("b", true, "c", false), imp("d", false, "a", true)});
  const FactSet small = facts_of({{"s", "a", true}});
  const FactSet large = facts_of({{"s", "a", true}, {"s", "c", false}, {"t", "d", true}});
  CHECK(ground_constraints(cs, small, false).constraints.size() <=
        ground_constraints(cs, large, false).constraints.size());
  for (const auto& g : ground_constraints(cs, large, false).constraints) {
    const auto& origin = cs[g.origin];
    CHECK((large.contains(g.subject, origin.antecedent.property) ||
           large.contains(g.subject, origin.consequent.property)));
  }
}

TEST_CASE("T1/T2 split") {
  const ConstraintSet cs({imp("a", true, "b", true), imp("b", true, "c", true), imp("a", true, "d", false)});
  const FactSet fs = facts_of({{"s", "a", true}, {"s", "b", true}, {"s", "c", true},
                               {"s", "d", false}, {"s", "z", true}});
  const FactSplit split = split_t1_t2(fs, cs);
  CHECK(split.antecedents.size() == 2);  // a, b (b is both)
  CHECK(split.consequents.size() == 2);  // c, d
  CHECK(split.excluded == 1);
  const FactSplit none = split_t1_t2(facts_of({{"s", "z", true}}), cs);
  CHECK(none.antecedents.empty());
  CHECK(none.consequents.empty());
}

TEST_CASE("fractional sampling") {
  std::vector<Fact> v;
  for (int i = 0; i < 1072; ++i) v.push_back({"s" + std::to_string(i % 7), "p" + std::to_string(i), i % 3 == 0});
  const FactSet fs(std::move(v));
  const auto [train, held] = sample_fraction(fs, 0.05, 7);
  CHECK(train.size() == 53);
  CHECK(held.size() == 1019);
  CHECK(merge(train, held) == fs);
  const auto again = sample_fraction(fs, 0.05, 7);
  CHECK(again.first == train);
  CHECK(sample_fraction(fs, 0.05, 8).first != train);
  CHECK(sample_fraction(fs, 0.0, 1).first.empty());
  CHECK(sample_fraction(fs, 1.0, 1).second.empty());
  CHECK_THROWS_AS(sample_fraction(fs, 1.5, 1), std::invalid_argument);
}

}
