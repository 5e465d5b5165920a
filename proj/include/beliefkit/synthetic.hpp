#ifndef BELIEFKIT_SYNTHETIC_HPP_
#define BELIEFKIT_SYNTHETIC_HPP_

#include <cstdint>
#include <string>

namespace beliefkit {

/// Shape of a generated knowledge base. Subjects are instances of leaf
/// classes in a three-level taxonomy; IsA facts are antecedents and class
/// features (HasPart, CapableOf, HasProperty, MadeOf) are consequent-only.
struct SyntheticOptions {
  std::uint64_t seed = 0;
  int roots = 6;
  int mids_per_root = 3;
  int leaves_per_mid = 4;
  int pool_per_mid = 8;        // features owned by each mid-level class
  int features_per_class = 3;  // drawn from the mid's pool
  int calibration_subjects = 7;
  int silver_subjects = 85;
  int facts_per_subject = 150;
  int unconstrained_per_subject = 2;  // facts no constraint mentions
};

/// Documents in the published dataset's layout: facts as
/// {subject: {property: "yes" | "no"}} and constraints as a node/link graph.
struct SyntheticKb {
  std::string calibration_facts;
  std::string silver_facts;
  std::string constraints;
};

/// Deterministic in options. Labels follow from each subject's leaf class, so
/// every generated fact set satisfies every generated constraint.
SyntheticKb generate_synthetic(const SyntheticOptions& options = {});

/// Writes calibration_facts.json, silver_facts.json and constraints_v2.json.
void write_synthetic(const std::string& directory, const SyntheticOptions& options = {});

}  // namespace beliefkit

#endif  // BELIEFKIT_SYNTHETIC_HPP_
