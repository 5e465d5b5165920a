#include "beliefkit/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "beliefkit/kb.hpp"

namespace beliefkit {

using nlohmann::json;

namespace {

struct Taxonomy {
  std::vector<std::string> roots;
  std::vector<std::vector<std::string>> mids;                 // [root][mid]
  std::vector<std::vector<std::vector<std::string>>> leaves;  // [root][mid][leaf]
  std::vector<std::vector<std::vector<std::string>>> pools;   // [root][mid] -> features
  std::vector<std::vector<std::vector<std::string>>> mid_features;
  std::vector<std::vector<std::vector<std::vector<std::string>>>> leaf_features;
};

std::string isa(const std::string& cls) { return "IsA," + cls; }

std::string numbered(const char* prefix, int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03d", prefix, n);
  return buf;
}

std::vector<std::string> draw(std::vector<std::string> pool, int k, std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k)));
  std::sort(pool.begin(), pool.end());
  return pool;
}

Taxonomy build_taxonomy(const SyntheticOptions& o, std::mt19937_64& rng) {
  static const char* kRelations[] = {"HasPart,", "CapableOf,", "HasProperty,", "MadeOf,"};
  Taxonomy t;
  int feature_id = 0;
  for (int r = 0; r < o.roots; ++r) {
    const std::string root = "c" + std::to_string(r);
    t.roots.push_back(root);
    t.mids.emplace_back();
    t.leaves.emplace_back();
    t.pools.emplace_back();
    t.mid_features.emplace_back();
    t.leaf_features.emplace_back();
    for (int m = 0; m < o.mids_per_root; ++m) {
      const std::string mid = root + "_" + std::to_string(m);
      t.mids[r].push_back(mid);
      std::vector<std::string> pool;
      for (int k = 0; k < o.pool_per_mid; ++k, ++feature_id) {
        pool.push_back(kRelations[feature_id % 4] + numbered("f", feature_id));
      }
      const auto own = draw(pool, o.features_per_class, rng);
      std::vector<std::string> rest;
      for (const auto& f : pool) {
        if (!std::binary_search(own.begin(), own.end(), f)) rest.push_back(f);
      }
      t.pools[r].push_back(pool);
      t.mid_features[r].push_back(own);
      t.leaves[r].emplace_back();
      t.leaf_features[r].emplace_back();
      for (int l = 0; l < o.leaves_per_mid; ++l) {
        t.leaves[r][m].push_back(mid + "_" + std::to_string(l));
        t.leaf_features[r][m].push_back(draw(rest, o.features_per_class, rng));
      }
    }
  }
  return t;
}

json link(const std::string& source, const std::string& target, bool target_polarity,
          std::mt19937_64& rng) {
  std::uniform_int_distribution<int> score(500, 1000);
  return {{"source", source},
          {"target", target},
          {"weight", target_polarity ? "yes_yes" : "yes_no"},
          {"direction", "forward"},
          {"score", score(rng) / 1000.0}};
}

json build_constraints(const Taxonomy& t, std::mt19937_64& rng) {
  json links = json::array();
  std::set<std::string> nodes;
  const auto add = [&](const std::string& a, const std::string& b, bool pol) {
    nodes.insert(a);
    nodes.insert(b);
    links.push_back(link(a, b, pol, rng));
  };
  const auto exclusive = [&](const std::vector<std::string>& siblings) {
    for (const auto& a : siblings) {
      for (const auto& b : siblings) {
        if (a != b) add(isa(a), isa(b), false);
      }
    }
  };
  const std::size_t R = t.roots.size();
  exclusive(t.roots);
  for (std::size_t r = 0; r < R; ++r) {
    exclusive(t.mids[r]);
    for (std::size_t m = 0; m < t.mids[r].size(); ++m) {
      const auto& mid = t.mids[r][m];
      add(isa(mid), isa(t.roots[r]), true);
      for (const auto& f : t.mid_features[r][m]) add(isa(mid), f, true);
      exclusive(t.leaves[r][m]);
      for (std::size_t l = 0; l < t.leaves[r][m].size(); ++l) {
        const auto& leaf = t.leaves[r][m][l];
        const auto& own = t.leaf_features[r][m][l];
        add(isa(leaf), isa(mid), true);
        for (const auto& f : own) add(isa(leaf), f, true);
        // Pool features neither the leaf nor its parent has.
        for (const auto& f : t.pools[r][m]) {
          const auto& parent = t.mid_features[r][m];
          if (std::find(own.begin(), own.end(), f) == own.end() &&
              std::find(parent.begin(), parent.end(), f) == parent.end()) {
            add(isa(leaf), f, false);
          }
        }
      }
      // Features owned by sibling mids.
      for (std::size_t m2 = 0; m2 < t.mids[r].size(); ++m2) {
        if (m2 == m) continue;
        for (const auto& f : t.pools[r][m2]) add(isa(mid), f, false);
      }
    }
    // Features owned anywhere under another root.
    for (std::size_t r2 = 0; r2 < R; ++r2) {
      if (r2 == r) continue;
      for (const auto& pool : t.pools[r2]) {
        for (const auto& f : pool) add(isa(t.roots[r]), f, false);
      }
    }
  }
  json node_list = json::array();
  for (const auto& n : nodes) node_list.push_back({{"id", n}});
  return {{"nodes", node_list}, {"links", links}};
}

json build_facts(const Taxonomy& t, const SyntheticOptions& o, const char* prefix, int count,
                 std::mt19937_64& rng) {
  std::vector<std::string> all_properties;
  for (std::size_t r = 0; r < t.roots.size(); ++r) {
    all_properties.push_back(isa(t.roots[r]));
    for (std::size_t m = 0; m < t.mids[r].size(); ++m) {
      all_properties.push_back(isa(t.mids[r][m]));
      for (const auto& leaf : t.leaves[r][m]) all_properties.push_back(isa(leaf));
      for (const auto& f : t.pools[r][m]) all_properties.push_back(f);
    }
  }
  std::vector<std::string> unconstrained;
  for (int k = 0; k < 20; ++k) unconstrained.push_back("HasProperty," + numbered("trait", k));

  std::uniform_int_distribution<std::size_t> pick_root(0, t.roots.size() - 1);
  json doc = json::object();
  for (int s = 0; s < count; ++s) {
    const std::size_t r = pick_root(rng);
    std::uniform_int_distribution<std::size_t> pick_mid(0, t.mids[r].size() - 1);
    const std::size_t m = pick_mid(rng);
    std::uniform_int_distribution<std::size_t> pick_leaf(0, t.leaves[r][m].size() - 1);
    const std::size_t l = pick_leaf(rng);

    std::set<std::string> truths{isa(t.roots[r]), isa(t.mids[r][m]), isa(t.leaves[r][m][l])};
    truths.insert(t.mid_features[r][m].begin(), t.mid_features[r][m].end());
    truths.insert(t.leaf_features[r][m][l].begin(), t.leaf_features[r][m][l].end());

    std::vector<std::string> negatives;
    for (const auto& p : all_properties) {
      if (!truths.count(p)) negatives.push_back(p);
    }
    const int n_false = std::max(0, o.facts_per_subject - static_cast<int>(truths.size()));
    json facts = json::object();
    for (const auto& p : truths) facts[p] = "yes";
    for (const auto& p : draw(negatives, n_false, rng)) facts[p] = "no";
    std::bernoulli_distribution coin(0.3);
    for (const auto& p : draw(unconstrained, o.unconstrained_per_subject, rng)) {
      facts[p] = coin(rng) ? "yes" : "no";
    }
    doc[numbered(prefix, s)] = std::move(facts);
  }
  return doc;
}

}  // namespace

SyntheticKb generate_synthetic(const SyntheticOptions& o) {
  if (o.roots < 2 || o.mids_per_root < 1 || o.leaves_per_mid < 1 || o.pool_per_mid < 1 ||
      o.features_per_class < 0 || o.calibration_subjects < 0 || o.silver_subjects < 0 ||
      o.facts_per_subject < 0 || o.unconstrained_per_subject < 0) {
    throw std::invalid_argument("invalid synthetic KB options");
  }
  std::mt19937_64 rng(o.seed);
  const Taxonomy t = build_taxonomy(o, rng);
  SyntheticKb kb;
  kb.constraints = build_constraints(t, rng).dump(1) + "\n";
  kb.calibration_facts = build_facts(t, o, "subject_c", o.calibration_subjects, rng).dump(1) + "\n";
  kb.silver_facts = build_facts(t, o, "subject_s", o.silver_subjects, rng).dump(1) + "\n";
  return kb;
}

void write_synthetic(const std::string& directory, const SyntheticOptions& options) {
  const SyntheticKb kb = generate_synthetic(options);
  std::filesystem::create_directories(directory);
  const std::filesystem::path dir(directory);
  write_file((dir / "calibration_facts.json").string(), kb.calibration_facts);
  write_file((dir / "silver_facts.json").string(), kb.silver_facts);
  write_file((dir / "constraints_v2.json").string(), kb.constraints);
}

}  // namespace beliefkit
