#pragma once

// Shared helpers for the test binaries: fixture paths, small random instance
// generators and brute-force oracles that do not reuse library code paths.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "reshuffle/kg.hpp"
#include "reshuffle/rulegraph.hpp"
#include "reshuffle/rules.hpp"

namespace testsupport {

using namespace reshuffle;

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(RESHUFFLE_FIXTURE_DIR) / name;
}

struct NamedTriple {
  std::string h, r, t;
  auto operator<=>(const NamedTriple&) const = default;
};

struct NamedRule {
  std::vector<std::string> body;
  std::string head;
};

// Naive fixpoint over named triples: follow each rule body as a relational
// path from every entity, add the head, repeat until nothing changes.
inline std::set<NamedTriple> brute_closure(const std::vector<NamedRule>& rules,
                                           std::set<NamedTriple> facts) {
  bool changed = true;
  while (changed) {
    changed = false;
    std::set<std::string> entities;
    for (const auto& f : facts) {
      entities.insert(f.h);
      entities.insert(f.t);
    }
    std::vector<NamedTriple> found;
    for (const auto& rule : rules) {
      for (const auto& start : entities) {
        std::set<std::string> frontier{start};
        for (const auto& rel : rule.body) {
          std::set<std::string> next;
          for (const auto& f : facts) {
            if (f.r == rel && frontier.contains(f.h)) next.insert(f.t);
          }
          frontier = std::move(next);
        }
        for (const auto& end : frontier) found.push_back({start, rule.head, end});
      }
    }
    for (const auto& t : found) changed |= facts.insert(t).second;
  }
  return facts;
}

// Minimal number of binary rule applications per triple, by repeated relaxation
// (Bellman-Ford style) over all rule/entity combinations.
inline std::map<NamedTriple, std::uint32_t> brute_costs(const std::vector<NamedRule>& rules,
                                                        const std::set<NamedTriple>& facts) {
  std::map<NamedTriple, std::uint32_t> cost;
  std::set<std::string> entities;
  for (const auto& f : facts) {
    cost[f] = 0;
    entities.insert(f.h);
    entities.insert(f.t);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& rule : rules) {
      for (const auto& a : entities) {
        for (const auto& b : entities) {
          for (const auto& c : entities) {
            auto x = cost.find({a, rule.body[0], b});
            auto y = cost.find({b, rule.body[1], c});
            if (x == cost.end() || y == cost.end()) continue;
            const std::uint32_t v = x->second + y->second + 1;
            auto [it, fresh] = cost.try_emplace({a, rule.head, c}, v);
            if (fresh || v < it->second) {
              it->second = v;
              changed = true;
            }
          }
        }
      }
    }
  }
  return cost;
}

inline std::vector<NamedRule> named_rules(const RuleBase& rb) {
  std::vector<NamedRule> out;
  for (const auto& rule : rb.rules()) {
    NamedRule n;
    for (auto r : rule.body) n.body.push_back(rb.relations().name(r));
    n.head = rb.relations().name(rule.head);
    out.push_back(std::move(n));
  }
  return out;
}

inline std::set<NamedTriple> named_facts(const KnowledgeGraph& g) {
  std::set<NamedTriple> out;
  for (const auto& t : g.triples()) {
    out.insert({g.entities().name(t.head), g.relations().name(t.rel), g.entities().name(t.tail)});
  }
  return out;
}

struct Instance {
  RuleBase rb;
  KnowledgeGraph g;  // relation ids aligned with rb
};

// Random left-regular base (<= max_rel relations, <= max_rules rules) and a
// random graph (<= max_triples triples) over its relations.
inline Instance random_left_regular(std::mt19937_64& rng, int max_rel = 6, int max_rules = 4,
                                    int max_triples = 30) {
  const int nrel = 2 + static_cast<int>(rng() % (max_rel - 1));
  const int nrules = 1 + static_cast<int>(rng() % max_rules);
  std::vector<std::string> names;
  for (int i = 0; i < nrel; ++i) names.push_back("r" + std::to_string(i + 1));
  // Heads are drawn from a random proper subset so the second body atom has
  // somewhere to come from.
  std::vector<std::string> shuffled = names;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const int nheads = 1 + static_cast<int>(rng() % (nrel - 1));
  const std::vector<std::string> heads(shuffled.begin(), shuffled.begin() + nheads);
  const std::vector<std::string> tails(shuffled.begin() + nheads, shuffled.end());
  Instance inst;
  for (const auto& n : names) inst.rb.relations().intern(n);
  for (int i = 0; i < nrules; ++i) {
    inst.rb.add(heads[rng() % heads.size()],
                {names[rng() % names.size()], tails[rng() % tails.size()]});
  }
  const int nent = 4 + static_cast<int>(rng() % 9);
  const int ntrip = 1 + static_cast<int>(rng() % max_triples);
  KnowledgeGraph g(Vocabulary{}, inst.rb.relations());
  for (int i = 0; i < ntrip; ++i) {
    g.add("e" + std::to_string(rng() % nent), names[rng() % names.size()],
          "e" + std::to_string(rng() % nent));
  }
  inst.g = std::move(g);
  return inst;
}

// Random binary rule base without the left-regular restriction (heads may recur
// anywhere in bodies), plus a random graph over its relations.
inline Instance random_binary(std::mt19937_64& rng, int max_rel = 6, int max_rules = 4,
                              int max_triples = 30) {
  const int nrel = 2 + static_cast<int>(rng() % (max_rel - 1));
  const int nrules = 1 + static_cast<int>(rng() % max_rules);
  std::vector<std::string> names;
  for (int i = 0; i < nrel; ++i) names.push_back("r" + std::to_string(i + 1));
  Instance inst;
  for (const auto& n : names) inst.rb.relations().intern(n);
  for (int i = 0; i < nrules; ++i) {
    inst.rb.add(names[rng() % nrel], {names[rng() % nrel], names[rng() % nrel]});
  }
  const int nent = 4 + static_cast<int>(rng() % 9);
  const int ntrip = 1 + static_cast<int>(rng() % max_triples);
  KnowledgeGraph g(Vocabulary{}, inst.rb.relations());
  for (int i = 0; i < ntrip; ++i) {
    g.add("e" + std::to_string(rng() % nent), names[rng() % nrel],
          "e" + std::to_string(rng() % nent));
  }
  inst.g = std::move(g);
  return inst;
}

inline CheckReport check_one(const RuleGraph& h, const RuleBase& rb, Condition c, R4Mode mode) {
  return check_all(h, rb, 16, kDefaultMaxLen, mode)[static_cast<std::size_t>(c == Condition::R4m ? Condition::R4 : c)];
}

// First single-edge deletion or addition (scanned in a fixed order) after which
// condition c is violated while the conditions before it still hold.
inline std::optional<RuleGraph> break_condition(const RuleGraph& h, const RuleBase& rb, Condition c,
                                                R4Mode mode) {
  const auto ok = [&](const RuleGraph& g) {
    const auto reps = check_all(g, rb, 16, kDefaultMaxLen, mode);
    const auto idx = static_cast<std::size_t>(c == Condition::R4m ? Condition::R4 : c);
    if (reps[idx].verdict != Verdict::violated || !reps[idx].witness) return false;
    for (std::size_t i = 0; i < idx; ++i) {
      if (!reps[i].holds()) return false;
    }
    return true;
  };
  if (c == Condition::R1 || c == Condition::R3) {
    for (const auto& e : h.edges()) {
      RuleGraph g = h;
      g.remove_edge(e);
      if (ok(g)) return g;
    }
    return std::nullopt;
  }
  for (NodeId u = 0; u < h.num_nodes(); ++u) {
    for (NodeId v = 0; v < h.num_nodes(); ++v) {
      for (RelationId r = 0; r < h.relations().size(); ++r) {
        RuleGraph g = h;
        if (!g.insert_raw(u, r, v)) continue;
        if (ok(g)) return g;
      }
    }
  }
  return std::nullopt;
}

}  // namespace testsupport
