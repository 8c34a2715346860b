#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reshuffle/kg.hpp"

namespace reshuffle {

// body[0](X1,X2) ∧ ... ∧ body[p-1](Xp,Xp+1) → head(X1,Xp+1)
struct ClosedPathRule {
  std::vector<RelationId> body;
  RelationId head = 0;

  auto operator<=>(const ClosedPathRule&) const = default;
};

class RuleBase {
 public:
  RuleBase() = default;
  explicit RuleBase(RelationTable relations) : relations_(std::move(relations)) {}

  RelationTable& relations() noexcept { return relations_; }
  const RelationTable& relations() const noexcept { return relations_; }
  const std::vector<ClosedPathRule>& rules() const noexcept { return rules_; }
  bool normalized() const noexcept { return normalized_; }
  bool empty() const noexcept { return rules_.empty(); }

  // Relations occurring in some rule head.
  const std::set<RelationId>& head_relations() const noexcept { return heads_; }
  bool is_head(RelationId r) const { return heads_.contains(r); }

  // Rejects eq in body or head and ids outside the table. Duplicates are ignored.
  void add(ClosedPathRule rule);
  ClosedPathRule add(std::string_view head, const std::vector<std::string>& body);

  // Replaces the relation table with `wider`, which must agree on every existing id.
  void adopt_relations(const RelationTable& wider);

  std::string to_string(const ClosedPathRule& rule) const;

 private:
  friend RuleBase normalize(const RuleBase& rb);

  RelationTable relations_;
  std::vector<ClosedPathRule> rules_;
  std::set<RelationId> heads_;
  bool normalized_ = false;
};

// One rule per line: `head <- r1, r2, ..., rp`. `#` starts a comment line.
RuleBase parse_rules(std::istream& in, const std::string& source = "<stream>",
                     RelationTable relations = {});
RuleBase load_rules(const std::filesystem::path& path, RelationTable relations = {});
void save_rules(const RuleBase& rb, std::ostream& out);

// Left-associated binarization through fresh relations. Bodies of length 1 are rejected.
RuleBase normalize(const RuleBase& rb);

// Merges the two relation tables (rule base ids first) and re-labels g so both
// share ids. Needed before any oracle call that mixes a rule base and a graph.
void align(RuleBase& rb, KnowledgeGraph& g);

// Every rule binary with a second body atom that heads no rule.
bool is_left_regular(const RuleBase& rb, std::string* offending = nullptr);

struct DerivationLimit {
  std::optional<std::uint32_t> steps;

  static DerivationLimit unbounded() { return {}; }
  static DerivationLimit bounded(std::uint32_t m) { return {m}; }
  bool is_bounded() const noexcept { return steps.has_value(); }
};

inline constexpr std::uint32_t kNoCost = std::numeric_limits<std::uint32_t>::max();

struct CostedTriple {
  Triple triple;
  std::uint32_t cost = 0;  // fewest rule applications over all derivations
};

// Graph relations must share ids with rb.relations() (see adopt_relations).
std::vector<Triple> materialize(const RuleBase& rb, const KnowledgeGraph& g,
                                DerivationLimit limit);

// Minimal derivation costs, restricted to cost <= cap. Requires a normalized base.
std::vector<CostedTriple> materialize_costs(const RuleBase& rb, const KnowledgeGraph& g,
                                            std::uint32_t cap = kNoCost);

bool entails_triple(const RuleBase& rb, const KnowledgeGraph& g, const Triple& t,
                    DerivationLimit limit);

enum class RuleEntailment { yes, no_within_bound, trivial };

std::string_view to_string(RuleEntailment e);

// Fewest binary productions deriving `body` from `head` in the rule grammar, or
// kNoCost when not derivable. A body equal to [head] costs 0.
std::uint32_t rule_derivation_cost(const RuleBase& rb, const std::vector<RelationId>& body,
                                   RelationId head);

RuleEntailment entails_rule(const RuleBase& rb, const ClosedPathRule& candidate,
                            DerivationLimit limit, std::uint32_t depth_bound);

}  // namespace reshuffle
