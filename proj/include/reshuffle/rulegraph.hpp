#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reshuffle/rules.hpp"

namespace reshuffle {

using NodeId = std::uint32_t;

struct Edge {
  NodeId src = 0;
  RelationId rel = 0;
  NodeId dst = 0;

  auto operator<=>(const Edge&) const = default;
};

// Labelled multigraph over abstract nodes. Edges form a set; several labels may
// connect the same pair. add_edge enforces R2 (one incoming edge per label);
// insert_raw does not, for transcribing graphs that violate it.
class RuleGraph {
 public:
  RuleGraph() = default;
  explicit RuleGraph(RelationTable relations) : relations_(std::move(relations)) {}

  NodeId add_node(std::string name = {});
  void add_edge(NodeId src, RelationId rel, NodeId dst);
  bool insert_raw(NodeId src, RelationId rel, NodeId dst);
  bool remove_edge(const Edge& e);
  bool has_edge(const Edge& e) const;

  std::size_t num_nodes() const noexcept { return names_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  NodeId root() const noexcept { return root_; }
  void set_root(NodeId n);

  const std::string& node_name(NodeId n) const { return names_.at(n); }
  void set_node_name(NodeId n, std::string name) { names_.at(n) = std::move(name); }
  std::optional<NodeId> find_node(std::string_view name) const;

  RelationTable& relations() noexcept { return relations_; }
  const RelationTable& relations() const noexcept { return relations_; }

  // Incoming edges of n with label rel (more than one only in R2-violating graphs).
  std::vector<Edge> incoming(NodeId n, RelationId rel) const;
  std::vector<Edge> edges_with(RelationId rel) const;

  // Copy whose edges carry ids of `table`, matched by relation name.
  RuleGraph relabeled(const RelationTable& table) const;

  bool operator==(const RuleGraph& o) const {
    return root_ == o.root_ && names_.size() == o.names_.size() && edges_ == o.edges_;
  }

 private:
  RelationTable relations_;
  std::vector<std::string> names_;
  std::vector<Edge> edges_;  // sorted, unique
  NodeId root_ = 0;
};

struct PathType {
  std::vector<RelationId> rels;

  std::vector<RelationId> eq_reduced(std::optional<RelationId> eq) const;
};

enum class Condition { R1, R2, R3, R4, R4m };
enum class Verdict { holds, violated, unknown_at_bound };

std::string_view to_string(Condition c);
std::string_view to_string(Verdict v);

struct Witness {
  std::optional<RelationId> relation;  // id in the checked graph's table, if it has one
  std::string relation_name;
  std::vector<Edge> edges;                     // offending edge(s)
  std::vector<std::vector<RelationId>> types;  // path types, aligned with `edges` for R3/R4
  std::vector<std::string> type_text;          // same types as `;`-joined names
};

struct CheckReport {
  Condition condition = Condition::R1;
  Verdict verdict = Verdict::holds;
  std::optional<Witness> witness;
  std::string detail;

  bool holds() const noexcept { return verdict == Verdict::holds; }
};

// Pretty text of a witness, e.g. "r3-edge n1->n2 lacks r1;r2".
std::string describe(const CheckReport& report, const RuleGraph& h);

CheckReport check_R1(const RuleGraph& h, const RelationTable& rels);
CheckReport check_R2(const RuleGraph& h);

// Every rule entailed within `derivation_depth` productions must be matched by a
// connecting path of its body type, for every edge labelled with its head.
CheckReport check_R3(const RuleGraph& h, const RuleBase& rb, std::uint32_t derivation_depth);

struct R4Mode {
  std::optional<std::uint32_t> bound;  // empty: full R4, else R4m with this m

  static R4Mode full() { return {}; }
  static R4Mode bounded(std::uint32_t m) { return {m}; }
};

inline constexpr std::uint32_t kDefaultMaxLen = 8;

CheckReport check_R4(const RuleGraph& h, const RuleBase& rb, std::uint32_t max_len, R4Mode mode);

// R1..R4 (or R4m) in order.
std::vector<CheckReport> check_all(const RuleGraph& h, const RuleBase& rb,
                                   std::uint32_t derivation_depth, std::uint32_t max_len,
                                   R4Mode mode);

RuleGraph build_left_regular(const RuleBase& rb);
RuleGraph build_m_bounded(const RuleBase& rb, std::uint32_t m, bool fix_fan_in = true);

// Splits every node with repeated incoming labels by chaining fresh nodes with
// eq-edges. Sources are ordered by (relation id, source node id).
void fix_fan_in(RuleGraph& h);

// Root- and label-preserving (by relation name) isomorphism.
bool isomorphic(const RuleGraph& a, const RuleGraph& b);

// {"root", "nodes", "edges":[{"src","rel","dst"}], optional "relations", "names"}.
// Rejects R2 violations unless allow_r2_violation.
RuleGraph parse_rule_graph(const std::string& text, RelationTable relations = {},
                           bool allow_r2_violation = false);
RuleGraph load_rule_graph(const std::filesystem::path& path, RelationTable relations = {},
                          bool allow_r2_violation = false);
std::string to_json(const RuleGraph& h);
void save_rule_graph(const RuleGraph& h, const std::filesystem::path& path);
std::string to_dot(const RuleGraph& h);

}  // namespace reshuffle
