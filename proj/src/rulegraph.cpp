#include "reshuffle/rulegraph.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "reshuffle/error.hpp"

namespace reshuffle {

NodeId RuleGraph::add_node(std::string name) {
  const auto id = static_cast<NodeId>(names_.size());
  if (name.empty()) name = "n" + std::to_string(id);
  names_.push_back(std::move(name));
  return id;
}

void RuleGraph::add_edge(NodeId src, RelationId rel, NodeId dst) {
  if (has_edge(Edge{src, rel, dst})) return;
  if (!incoming(dst, rel).empty()) {
    throw InputError("R2: node " + node_name(dst) + " already has an incoming " +
                     (rel < relations_.size() ? relations_.name(rel) : std::to_string(rel)) +
                     "-edge");
  }
  insert_raw(src, rel, dst);
}

bool RuleGraph::insert_raw(NodeId src, RelationId rel, NodeId dst) {
  if (src >= num_nodes() || dst >= num_nodes()) throw InputError("edge references unknown node");
  if (rel >= relations_.size()) throw InputError("edge references unknown relation id");
  const Edge e{src, rel, dst};
  auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it != edges_.end() && *it == e) return false;
  edges_.insert(it, e);
  return true;
}

bool RuleGraph::remove_edge(const Edge& e) {
  auto it = std::lower_bound(edges_.begin(), edges_.end(), e);
  if (it == edges_.end() || *it != e) return false;
  edges_.erase(it);
  return true;
}

bool RuleGraph::has_edge(const Edge& e) const {
  return std::binary_search(edges_.begin(), edges_.end(), e);
}

void RuleGraph::set_root(NodeId n) {
  if (n >= num_nodes()) throw InputError("root is not a node");
  root_ = n;
}

std::optional<NodeId> RuleGraph::find_node(std::string_view name) const {
  for (NodeId n = 0; n < names_.size(); ++n) {
    if (names_[n] == name) return n;
  }
  return std::nullopt;
}

std::vector<Edge> RuleGraph::incoming(NodeId n, RelationId rel) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.dst == n && e.rel == rel) out.push_back(e);
  }
  return out;
}

std::vector<Edge> RuleGraph::edges_with(RelationId rel) const {
  std::vector<Edge> out;
  for (const auto& e : edges_) {
    if (e.rel == rel) out.push_back(e);
  }
  return out;
}

RuleGraph RuleGraph::relabeled(const RelationTable& table) const {
  RuleGraph out(table);
  out.names_ = names_;
  out.root_ = root_;
  for (const auto& e : edges_) {
    out.edges_.push_back(Edge{e.src, table.require(relations_.name(e.rel)), e.dst});
  }
  std::sort(out.edges_.begin(), out.edges_.end());
  return out;
}

std::vector<RelationId> PathType::eq_reduced(std::optional<RelationId> eq) const {
  std::vector<RelationId> out;
  for (auto r : rels) {
    if (!eq || r != *eq) out.push_back(r);
  }
  return out;
}

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::R1: return "R1";
    case Condition::R2: return "R2";
    case Condition::R3: return "R3";
    case Condition::R4: return "R4";
    case Condition::R4m: return "R4m";
  }
  return "R?";
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::violated: return "violated";
    case Verdict::unknown_at_bound: return "unknown-at-bound";
  }
  return "unknown-at-bound";
}

namespace {

std::string edge_text(const RuleGraph& h, const Edge& e) {
  return h.relations().name(e.rel) + "-edge " + h.node_name(e.src) + "->" + h.node_name(e.dst);
}

}  // namespace

std::string describe(const CheckReport& report, const RuleGraph& h) {
  std::string s = std::string(to_string(report.condition)) + " " +
                  std::string(to_string(report.verdict));
  if (!report.witness) {
    if (!report.detail.empty()) s += " (" + report.detail + ")";
    return s;
  }
  const auto& w = *report.witness;
  s += ":";
  if (report.condition == Condition::R1) {
    s += " no edge labelled " + w.relation_name;
  } else if (report.condition == Condition::R2) {
    for (const auto& e : w.edges) s += " " + edge_text(h, e);
  } else if (report.condition == Condition::R3) {
    for (std::size_t i = 0; i < w.edges.size(); ++i) {
      s += " " + edge_text(h, w.edges[i]) + " lacks a path of type " + w.type_text[i];
    }
  } else {
    for (std::size_t i = 0; i < w.edges.size(); ++i) {
      if (i) s += ",";
      s += " " + edge_text(h, w.edges[i]) + " has non-entailed type " + w.type_text[i];
    }
  }
  return s;
}

void fix_fan_in(RuleGraph& h) {
  const auto eq = h.relations().eq();
  const NodeId original = static_cast<NodeId>(h.num_nodes());
  for (NodeId n = 0; n < original; ++n) {
    std::map<RelationId, std::vector<NodeId>> sources;
    for (const auto& e : h.edges()) {
      if (e.dst == n) sources[e.rel].push_back(e.src);
    }
    std::size_t p = 0;
    for (const auto& [rel, srcs] : sources) p = std::max(p, srcs.size());
    if (p <= 1) continue;
    if (!eq) throw InputError("fan-in fix needs an eq relation in the table");
    if (sources.contains(*eq)) {
      throw InputError("node " + h.node_name(n) + " has incoming eq-edges; cannot split fan-in");
    }
    std::vector<NodeId> chain{n};
    for (std::size_t i = 1; i < p; ++i) {
      const NodeId fresh = h.add_node();
      h.insert_raw(fresh, *eq, chain.back());
      chain.push_back(fresh);
    }
    for (const auto& [rel, srcs] : sources) {
      if (srcs.size() < 2) continue;
      // srcs are already sorted by source id because edges are sorted.
      for (std::size_t i = 1; i < srcs.size(); ++i) {
        h.remove_edge(Edge{srcs[i], rel, n});
        h.insert_raw(srcs[i], rel, chain[i]);
      }
    }
  }
}

namespace {

struct IsoSide {
  const RuleGraph& g;
  std::vector<std::vector<std::pair<std::string, NodeId>>> out, in;
  std::vector<std::vector<std::string>> signature;

  explicit IsoSide(const RuleGraph& graph) : g(graph) {
    const auto n = g.num_nodes();
    out.resize(n);
    in.resize(n);
    signature.resize(n);
    for (const auto& e : g.edges()) {
      const auto& name = g.relations().name(e.rel);
      out[e.src].emplace_back(name, e.dst);
      in[e.dst].emplace_back(name, e.src);
      if (e.src == e.dst) {
        signature[e.src].push_back("loop:" + name);
      } else {
        signature[e.src].push_back("out:" + name);
        signature[e.dst].push_back("in:" + name);
      }
    }
    for (auto& s : signature) std::sort(s.begin(), s.end());
  }

  // Sorted labels of edges u->v.
  std::vector<std::string> labels(NodeId u, NodeId v) const {
    std::vector<std::string> ls;
    for (const auto& [name, dst] : out[u]) {
      if (dst == v) ls.push_back(name);
    }
    std::sort(ls.begin(), ls.end());
    return ls;
  }
};

bool extend(const IsoSide& a, const IsoSide& b, const std::vector<NodeId>& order, std::size_t pos,
            std::vector<NodeId>& map, std::vector<bool>& used) {
  if (pos == order.size()) return true;
  const NodeId u = order[pos];
  for (NodeId v = 0; v < b.g.num_nodes(); ++v) {
    if (used[v] || a.signature[u] != b.signature[v]) continue;
    if (u == a.g.root() && v != b.g.root()) continue;
    if (v == b.g.root() && u != a.g.root()) continue;
    bool ok = true;
    for (std::size_t i = 0; i < pos && ok; ++i) {
      const NodeId w = order[i];
      ok = a.labels(u, w) == b.labels(v, map[w]) && a.labels(w, u) == b.labels(map[w], v);
    }
    if (!ok) continue;
    map[u] = v;
    used[v] = true;
    if (extend(a, b, order, pos + 1, map, used)) return true;
    used[v] = false;
  }
  return false;
}

}  // namespace

bool isomorphic(const RuleGraph& a, const RuleGraph& b) {
  if (a.num_nodes() != b.num_nodes() || a.edges().size() != b.edges().size()) return false;
  if (a.num_nodes() == 0) return true;
  const IsoSide sa(a), sb(b);
  {
    auto x = sa.signature, y = sb.signature;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    if (x != y) return false;
  }
  // Visit nodes in undirected BFS order from the root so each step is constrained.
  std::vector<NodeId> order;
  std::vector<bool> seen(a.num_nodes(), false);
  auto bfs = [&](NodeId start) {
    std::deque<NodeId> q{start};
    seen[start] = true;
    while (!q.empty()) {
      const NodeId u = q.front();
      q.pop_front();
      order.push_back(u);
      for (const auto* adj : {&sa.out[u], &sa.in[u]}) {
        for (const auto& [name, v] : *adj) {
          if (!seen[v]) {
            seen[v] = true;
            q.push_back(v);
          }
        }
      }
    }
  };
  bfs(a.root());
  for (NodeId n = 0; n < a.num_nodes(); ++n) {
    if (!seen[n]) bfs(n);
  }
  std::vector<NodeId> map(a.num_nodes(), 0);
  std::vector<bool> used(b.num_nodes(), false);
  return extend(sa, sb, order, 0, map, used);
}

}  // namespace reshuffle
