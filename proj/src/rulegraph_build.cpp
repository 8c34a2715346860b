#include <algorithm>
#include <deque>

#include "reshuffle/error.hpp"
#include "reshuffle/rulegraph.hpp"

namespace reshuffle {

namespace {

// Steps 1-2 shared by both constructions: n0 plus one n_r per relation, with
// an r-edge n0 -> n_r. Node n_r gets id r + 1.
RuleGraph skeleton(const RuleBase& rb) {
  RelationTable table = rb.relations();
  table.ensure_eq();
  RuleGraph h(table);
  h.add_node("n0");
  for (RelationId r = 0; r < table.size(); ++r) h.add_node("n_" + table.name(r));
  for (RelationId r = 0; r < table.size(); ++r) h.insert_raw(0, r, r + 1);
  h.set_root(0);
  return h;
}

bool has_two_path(const RuleGraph& h, NodeId from, RelationId r1, RelationId r2, NodeId to) {
  for (const auto& e : h.edges()) {
    if (e.src == from && e.rel == r1 && h.has_edge(Edge{e.dst, r2, to})) return true;
  }
  return false;
}

}  // namespace

RuleGraph build_left_regular(const RuleBase& rb) {
  std::string offending;
  if (!is_left_regular(rb, &offending)) {
    throw InputError("rule base is not left-regular: '" + offending + "'");
  }
  RuleGraph h = skeleton(rb);
  for (const auto& rule : rb.rules()) {
    h.insert_raw(rule.body[0] + 1, rule.body[1], rule.head + 1);
  }
  fix_fan_in(h);
  return h;
}

RuleGraph build_m_bounded(const RuleBase& rb, std::uint32_t m, bool fix) {
  if (!rb.normalized()) throw InputError("bounded construction needs a normalized rule base");
  RuleGraph h = skeleton(rb);
  const auto nrel = h.relations().size();

  std::vector<std::vector<std::size_t>> rules_by_head(nrel);
  for (std::size_t i = 0; i < rb.rules().size(); ++i) {
    rules_by_head[rb.rules()[i].head].push_back(i);
  }

  // Shortest distance from n0, and to the nearest n_r. New edges in step 3
  // never shorten either distance for existing nodes, so only fresh nodes need values.
  std::vector<std::uint32_t> from_root(h.num_nodes(), 1), to_target(h.num_nodes(), 0);
  from_root[0] = 0;
  to_target[0] = 1;

  std::deque<std::pair<Edge, std::size_t>> work;
  auto enqueue = [&](const Edge& e) {
    for (auto i : rules_by_head[e.rel]) work.emplace_back(e, i);
  };
  for (const auto& e : std::vector<Edge>(h.edges())) enqueue(e);

  // Step 3.
  while (!work.empty()) {
    const auto [e, ri] = work.front();
    work.pop_front();
    const auto& rule = rb.rules()[ri];
    if (has_two_path(h, e.src, rule.body[0], rule.body[1], e.dst)) continue;
    if (from_root[e.src] + 1 + to_target[e.dst] > m) continue;
    const NodeId fresh = h.add_node();
    from_root.push_back(from_root[e.src] + 1);
    to_target.push_back(to_target[e.dst] + 1);
    const Edge a{e.src, rule.body[0], fresh}, b{fresh, rule.body[1], e.dst};
    h.insert_raw(a.src, a.rel, a.dst);
    h.insert_raw(b.src, b.rel, b.dst);
    enqueue(a);
    enqueue(b);
  }

  // Step 4: close every remaining edge with a fresh saturated node.
  auto find_open = [&]() -> std::optional<std::pair<Edge, std::size_t>> {
    for (const auto& e : h.edges()) {
      for (auto i : rules_by_head[e.rel]) {
        const auto& rule = rb.rules()[i];
        if (!has_two_path(h, e.src, rule.body[0], rule.body[1], e.dst)) {
          return std::make_pair(e, i);
        }
      }
    }
    return std::nullopt;
  };
  while (auto open = find_open()) {
    const auto [e, ri] = *open;
    const auto& rule = rb.rules()[ri];
    const NodeId n = e.src, np = e.dst;
    const NodeId fresh = h.add_node();
    h.insert_raw(n, rule.body[0], fresh);
    h.insert_raw(fresh, rule.body[1], np);

    auto saturate = [&](auto pick, auto add) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (const auto& x : std::vector<Edge>(h.edges())) {
          if (!pick(x)) continue;
          for (auto i : rules_by_head[x.rel]) {
            const auto& r = rb.rules()[i];
            changed |= add(r.body[0], r.body[1]);
          }
        }
      }
    };
    // (b) edges n -> fresh
    saturate([&](const Edge& x) { return x.src == n && x.dst == fresh; },
             [&](RelationId r1, RelationId r2) {
               const bool a = h.insert_raw(n, r1, fresh);
               const bool b = h.insert_raw(fresh, r2, fresh);
               return a || b;
             });
    // (c) edges fresh -> n'
    saturate([&](const Edge& x) { return x.src == fresh && x.dst == np && fresh != np; },
             [&](RelationId r1, RelationId r2) {
               const bool a = h.insert_raw(fresh, r1, fresh);
               const bool b = h.insert_raw(fresh, r2, np);
               return a || b;
             });
    // (d) loops at fresh
    saturate([&](const Edge& x) { return x.src == fresh && x.dst == fresh; },
             [&](RelationId r1, RelationId r2) {
               const bool a = h.insert_raw(fresh, r1, fresh);
               const bool b = h.insert_raw(fresh, r2, fresh);
               return a || b;
             });
  }

  // Step 5.
  if (fix) fix_fan_in(h);
  return h;
}

}  // namespace reshuffle
