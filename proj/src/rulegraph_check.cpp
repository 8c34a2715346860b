#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <set>

#include "reshuffle/error.hpp"
#include "reshuffle/rulegraph.hpp"

namespace reshuffle {

namespace {

using NodeSet = std::vector<NodeId>;  // sorted
using Word = std::vector<RelationId>;

bool contains(const NodeSet& s, NodeId n) { return std::binary_search(s.begin(), s.end(), n); }

// Rule graph and rule base sharing one relation table.
struct Aligned {
  RuleBase rb;
  RuleGraph h;
};

Aligned align_pair(const RuleGraph& h, const RuleBase& rb) {
  RuleBase copy = rb;
  RelationTable merged = rb.relations();
  for (const auto& info : h.relations().entries()) {
    if (merged.find(info.name)) continue;
    switch (info.kind) {
      case RelationKind::eq: merged.ensure_eq(); break;
      case RelationKind::inverse:
        merged.add_inverse(merged.intern(h.relations().name(*info.inverse_of)));
        break;
      default: merged.intern(info.name, info.kind); break;
    }
  }
  copy.adopt_relations(merged);
  return Aligned{std::move(copy), h.relabeled(merged)};
}

// Witness for edge e of the aligned graph, with ids of the caller's graph.
Witness to_caller(const RuleGraph& graph, const RuleGraph& aligned, const Edge& e,
                  const std::vector<Word>& types) {
  const auto& at = aligned.relations();
  const auto& gt = graph.relations();
  Witness w;
  w.relation_name = at.name(e.rel);
  w.relation = gt.find(w.relation_name);
  w.edges.push_back(Edge{e.src, w.relation.value_or(e.rel), e.dst});
  for (const auto& t : types) {
    Word mapped;
    std::string text;
    for (auto r : t) {
      mapped.push_back(gt.find(at.name(r)).value_or(r));
      if (!text.empty()) text += ';';
      text += at.name(r);
    }
    w.types.push_back(std::move(mapped));
    w.type_text.push_back(text.empty() ? "(empty)" : text);
  }
  return w;
}

// Adjacency with eq-edges treated as epsilon moves.
class Automaton {
 public:
  Automaton(const RuleGraph& h, bool reversed) : n_(h.num_nodes()), eq_(h.relations().eq()) {
    fwd_.resize(n_);
    eps_.resize(n_);
    for (const auto& e : h.edges()) {
      const NodeId a = reversed ? e.dst : e.src;
      const NodeId b = reversed ? e.src : e.dst;
      if (eq_ && e.rel == *eq_) {
        eps_[a].push_back(b);
      } else {
        fwd_[a].emplace_back(e.rel, b);
        symbols_.insert(e.rel);
      }
    }
  }

  NodeSet close(NodeSet s) const {
    std::vector<bool> in(n_, false);
    std::deque<NodeId> q;
    for (auto x : s) {
      in[x] = true;
      q.push_back(x);
    }
    while (!q.empty()) {
      const NodeId x = q.front();
      q.pop_front();
      for (auto y : eps_[x]) {
        if (!in[y]) {
          in[y] = true;
          q.push_back(y);
        }
      }
    }
    NodeSet out;
    for (NodeId x = 0; x < n_; ++x) {
      if (in[x]) out.push_back(x);
    }
    return out;
  }

  NodeSet step(const NodeSet& s, RelationId t) const {
    NodeSet next;
    for (auto x : s) {
      for (const auto& [rel, y] : fwd_[x]) {
        if (rel == t) next.push_back(y);
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    return close(std::move(next));
  }

  const std::set<RelationId>& symbols() const noexcept { return symbols_; }

 private:
  std::size_t n_;
  std::optional<RelationId> eq_;
  std::vector<std::vector<std::pair<RelationId, NodeId>>> fwd_;
  std::vector<std::vector<NodeId>> eps_;
  std::set<RelationId> symbols_;
};

// ---------------------------------------------------------------- R3

// Min-cost fixpoint over pairs (start set, end set) of the backward subset
// automaton, one table per grammar symbol. T[X][S][S'] holds when some word w
// derivable from X maps S to S' (the nodes that reach S reading w).
class R3Solver {
 public:
  struct Entry {
    std::uint32_t cost = kNoCost;
    int rule = -1;  // -1: X kept as a terminal
    std::uint32_t mid = 0;
  };

  R3Solver(const RuleGraph& h, const RuleBase& rb) : back_(h, true), rb_(rb) {
    by_head_.resize(rb.relations().size());
    for (std::size_t i = 0; i < rb.rules().size(); ++i) {
      by_head_[rb.rules()[i].head].push_back(i);
    }
  }

  std::uint32_t intern(NodeSet s) {
    auto [it, fresh] = ids_.emplace(std::move(s), static_cast<std::uint32_t>(sets_.size()));
    if (fresh) sets_.push_back(it->first);
    return it->second;
  }
  const NodeSet& set(std::uint32_t id) const { return sets_[id]; }
  std::uint32_t initial(NodeId target) { return intern(back_.close({target})); }

  void demand(RelationId x, std::uint32_t s) {
    if (!demanded_.emplace(x, s).second) return;
    order_.emplace_back(x, s);
    const auto end = intern(back_.step(sets_[s], x));
    auto& slot = table_[{x, s}][end];
    if (slot.cost > 0) slot = Entry{0, -1, 0};
    changed_ = true;
  }

  void solve() {
    do {
      changed_ = false;
      for (std::size_t i = 0; i < order_.size(); ++i) {
        const auto [a, s] = order_[i];
        for (auto ri : by_head_[a]) {
          const RelationId b = rb_.rules()[ri].body[0], c = rb_.rules()[ri].body[1];
          demand(c, s);
          const auto after_c = table_[{c, s}];
          for (const auto& [mid, ec] : after_c) {
            demand(b, mid);
            const auto after_b = table_[{b, mid}];
            for (const auto& [end, eb] : after_b) {
              const std::uint32_t cand = eb.cost + ec.cost + 1;
              auto& slot = table_[{a, s}][end];
              if (cand < slot.cost) {
                slot = Entry{cand, static_cast<int>(ri), mid};
                changed_ = true;
              }
            }
          }
        }
      }
    } while (changed_);
  }

  const std::map<std::uint32_t, Entry>& results(RelationId x, std::uint32_t s) {
    return table_[{x, s}];
  }

  Word word(RelationId x, std::uint32_t s, std::uint32_t end) {
    const Entry e = table_[{x, s}][end];
    if (e.rule < 0) return {x};
    const auto& rule = rb_.rules()[static_cast<std::size_t>(e.rule)];
    Word w = word(rule.body[0], e.mid, end);
    const Word v = word(rule.body[1], s, e.mid);
    w.insert(w.end(), v.begin(), v.end());
    return w;
  }

 private:
  Automaton back_;
  const RuleBase& rb_;
  std::vector<std::vector<std::size_t>> by_head_;
  std::map<NodeSet, std::uint32_t> ids_;
  std::vector<NodeSet> sets_;
  std::set<std::pair<RelationId, std::uint32_t>> demanded_;
  std::vector<std::pair<RelationId, std::uint32_t>> order_;
  std::map<std::pair<RelationId, std::uint32_t>, std::map<std::uint32_t, Entry>> table_;
  bool changed_ = false;
};

// ---------------------------------------------------------------- R4

enum class EdgeStatus { all_entailed, has_bad, unknown };

struct EdgeResult {
  EdgeStatus status = EdgeStatus::unknown;
  Word bad;
};

struct Nfa {
  std::size_t states = 0;
  std::map<std::pair<std::size_t, RelationId>, std::vector<std::size_t>> delta;
  std::set<std::size_t> accept;

  std::vector<std::size_t> step(const std::vector<std::size_t>& s, RelationId t) const {
    std::vector<std::size_t> out;
    for (auto q : s) {
      auto it = delta.find({q, t});
      if (it != delta.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  bool accepts(const std::vector<std::size_t>& s) const {
    return std::any_of(s.begin(), s.end(), [&](auto q) { return accept.contains(q); });
  }
};

// BFS over (rule-graph subset, NFA subset). Finds a shortest connecting type the
// NFA rejects, or proves none exists.
EdgeResult product_search(const Automaton& a, NodeId from, NodeId to, const Nfa& nfa) {
  using State = std::pair<NodeSet, std::vector<std::size_t>>;
  std::map<State, std::size_t> seen;
  std::vector<State> states;
  std::vector<std::pair<std::size_t, RelationId>> parent;
  auto visit = [&](State s, std::size_t par, RelationId t) {
    if (seen.emplace(s, states.size()).second) {
      states.push_back(std::move(s));
      parent.emplace_back(par, t);
      return true;
    }
    return false;
  };
  visit(State{a.close({from}), {0}}, SIZE_MAX, 0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (contains(states[i].first, to) && !nfa.accepts(states[i].second)) {
      Word w;
      for (std::size_t j = i; parent[j].first != SIZE_MAX; j = parent[j].first) {
        w.push_back(parent[j].second);
      }
      std::reverse(w.begin(), w.end());
      return EdgeResult{EdgeStatus::has_bad, w};
    }
    for (auto t : a.symbols()) {
      NodeSet next = a.step(states[i].first, t);
      if (next.empty()) continue;
      visit(State{std::move(next), nfa.step(states[i].second, t)}, i, t);
    }
  }
  return EdgeResult{EdgeStatus::all_entailed, {}};
}

class R4Checker {
 public:
  R4Checker(const RuleGraph& h, const RuleBase& rb)
      : h_(h), rb_(rb), fwd_(h, false), rev_(h, true), eq_(h.relations().eq()) {
    by_head_.resize(rb.relations().size());
    for (std::size_t i = 0; i < rb.rules().size(); ++i) {
      by_head_[rb.rules()[i].head].push_back(i);
    }
  }

  bool entailed(const Word& w, RelationId r, std::optional<std::uint32_t> bound) const {
    if (eq_ && r == *eq_) return w.empty();
    if (w.empty()) return false;
    const auto c = rule_derivation_cost(rb_, w, r);
    return c != kNoCost && (!bound || c <= *bound);
  }

  // Enumerates connecting types up to max_len; exact if nothing was cut off.
  EdgeResult enumerate(const Edge& e, std::uint32_t max_len,
                       std::optional<std::uint32_t> bound) const {
    bool truncated = false;
    Word w;
    std::optional<Word> bad;
    std::function<void(const NodeSet&)> dfs = [&](const NodeSet& s) {
      if (bad) return;
      if (contains(s, e.dst) && !entailed(w, e.rel, bound)) {
        bad = w;
        return;
      }
      for (auto t : fwd_.symbols()) {
        NodeSet next = fwd_.step(s, t);
        if (next.empty()) continue;
        if (w.size() == max_len) {
          truncated = true;
          return;
        }
        w.push_back(t);
        dfs(next);
        w.pop_back();
        if (bad) return;
      }
    };
    dfs(fwd_.close({e.src}));
    if (bad) return EdgeResult{EdgeStatus::has_bad, *bad};
    if (truncated && !bound) return EdgeResult{EdgeStatus::unknown, {}};
    return EdgeResult{EdgeStatus::all_entailed, {}};
  }

  // Exact decision when the grammar below r is left-linear, right-linear or finite.
  std::optional<EdgeResult> exact(const Edge& e) const {
    const RelationId r = e.rel;
    if (eq_ && r == *eq_) {
      Nfa nfa;
      nfa.states = 1;
      nfa.accept.insert(0);
      return product_search(fwd_, e.src, e.dst, nfa);
    }
    std::set<RelationId> nts{r};
    std::deque<RelationId> q{r};
    while (!q.empty()) {
      const auto a = q.front();
      q.pop_front();
      for (auto i : by_head_[a]) {
        for (auto b : rb_.rules()[i].body) {
          if (rb_.is_head(b) && nts.insert(b).second) q.push_back(b);
        }
      }
    }
    bool left = true, right = true;
    for (auto a : nts) {
      for (auto i : by_head_[a]) {
        left = left && !rb_.is_head(rb_.rules()[i].body[1]);
        right = right && !rb_.is_head(rb_.rules()[i].body[0]);
      }
    }
    if (left || right) {
      // States: 0 = start, 1 + X = "read a word of X".
      Nfa nfa;
      nfa.states = 1 + rb_.relations().size();
      for (RelationId x = 0; x < rb_.relations().size(); ++x) nfa.delta[{0, x}].push_back(1 + x);
      for (auto a : nts) {
        for (auto i : by_head_[a]) {
          const auto& rule = rb_.rules()[i];
          if (left) {
            nfa.delta[{1 + rule.body[0], rule.body[1]}].push_back(1 + a);
          } else {
            nfa.delta[{1 + rule.body[1], rule.body[0]}].push_back(1 + a);
          }
        }
      }
      nfa.accept.insert(1 + r);
      if (left) return product_search(fwd_, e.src, e.dst, nfa);
      auto res = product_search(rev_, e.dst, e.src, nfa);
      std::reverse(res.bad.begin(), res.bad.end());
      return res;
    }
    // Finite language if the nonterminal dependency graph is acyclic.
    std::map<RelationId, int> mark;
    std::function<bool(RelationId)> acyclic = [&](RelationId a) {
      if (mark[a] == 1) return false;
      if (mark[a] == 2) return true;
      mark[a] = 1;
      for (auto i : by_head_[a]) {
        for (auto b : rb_.rules()[i].body) {
          if (rb_.is_head(b) && !acyclic(b)) return false;
        }
      }
      mark[a] = 2;
      return true;
    };
    if (!acyclic(r)) return std::nullopt;
    std::map<RelationId, std::set<Word>> memo;
    std::function<const std::set<Word>&(RelationId)> lang = [&](RelationId a) -> const std::set<Word>& {
      if (auto it = memo.find(a); it != memo.end()) return it->second;
      std::set<Word> words{{a}};
      for (auto i : by_head_[a]) {
        const auto& rule = rb_.rules()[i];
        const auto left_words = lang(rule.body[0]);
        const auto right_words = lang(rule.body[1]);
        for (const auto& u : left_words) {
          for (const auto& v : right_words) {
            Word uv = u;
            uv.insert(uv.end(), v.begin(), v.end());
            words.insert(std::move(uv));
          }
        }
      }
      return memo[a] = std::move(words);
    };
    // Trie automaton of the finite language.
    Nfa nfa;
    nfa.states = 1;
    for (const auto& w : lang(r)) {
      std::size_t q0 = 0;
      for (auto t : w) {
        auto& next = nfa.delta[{q0, t}];
        if (next.empty()) next.push_back(nfa.states++);
        q0 = next.front();
      }
      nfa.accept.insert(q0);
    }
    return product_search(fwd_, e.src, e.dst, nfa);
  }

 private:
  const RuleGraph& h_;
  const RuleBase& rb_;
  Automaton fwd_, rev_;
  std::optional<RelationId> eq_;
  std::vector<std::vector<std::size_t>> by_head_;
};

}  // namespace

CheckReport check_R1(const RuleGraph& h, const RelationTable& rels) {
  CheckReport report{Condition::R1, Verdict::holds, std::nullopt, {}};
  std::set<std::string> labels;
  for (const auto& e : h.edges()) labels.insert(h.relations().name(e.rel));
  for (RelationId r = 0; r < rels.size(); ++r) {
    if (!labels.contains(rels.name(r))) {
      report.verdict = Verdict::violated;
      Witness w;
      w.relation_name = rels.name(r);
      w.relation = h.relations().find(w.relation_name);
      report.witness = std::move(w);
      return report;
    }
  }
  return report;
}

CheckReport check_R2(const RuleGraph& h) {
  CheckReport report{Condition::R2, Verdict::holds, std::nullopt, {}};
  const auto& es = h.edges();
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (std::size_t j = i + 1; j < es.size(); ++j) {
      if (es[i].dst == es[j].dst && es[i].rel == es[j].rel) {
        report.verdict = Verdict::violated;
        Witness w;
        w.relation = es[i].rel;
        w.relation_name = h.relations().name(es[i].rel);
        w.edges = {es[i], es[j]};
        report.witness = std::move(w);
        return report;
      }
    }
  }
  return report;
}

namespace {

// Binary bases normalize without new relations; longer bodies need fresh
// relations the graph would have to be built with.
RuleBase binary_base(const RuleBase& base) {
  if (base.normalized()) return base;
  RuleBase nb = normalize(base);
  if (nb.relations().size() != base.relations().size()) {
    throw InputError("rule base has bodies longer than two; normalize it and check the graph "
                     "built from the normalized base");
  }
  return nb;
}

}  // namespace

CheckReport check_R3(const RuleGraph& graph, const RuleBase& base, std::uint32_t depth) {
  const RuleBase nb = binary_base(base);
  const Aligned al = align_pair(graph, nb);
  const RuleBase& rb = al.rb;
  const RuleGraph& h = al.h;
  CheckReport report{Condition::R3, Verdict::holds, std::nullopt, {}};
  const auto eq = h.relations().eq();
  R3Solver solver(h, rb);
  std::vector<std::pair<Edge, std::uint32_t>> jobs;
  for (const auto& e : h.edges()) {
    if (eq && e.rel == *eq) continue;
    const auto s0 = solver.initial(e.dst);
    solver.demand(e.rel, s0);
    jobs.emplace_back(e, s0);
  }
  solver.solve();
  std::uint32_t beyond = kNoCost;
  for (const auto& [e, s0] : jobs) {
    std::optional<std::uint32_t> bad_end;
    std::uint32_t bad_cost = kNoCost;
    for (const auto& [end, entry] : solver.results(e.rel, s0)) {
      if (contains(solver.set(end), e.src)) continue;
      if (entry.cost < bad_cost) {
        bad_cost = entry.cost;
        bad_end = end;
      }
    }
    if (!bad_end) continue;
    if (bad_cost <= depth) {
      report.verdict = Verdict::violated;
      report.witness = to_caller(graph, h, e, {solver.word(e.rel, s0, *bad_end)});
      return report;
    }
    beyond = std::min(beyond, bad_cost);
  }
  if (beyond != kNoCost) {
    report.verdict = Verdict::unknown_at_bound;
    report.detail = "violations need derivations of " + std::to_string(beyond) +
                    " steps, beyond the depth bound";
  }
  return report;
}

CheckReport check_R4(const RuleGraph& graph, const RuleBase& base, std::uint32_t max_len,
                     R4Mode mode) {
  const RuleBase nb = binary_base(base);
  const Aligned al = align_pair(graph, nb);
  const RuleBase& rb = al.rb;
  const RuleGraph& h = al.h;
  CheckReport report{mode.bound ? Condition::R4m : Condition::R4, Verdict::holds, std::nullopt,
                     {}};
  const R4Checker checker(h, rb);
  bool any_unknown = false;
  for (RelationId r = 0; r < h.relations().size(); ++r) {
    const auto edges = h.edges_with(r);
    if (edges.empty()) continue;  // R1's concern
    bool some_good = false, some_unknown = false;
    Witness wit;
    for (const auto& e : edges) {
      EdgeResult res;
      if (mode.bound) {
        res = checker.enumerate(e, *mode.bound + 1, mode.bound);
      } else if (auto ex = checker.exact(e)) {
        res = *ex;
      } else {
        res = checker.enumerate(e, max_len, std::nullopt);
      }
      if (res.status == EdgeStatus::all_entailed) {
        some_good = true;
        break;
      }
      if (res.status == EdgeStatus::unknown) {
        some_unknown = true;
        continue;
      }
      wit.edges.push_back(e);
      wit.types.push_back(res.bad);
    }
    if (some_good) continue;
    if (some_unknown) {
      any_unknown = true;
      continue;
    }
    Witness mapped;
    for (std::size_t i = 0; i < wit.edges.size(); ++i) {
      Witness one = to_caller(graph, h, wit.edges[i], {wit.types[i]});
      mapped.relation = one.relation;
      mapped.relation_name = one.relation_name;
      mapped.edges.push_back(one.edges[0]);
      mapped.types.push_back(one.types[0]);
      mapped.type_text.push_back(one.type_text[0]);
    }
    wit = std::move(mapped);
    report.verdict = Verdict::violated;
    report.witness = std::move(wit);
    return report;
  }
  if (any_unknown) {
    report.verdict = Verdict::unknown_at_bound;
    report.detail = "path types longer than " + std::to_string(max_len) + " left undecided";
  }
  return report;
}

std::vector<CheckReport> check_all(const RuleGraph& h, const RuleBase& rb,
                                   std::uint32_t derivation_depth, std::uint32_t max_len,
                                   R4Mode mode) {
  RelationTable rels = rb.relations();
  for (const auto& info : h.relations().entries()) {
    if (!rels.find(info.name)) {
      if (info.kind == RelationKind::eq) {
        rels.ensure_eq();
      } else if (info.kind == RelationKind::inverse) {
        rels.add_inverse(rels.intern(h.relations().name(*info.inverse_of)));
      } else {
        rels.intern(info.name, info.kind);
      }
    }
  }
  rels.ensure_eq();
  return {check_R1(h, rels), check_R2(h), check_R3(h, rb, derivation_depth),
          check_R4(h, rb, max_len, mode)};
}

}  // namespace reshuffle
