#include "reshuffle/rules.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "reshuffle/error.hpp"

namespace reshuffle {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

RelationId intern_rule_relation(RelationTable& table, const std::string& name) {
  if (auto id = table.find(name)) return *id;
  if (name == kEqName) throw InputError("relation 'eq' may not appear in rules");
  if (name.ends_with(kInverseSuffix) && name.size() > kInverseSuffix.size()) {
    const auto base = table.intern(name.substr(0, name.size() - kInverseSuffix.size()));
    return table.add_inverse(base);
  }
  return table.intern(name);
}

std::uint64_t key(RelationId r, EntityId e) { return (std::uint64_t{r} << 32) | e; }

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = t.head;
    h = h * 0x9E3779B97F4A7C15ULL ^ t.rel;
    h = h * 0x9E3779B97F4A7C15ULL ^ t.tail;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// Binary rules indexed by each body position.
struct RuleIndex {
  // by_first[r1] = {(r2, head)}, by_second[r2] = {(r1, head)}
  std::unordered_map<RelationId, std::vector<std::pair<RelationId, RelationId>>> by_first;
  std::unordered_map<RelationId, std::vector<std::pair<RelationId, RelationId>>> by_second;

  explicit RuleIndex(const RuleBase& rb) {
    for (const auto& rule : rb.rules()) {
      by_first[rule.body[0]].emplace_back(rule.body[1], rule.head);
      by_second[rule.body[1]].emplace_back(rule.body[0], rule.head);
    }
  }

  template <class Map>
  static const std::vector<std::pair<RelationId, RelationId>>& get(const Map& m, RelationId r) {
    static const std::vector<std::pair<RelationId, RelationId>> none;
    auto it = m.find(r);
    return it == m.end() ? none : it->second;
  }
};

void check_compatible(const RuleBase& rb, const KnowledgeGraph& g) {
  const auto& a = rb.relations();
  const auto& b = g.relations();
  if (b.size() > a.size()) {
    throw InputError("graph relation table is not covered by the rule base (call align)");
  }
  for (RelationId r = 0; r < b.size(); ++r) {
    if (a.name(r) != b.name(r)) {
      throw InputError("relation id " + std::to_string(r) + " is '" + b.name(r) +
                       "' in the graph but '" + a.name(r) + "' in the rule base");
    }
  }
}

// Plain worklist fixpoint: each new triple is joined against everything known so far.
std::vector<Triple> closure(const RuleBase& nb, const KnowledgeGraph& g) {
  const RuleIndex idx(nb);
  std::unordered_set<Triple, TripleHash> known;
  std::unordered_map<std::uint64_t, std::vector<EntityId>> out, in;
  std::deque<Triple> queue;
  auto insert = [&](const Triple& t) {
    if (!known.insert(t).second) return;
    out[key(t.rel, t.head)].push_back(t.tail);
    in[key(t.rel, t.tail)].push_back(t.head);
    queue.push_back(t);
  };
  for (const auto& t : g.triples()) insert(t);
  while (!queue.empty()) {
    const Triple t = queue.front();
    queue.pop_front();
    for (auto [r2, h] : RuleIndex::get(idx.by_first, t.rel)) {
      auto it = out.find(key(r2, t.tail));
      if (it == out.end()) continue;
      const auto tails = it->second;
      for (EntityId f : tails) insert(Triple{t.head, h, f});
    }
    for (auto [r1, h] : RuleIndex::get(idx.by_second, t.rel)) {
      auto it = in.find(key(r1, t.head));
      if (it == in.end()) continue;
      const auto heads = it->second;
      for (EntityId e : heads) insert(Triple{e, h, t.tail});
    }
  }
  std::vector<Triple> result(known.begin(), known.end());
  std::sort(result.begin(), result.end());
  return result;
}

}  // namespace

void RuleBase::add(ClosedPathRule rule) {
  if (rule.body.empty()) throw InputError("rule body must not be empty");
  auto check = [&](RelationId r) {
    if (r >= relations_.size()) throw InputError("rule references unknown relation id");
    if (relations_.is_eq(r)) throw InputError("relation 'eq' may not appear in rules");
  };
  check(rule.head);
  for (auto r : rule.body) check(r);
  if (normalized_ && rule.body.size() != 2) {
    throw InputError("normalized rule base only accepts binary rules");
  }
  if (std::find(rules_.begin(), rules_.end(), rule) != rules_.end()) return;
  heads_.insert(rule.head);
  rules_.push_back(std::move(rule));
}

ClosedPathRule RuleBase::add(std::string_view head, const std::vector<std::string>& body) {
  ClosedPathRule rule;
  rule.head = intern_rule_relation(relations_, std::string(head));
  for (const auto& b : body) rule.body.push_back(intern_rule_relation(relations_, b));
  add(rule);
  return rule;
}

void RuleBase::adopt_relations(const RelationTable& wider) {
  if (wider.size() < relations_.size()) throw InputError("relation table is not a superset");
  for (RelationId r = 0; r < relations_.size(); ++r) {
    if (wider.name(r) != relations_.name(r) || wider.kind(r) != relations_.kind(r)) {
      throw InputError("relation table disagrees on '" + relations_.name(r) + "'");
    }
  }
  relations_ = wider;
}

std::string RuleBase::to_string(const ClosedPathRule& rule) const {
  std::string s = relations_.name(rule.head) + " <- ";
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) s += ", ";
    s += relations_.name(rule.body[i]);
  }
  return s;
}

RuleBase parse_rules(std::istream& in, const std::string& source, RelationTable relations) {
  RuleBase rb(std::move(relations));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto arrow = t.find("<-");
    if (arrow == std::string::npos) throw ParseError(source, lineno, "expected 'head <- body'");
    const std::string head = trim(std::string_view(t).substr(0, arrow));
    if (head.empty() || has_space(head)) throw ParseError(source, lineno, "bad rule head");
    std::vector<std::string> body;
    std::stringstream ss(t.substr(arrow + 2));
    std::string atom;
    while (std::getline(ss, atom, ',')) {
      atom = trim(atom);
      if (atom.empty() || has_space(atom)) throw ParseError(source, lineno, "bad body atom");
      body.push_back(atom);
    }
    if (body.empty()) throw ParseError(source, lineno, "empty rule body");
    if (body.size() < 2) throw ParseError(source, lineno, "rule body needs at least two atoms");
    try {
      rb.add(head, body);
    } catch (const ParseError&) {
      throw;
    } catch (const InputError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return rb;
}

RuleBase load_rules(const std::filesystem::path& path, RelationTable relations) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rule file '" + path.string() + "'");
  return parse_rules(in, path.string(), std::move(relations));
}

void save_rules(const RuleBase& rb, std::ostream& out) {
  for (const auto& rule : rb.rules()) out << rb.to_string(rule) << '\n';
}

RuleBase normalize(const RuleBase& rb) {
  if (rb.normalized()) return rb;
  RuleBase out(rb.relations());
  for (const auto& rule : rb.rules()) {
    if (rule.body.size() == 1) {
      throw InputError("rule '" + rb.to_string(rule) + "' has a body of length 1");
    }
  }
  for (const auto& rule : rb.rules()) {
    if (rule.body.size() == 2) {
      out.add(rule);
      continue;
    }
    RelationId left = rule.body[0];
    for (std::size_t i = 1; i + 1 < rule.body.size(); ++i) {
      const RelationId s = out.relations_.add_fresh();
      out.add(ClosedPathRule{{left, rule.body[i]}, s});
      left = s;
    }
    out.add(ClosedPathRule{{left, rule.body.back()}, rule.head});
  }
  out.normalized_ = true;
  return out;
}

void align(RuleBase& rb, KnowledgeGraph& g) {
  RelationTable merged = rb.relations();
  for (const auto& info : g.relations().entries()) {
    if (merged.find(info.name)) continue;
    switch (info.kind) {
      case RelationKind::eq: merged.ensure_eq(); break;
      case RelationKind::inverse:
        merged.add_inverse(merged.intern(g.relations().name(*info.inverse_of)));
        break;
      default: merged.intern(info.name, info.kind); break;
    }
  }
  g = with_relations(g, merged);
  rb.adopt_relations(merged);
}

bool is_left_regular(const RuleBase& rb, std::string* offending) {
  for (const auto& rule : rb.rules()) {
    if (rule.body.size() != 2 || rb.is_head(rule.body[1])) {
      if (offending) *offending = rb.to_string(rule);
      return false;
    }
  }
  return true;
}

std::vector<Triple> materialize(const RuleBase& rb, const KnowledgeGraph& g,
                                DerivationLimit limit) {
  check_compatible(rb, g);
  if (limit.is_bounded()) {
    if (!rb.normalized()) throw InputError("bounded entailment needs a normalized rule base");
    std::vector<Triple> result;
    for (const auto& ct : materialize_costs(rb, g, *limit.steps)) result.push_back(ct.triple);
    return result;
  }
  const RuleBase nb = normalize(rb);
  auto all = closure(nb, g);
  const auto visible = rb.relations().size();
  std::erase_if(all, [&](const Triple& t) { return t.rel >= visible; });
  return all;
}

std::vector<CostedTriple> materialize_costs(const RuleBase& rb, const KnowledgeGraph& g,
                                            std::uint32_t cap) {
  check_compatible(rb, g);
  if (!rb.normalized()) throw InputError("derivation costs need a normalized rule base");
  const RuleIndex idx(rb);
  using Item = std::pair<std::uint32_t, Triple>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  std::unordered_map<Triple, std::uint32_t, TripleHash> done;
  std::unordered_map<std::uint64_t, std::vector<std::pair<EntityId, std::uint32_t>>> out, in;
  for (const auto& t : g.triples()) pq.emplace(0, t);
  auto push = [&](std::uint32_t c, const Triple& t) {
    if (c > cap || done.contains(t)) return;
    pq.emplace(c, t);
  };
  // Costs combine as c1 + c2 + 1, which dominates both inputs, so settling in
  // increasing order yields minimal costs.
  while (!pq.empty()) {
    const auto [c, t] = pq.top();
    pq.pop();
    if (!done.emplace(t, c).second) continue;
    out[key(t.rel, t.head)].emplace_back(t.tail, c);
    in[key(t.rel, t.tail)].emplace_back(t.head, c);
    for (auto [r2, h] : RuleIndex::get(idx.by_first, t.rel)) {
      auto it = out.find(key(r2, t.tail));
      if (it == out.end()) continue;
      const auto tails = it->second;
      for (auto [f, c2] : tails) push(c + c2 + 1, Triple{t.head, h, f});
    }
    for (auto [r1, h] : RuleIndex::get(idx.by_second, t.rel)) {
      auto it = in.find(key(r1, t.head));
      if (it == in.end()) continue;
      const auto heads = it->second;
      for (auto [e, c1] : heads) push(c1 + c + 1, Triple{e, h, t.tail});
    }
  }
  std::vector<CostedTriple> result;
  result.reserve(done.size());
  for (const auto& [t, c] : done) result.push_back(CostedTriple{t, c});
  std::sort(result.begin(), result.end(),
            [](const CostedTriple& a, const CostedTriple& b) { return a.triple < b.triple; });
  return result;
}

bool entails_triple(const RuleBase& rb, const KnowledgeGraph& g, const Triple& t,
                    DerivationLimit limit) {
  if (t.head >= g.num_entities() || t.tail >= g.num_entities()) {
    throw InputError("triple references unknown entity");
  }
  if (t.rel >= rb.relations().size()) throw InputError("triple references unknown relation");
  if (g.contains(t)) return true;
  const auto all = materialize(rb, g, limit);
  return std::binary_search(all.begin(), all.end(), t);
}

std::string_view to_string(RuleEntailment e) {
  switch (e) {
    case RuleEntailment::yes: return "yes";
    case RuleEntailment::no_within_bound: return "no-within-bound";
    case RuleEntailment::trivial: return "trivial";
  }
  return "no-within-bound";
}

std::uint32_t rule_derivation_cost(const RuleBase& rb, const std::vector<RelationId>& body,
                                   RelationId head) {
  if (!rb.normalized()) throw InputError("rule entailment needs a normalized rule base");
  const std::size_t n = body.size();
  const std::size_t nrel = rb.relations().size();
  if (n == 0 || head >= nrel) return kNoCost;
  for (auto r : body) {
    if (r >= nrel) throw InputError("candidate references unknown relation");
  }
  // cost[(i * (n + 1) + j) * nrel + A] = min productions deriving body[i..j) from A
  std::vector<std::uint32_t> cost((n + 1) * (n + 1) * nrel, kNoCost);
  auto at = [&](std::size_t i, std::size_t j, RelationId a) -> std::uint32_t& {
    return cost[(i * (n + 1) + j) * nrel + a];
  };
  for (std::size_t i = 0; i < n; ++i) at(i, i + 1, body[i]) = 0;
  for (std::size_t len = 2; len <= n; ++len) {
    for (std::size_t i = 0; i + len <= n; ++i) {
      const std::size_t j = i + len;
      for (const auto& rule : rb.rules()) {
        const RelationId b = rule.body[0], c = rule.body[1];
        std::uint32_t best = at(i, j, rule.head);
        for (std::size_t k = i + 1; k < j; ++k) {
          const auto cb = at(i, k, b), cc = at(k, j, c);
          if (cb == kNoCost || cc == kNoCost) continue;
          best = std::min(best, cb + cc + 1);
        }
        at(i, j, rule.head) = best;
      }
    }
  }
  return at(0, n, head);
}

RuleEntailment entails_rule(const RuleBase& rb, const ClosedPathRule& candidate,
                            DerivationLimit limit, std::uint32_t depth_bound) {
  const auto nrel = rb.relations().size();
  if (candidate.head >= nrel) throw InputError("candidate references unknown relation");
  for (auto r : candidate.body) {
    if (r >= nrel) throw InputError("candidate references unknown relation");
  }
  if (candidate.body.size() == 1 && candidate.body[0] == candidate.head) {
    return RuleEntailment::trivial;
  }
  const auto c = rule_derivation_cost(rb, candidate.body, candidate.head);
  if (c == kNoCost || c > depth_bound) return RuleEntailment::no_within_bound;
  if (limit.is_bounded() && c > *limit.steps) return RuleEntailment::no_within_bound;
  return RuleEntailment::yes;
}

}  // namespace reshuffle
