#include "reshuffle/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "reshuffle/error.hpp"

namespace reshuffle {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

KnowledgeGraph parse_into(std::istream& in, const std::string& source, KnowledgeGraph g) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#' || is_blank(line)) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(source, lineno,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (f.empty()) throw ParseError(source, lineno, "empty field");
    }
    g.add(fields[0], fields[1], fields[2]);
  }
  return g;
}

}  // namespace

KnowledgeGraph::KnowledgeGraph(Vocabulary entities, RelationTable relations)
    : entities_(std::move(entities)), relations_(std::move(relations)) {}

bool KnowledgeGraph::contains(const Triple& t) const {
  return std::binary_search(triples_.begin(), triples_.end(), t);
}

bool KnowledgeGraph::insert(const Triple& t) {
  validate(t);
  auto it = std::lower_bound(triples_.begin(), triples_.end(), t);
  if (it != triples_.end() && *it == t) return false;
  triples_.insert(it, t);
  return true;
}

Triple KnowledgeGraph::add(std::string_view head, std::string_view rel, std::string_view tail) {
  Triple t{entities_.intern(head), relations_.intern(rel), entities_.intern(tail)};
  insert(t);
  return t;
}

void KnowledgeGraph::validate(const Triple& t) const {
  if (t.head >= entities_.size() || t.tail >= entities_.size()) {
    throw InputError("triple references unknown entity id");
  }
  if (t.rel >= relations_.size()) {
    throw InputError("triple references unknown relation id");
  }
}

KnowledgeGraph parse_triples(std::istream& in, const std::string& source) {
  return parse_into(in, source, KnowledgeGraph{});
}

KnowledgeGraph load_triples(const std::filesystem::path& path) {
  return load_triples_into(path, Vocabulary{}, RelationTable{});
}

KnowledgeGraph load_triples_into(const std::filesystem::path& path, Vocabulary entities,
                                 RelationTable relations) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open triple file '" + path.string() + "'");
  return parse_into(in, path.string(), KnowledgeGraph(std::move(entities), std::move(relations)));
}

void save_triples(const KnowledgeGraph& g, std::ostream& out) {
  for (const auto& t : g.triples()) {
    out << g.entities().name(t.head) << '\t' << g.relations().name(t.rel) << '\t'
        << g.entities().name(t.tail) << '\n';
  }
}

void save_triples(const KnowledgeGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  save_triples(g, out);
}

KnowledgeGraph augment(const KnowledgeGraph& g, bool add_inverses, bool add_eq) {
  if (g.augmented()) throw InputError("graph is already augmented");
  KnowledgeGraph out = g;
  auto& rels = out.relations();
  if (add_eq) {
    if (auto id = rels.find(kEqName); id && rels.kind(*id) != RelationKind::eq) {
      throw InputError("relation name 'eq' is reserved and may not appear in input graphs");
    }
  }
  if (add_inverses) {
    for (RelationId r = 0; r < g.relations().size(); ++r) {
      const auto& name = g.relations().name(r);
      if (g.relations().kind(r) == RelationKind::base && name.ends_with(kInverseSuffix)) {
        throw InputError("relation name '" + name + "' uses the reserved inverse suffix");
      }
    }
    const std::size_t n = g.relations().size();
    for (RelationId r = 0; r < n; ++r) {
      if (g.relations().kind(r) == RelationKind::base) rels.add_inverse(r);
    }
    for (const auto& t : g.triples()) {
      if (g.relations().kind(t.rel) != RelationKind::base) continue;
      out.insert(Triple{t.tail, *rels.find(g.relations().name(t.rel) + std::string(kInverseSuffix)),
                        t.head});
    }
  }
  if (add_eq) {
    const RelationId eq = rels.ensure_eq();
    for (EntityId e = 0; e < out.num_entities(); ++e) out.insert(Triple{e, eq, e});
  }
  out.set_augmented(true);
  return out;
}

KnowledgeGraph strip_augmentation(const KnowledgeGraph& g) {
  KnowledgeGraph out(g.entities(), g.relations());
  for (const auto& t : g.triples()) {
    const auto kind = g.relations().kind(t.rel);
    if (kind == RelationKind::inverse || kind == RelationKind::eq) continue;
    out.insert(t);
  }
  return out;
}

KnowledgeGraph with_relations(const KnowledgeGraph& g, const RelationTable& relations) {
  KnowledgeGraph out(g.entities(), relations);
  out.set_augmented(g.augmented());
  for (const auto& t : g.triples()) {
    out.insert(Triple{t.head, relations.require(g.relations().name(t.rel)), t.tail});
  }
  return out;
}

}  // namespace reshuffle
