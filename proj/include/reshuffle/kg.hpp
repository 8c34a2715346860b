#pragma once

#include <compare>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "reshuffle/vocab.hpp"

namespace reshuffle {

struct Triple {
  EntityId head = 0;
  RelationId rel = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

// Directed labelled multigraph of facts. Triples are kept sorted and unique.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(Vocabulary entities, RelationTable relations);

  Vocabulary& entities() noexcept { return entities_; }
  const Vocabulary& entities() const noexcept { return entities_; }
  RelationTable& relations() noexcept { return relations_; }
  const RelationTable& relations() const noexcept { return relations_; }

  const std::vector<Triple>& triples() const noexcept { return triples_; }
  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t size() const noexcept { return triples_.size(); }
  bool augmented() const noexcept { return augmented_; }

  bool contains(const Triple& t) const;
  // Returns false if the triple was already present.
  bool insert(const Triple& t);
  Triple add(std::string_view head, std::string_view rel, std::string_view tail);
  void validate(const Triple& t) const;

  void set_augmented(bool flag) noexcept { augmented_ = flag; }

 private:
  Vocabulary entities_;
  RelationTable relations_;
  std::vector<Triple> triples_;
  bool augmented_ = false;
};

// Parses `head<TAB>relation<TAB>tail` lines; `#` lines and blank lines are skipped.
KnowledgeGraph parse_triples(std::istream& in, const std::string& source = "<stream>");
KnowledgeGraph load_triples(const std::filesystem::path& path);

// Same as load_triples but interns names into existing vocabularies, so ids line
// up with another graph (or a checkpoint) sharing those names.
KnowledgeGraph load_triples_into(const std::filesystem::path& path, Vocabulary entities,
                                 RelationTable relations);

void save_triples(const KnowledgeGraph& g, std::ostream& out);
void save_triples(const KnowledgeGraph& g, const std::filesystem::path& path);

// Adds inverse triples (f, r__inv, e) and self-loops (e, eq, e).
KnowledgeGraph augment(const KnowledgeGraph& g, bool add_inverses, bool add_eq);

// Drops inverse and eq triples (their relations stay in the table).
KnowledgeGraph strip_augmentation(const KnowledgeGraph& g);

// Copy of g whose relation table is `relations`; every relation of g must exist
// there by name.
KnowledgeGraph with_relations(const KnowledgeGraph& g, const RelationTable& relations);

}  // namespace reshuffle
