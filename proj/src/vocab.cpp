#include "reshuffle/vocab.hpp"

#include "reshuffle/error.hpp"

namespace reshuffle {

std::uint32_t Vocabulary::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

RelationId RelationTable::intern(std::string_view name, RelationKind kind) {
  if (auto id = find(name)) return *id;
  if (kind == RelationKind::eq && eq_) {
    throw InputError("relation table already has an eq relation");
  }
  const auto id = static_cast<RelationId>(rels_.size());
  rels_.push_back(RelationInfo{std::string(name), kind, std::nullopt});
  index_.emplace(rels_.back().name, id);
  if (kind == RelationKind::eq) eq_ = id;
  return id;
}

RelationId RelationTable::add_inverse(RelationId base) {
  const std::string inv_name = name(base) + std::string(kInverseSuffix);
  if (auto id = find(inv_name)) {
    if (rels_[*id].kind != RelationKind::inverse || rels_[*id].inverse_of != base) {
      throw InputError("relation name '" + inv_name + "' is reserved for inverses");
    }
    return *id;
  }
  const RelationId id = intern(inv_name, RelationKind::inverse);
  rels_[id].inverse_of = base;
  return id;
}

RelationId RelationTable::ensure_eq() {
  if (eq_) return *eq_;
  if (find(kEqName)) {
    throw InputError("relation name 'eq' is reserved");
  }
  return intern(kEqName, RelationKind::eq);
}

RelationId RelationTable::add_fresh() {
  std::string name;
  do {
    name = std::string(kFreshPrefix) + std::to_string(++fresh_counter_);
  } while (find(name));
  return intern(name, RelationKind::fresh);
}

std::optional<RelationId> RelationTable::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

RelationId RelationTable::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw InputError("unknown relation '" + std::string(name) + "'");
}

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::base: return "base";
    case RelationKind::inverse: return "inverse";
    case RelationKind::eq: return "eq";
    case RelationKind::fresh: return "fresh";
  }
  return "base";
}

RelationKind relation_kind_from_string(std::string_view s) {
  if (s == "base") return RelationKind::base;
  if (s == "inverse") return RelationKind::inverse;
  if (s == "eq") return RelationKind::eq;
  if (s == "fresh") return RelationKind::fresh;
  throw InputError("unknown relation kind '" + std::string(s) + "'");
}

}  // namespace reshuffle
