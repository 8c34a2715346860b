#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace reshuffle {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// Dense string <-> id mapping, ids assigned in first-seen order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool operator==(const Vocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

enum class RelationKind : std::uint8_t { base, inverse, eq, fresh };

inline constexpr std::string_view kEqName = "eq";
inline constexpr std::string_view kInverseSuffix = "__inv";
inline constexpr std::string_view kFreshPrefix = "__s";

struct RelationInfo {
  std::string name;
  RelationKind kind = RelationKind::base;
  std::optional<RelationId> inverse_of;

  bool operator==(const RelationInfo&) const = default;
};

// Relation vocabulary with kinds. At most one relation has kind `eq`.
class RelationTable {
 public:
  RelationId intern(std::string_view name, RelationKind kind = RelationKind::base);
  RelationId add_inverse(RelationId base);
  RelationId ensure_eq();
  RelationId add_fresh();

  std::optional<RelationId> find(std::string_view name) const;
  RelationId require(std::string_view name) const;
  std::optional<RelationId> eq() const noexcept { return eq_; }
  bool is_eq(RelationId r) const noexcept { return eq_ && *eq_ == r; }

  const RelationInfo& info(RelationId r) const { return rels_.at(r); }
  const std::string& name(RelationId r) const { return rels_.at(r).name; }
  RelationKind kind(RelationId r) const { return rels_.at(r).kind; }
  std::size_t size() const noexcept { return rels_.size(); }
  const std::vector<RelationInfo>& entries() const noexcept { return rels_; }

  bool operator==(const RelationTable& other) const { return rels_ == other.rels_; }

 private:
  std::vector<RelationInfo> rels_;
  std::unordered_map<std::string, RelationId> index_;
  std::optional<RelationId> eq_;
  std::uint32_t fresh_counter_ = 0;
};

std::string_view to_string(RelationKind kind);
RelationKind relation_kind_from_string(std::string_view s);

}  // namespace reshuffle
