#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "reshuffle/error.hpp"
#include "reshuffle/rulegraph.hpp"

namespace reshuffle {

namespace {

using nlohmann::json;

RelationId intern_graph_relation(RelationTable& table, const std::string& name,
                                 std::optional<RelationKind> kind) {
  if (auto id = table.find(name)) return *id;
  const RelationKind k = kind ? *kind
                         : name == kEqName ? RelationKind::eq
                         : name.ends_with(kInverseSuffix) && name.size() > kInverseSuffix.size()
                             ? RelationKind::inverse
                         : name.starts_with(kFreshPrefix) ? RelationKind::fresh
                                                          : RelationKind::base;
  switch (k) {
    case RelationKind::eq:
      if (name != kEqName) throw InputError("eq relation must be named 'eq'");
      return table.ensure_eq();
    case RelationKind::inverse: {
      if (!name.ends_with(kInverseSuffix)) {
        throw InputError("inverse relation '" + name + "' must end in " +
                         std::string(kInverseSuffix));
      }
      const auto base = table.intern(name.substr(0, name.size() - kInverseSuffix.size()));
      return table.add_inverse(base);
    }
    default: return table.intern(name, k);
  }
}

}  // namespace

RuleGraph parse_rule_graph(const std::string& text, RelationTable relations,
                           bool allow_r2_violation) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("rule graph JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges")) {
      throw InputError("rule graph JSON needs 'nodes' and 'edges'");
    }
    if (doc.contains("relations")) {
      for (const auto& r : doc.at("relations")) {
        if (r.is_string()) {
          intern_graph_relation(relations, r.get<std::string>(), std::nullopt);
        } else {
          intern_graph_relation(relations, r.at("name").get<std::string>(),
                                relation_kind_from_string(r.at("kind").get<std::string>()));
        }
      }
    }
    RuleGraph h(std::move(relations));
    std::map<long long, NodeId> ids;
    std::map<std::string, std::string> names;
    if (doc.contains("names")) {
      for (const auto& [k, v] : doc.at("names").items()) names[k] = v.get<std::string>();
    }
    for (const auto& n : doc.at("nodes")) {
      long long ext = 0;
      std::string name;
      if (n.is_number_integer()) {
        ext = n.get<long long>();
      } else {
        ext = n.at("id").get<long long>();
        if (n.contains("name")) name = n.at("name").get<std::string>();
      }
      if (name.empty()) {
        auto it = names.find(std::to_string(ext));
        name = it != names.end() ? it->second : "n" + std::to_string(ext);
      }
      if (ids.contains(ext)) throw InputError("duplicate node id " + std::to_string(ext));
      ids[ext] = h.add_node(name);
    }
    auto node = [&](const json& v) {
      auto it = ids.find(v.get<long long>());
      if (it == ids.end()) throw InputError("edge references unknown node " + v.dump());
      return it->second;
    };
    for (const auto& e : doc.at("edges")) {
      const auto rel =
          intern_graph_relation(h.relations(), e.at("rel").get<std::string>(), std::nullopt);
      const NodeId src = node(e.at("src")), dst = node(e.at("dst"));
      if (allow_r2_violation) {
        h.insert_raw(src, rel, dst);
      } else {
        h.add_edge(src, rel, dst);
      }
    }
    if (h.num_nodes() > 0) h.set_root(doc.contains("root") ? node(doc.at("root")) : 0);
    return h;
  } catch (const json::exception& e) {
    throw InputError(std::string("rule graph JSON: ") + e.what());
  }
}

RuleGraph load_rule_graph(const std::filesystem::path& path, RelationTable relations,
                          bool allow_r2_violation) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open rule graph '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_rule_graph(ss.str(), std::move(relations), allow_r2_violation);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string to_json(const RuleGraph& h) {
  json doc;
  doc["root"] = h.root();
  doc["nodes"] = json::array();
  json names = json::object();
  for (NodeId n = 0; n < h.num_nodes(); ++n) {
    doc["nodes"].push_back(n);
    names[std::to_string(n)] = h.node_name(n);
  }
  doc["names"] = names;
  doc["relations"] = json::array();
  for (const auto& info : h.relations().entries()) {
    doc["relations"].push_back({{"name", info.name}, {"kind", std::string(to_string(info.kind))}});
  }
  doc["edges"] = json::array();
  for (const auto& e : h.edges()) {
    doc["edges"].push_back({{"src", e.src}, {"rel", h.relations().name(e.rel)}, {"dst", e.dst}});
  }
  return doc.dump(2) + "\n";
}

void save_rule_graph(const RuleGraph& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << to_json(h);
}

std::string to_dot(const RuleGraph& h) {
  std::ostringstream out;
  out << "digraph rulegraph {\n";
  for (NodeId n = 0; n < h.num_nodes(); ++n) {
    out << "  " << n << " [label=\"" << h.node_name(n) << "\""
        << (n == h.root() ? ", shape=doublecircle" : "") << "];\n";
  }
  for (const auto& e : h.edges()) {
    out << "  " << e.src << " -> " << e.dst << " [label=\"" << h.relations().name(e.rel)
        << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace reshuffle
