#include "reshuffle/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "reshuffle/error.hpp"

namespace reshuffle {

using nlohmann::json;

std::string to_json(const Checkpoint& c) {
  const Model& m = c.model;
  json doc;
  doc["version"] = Checkpoint::kVersion;
  doc["mode"] = m.mode == ModelMode::binary ? "binary" : "learned";
  doc["dims"] = {{"ell", m.dims.ell}, {"k", m.dims.k}, {"layers", m.dims.layers}};
  doc["seed"] = m.seed;
  doc["nodes"] = m.node_names;
  doc["relations"] = json::array();
  for (const auto& info : m.relations.entries()) {
    doc["relations"].push_back({{"name", info.name}, {"kind", std::string(to_string(info.kind))}});
  }
  doc["matrices"] = json::array();
  for (const auto& mat : m.mats) {
    if (m.mode == ModelMode::binary) {
      // Sparse: the source block of every non-zero row.
      json rows = json::object();
      for (std::uint32_t i = 0; i < mat.ell; ++i) {
        for (std::uint32_t j = 0; j < mat.ell; ++j) {
          if (mat.at(i, j) != 0.0) rows[std::to_string(i)] = j;
        }
      }
      doc["matrices"].push_back({{"rel", m.relations.name(mat.rel)}, {"rows", rows}});
    } else {
      doc["matrices"].push_back({{"rel", m.relations.name(mat.rel)}, {"dense", mat.b}});
    }
  }
  if (!c.logits.empty()) doc["logits"] = c.logits;
  if (c.optimizer) {
    doc["optimizer"] = {{"step", c.optimizer->step}, {"m", c.optimizer->m}, {"v", c.optimizer->v}};
  }
  doc["epoch"] = c.epoch;
  return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("version").get<int>() != Checkpoint::kVersion) {
      throw InputError("unsupported checkpoint version " + doc.at("version").dump());
    }
    Checkpoint c;
    Model& m = c.model;
    const auto mode = doc.at("mode").get<std::string>();
    if (mode != "binary" && mode != "learned") throw InputError("unknown model mode '" + mode + "'");
    m.mode = mode == "binary" ? ModelMode::binary : ModelMode::learned;
    m.dims.ell = doc.at("dims").at("ell").get<std::uint32_t>();
    m.dims.k = doc.at("dims").at("k").get<std::uint32_t>();
    m.dims.layers = doc.at("dims").at("layers").get<std::uint32_t>();
    m.dims.validate();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.node_names = doc.at("nodes").get<std::vector<std::string>>();
    for (const auto& r : doc.at("relations")) {
      const auto name = r.at("name").get<std::string>();
      const auto kind = relation_kind_from_string(r.at("kind").get<std::string>());
      if (kind == RelationKind::eq) {
        m.relations.ensure_eq();
      } else if (kind == RelationKind::inverse) {
        const auto base = name.substr(0, name.size() - kInverseSuffix.size());
        m.relations.add_inverse(m.relations.intern(base));
      } else {
        m.relations.intern(name, kind);
      }
      if (m.relations.size() == 0 || m.relations.name(m.relations.size() - 1) != name) {
        throw InputError("checkpoint relation list is out of order at '" + name + "'");
      }
    }
    for (RelationId r = 0; r < m.relations.size(); ++r) m.mats.emplace_back(r, m.dims.ell);
    for (const auto& entry : doc.at("matrices")) {
      auto& mat = m.mats.at(m.relations.require(entry.at("rel").get<std::string>()));
      if (entry.contains("rows")) {
        for (const auto& [i, j] : entry.at("rows").items()) {
          mat.at(static_cast<std::uint32_t>(std::stoul(i)), j.get<std::uint32_t>()) = 1.0;
        }
      } else {
        mat.b = entry.at("dense").get<std::vector<double>>();
        if (mat.b.size() != std::size_t{mat.ell} * mat.ell) {
          throw InputError("checkpoint matrix has the wrong size");
        }
      }
    }
    if (doc.contains("logits")) c.logits = doc.at("logits").get<std::vector<std::vector<double>>>();
    if (doc.contains("optimizer")) {
      const auto& o = doc.at("optimizer");
      c.optimizer = OptimizerState{o.at("step").get<std::uint64_t>(),
                                   o.at("m").get<std::vector<std::vector<double>>>(),
                                   o.at("v").get<std::vector<std::vector<double>>>()};
    }
    c.epoch = doc.value("epoch", 0u);
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint JSON: ") + e.what());
  } catch (const std::out_of_range&) {
    throw InputError("checkpoint references an unknown block or relation");
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << to_json(c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_json(ss.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace reshuffle
