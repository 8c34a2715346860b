#include "reshuffle/eval.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "reshuffle/error.hpp"

namespace reshuffle {

double mid_rank(double positive, std::span<const double> negatives) {
  double rank = 1.0;
  for (double s : negatives) {
    if (s > positive) rank += 1.0;
    else if (s == positive) rank += 0.5;
  }
  return rank;
}

Snapshot model_states(const Model& model, const KnowledgeGraph& context, unsigned threads) {
  const auto layer0 = init_entities(context.num_entities(), model.dims, model.seed);
  if (model.mode == ModelMode::binary) return forward_to_fixpoint(model, context, layer0, threads);
  return forward(model, context, layer0, model.dims.layers, threads);
}

EvalReport hits_at_k(const Model& model, const KnowledgeGraph& context, const KnowledgeGraph& test,
                     const EvalConfig& config, unsigned threads) {
  if (test.num_entities() > context.num_entities()) {
    throw InputError("test graph mentions entities outside the context graph");
  }
  for (EntityId e = 0; e < test.num_entities(); ++e) {
    if (test.entities().name(e) != context.entities().name(e)) {
      throw InputError("test and context graphs disagree on entity ids");
    }
  }
  return hits_at_k(model, model_states(model, context, threads), test, config);
}

EvalReport hits_at_k(const Model& model, const Snapshot& states, const KnowledgeGraph& test,
                     const EvalConfig& config) {
  if (config.negatives < 1) throw InputError("evaluation needs at least one negative");
  if (config.ks.empty()) throw InputError("evaluation needs at least one K");
  if (test.size() == 0) throw InputError("empty test set");
  const auto n = static_cast<EntityId>(states.num_entities());
  if (n < 2) throw InputError("evaluation needs at least two entities");
  const auto rel = bind_relations(model, test);

  EvalReport rep;
  rep.ks = config.ks;
  rep.seed = config.seed;
  rep.hits.assign(config.ks.size(), 0.0);
  rep.hits_head.assign(config.ks.size(), 0.0);
  rep.hits_tail.assign(config.ks.size(), 0.0);

  std::vector<double> neg(config.negatives);
  std::uint64_t index = 0;
  for (const auto& t : test.triples()) {
    const RelationId r = rel[t.rel];
    if (r == RelationId(-1)) {
      throw InputError("unknown relation '" + test.relations().name(t.rel) + "' in test set");
    }
    if (t.head >= n || t.tail >= n) throw InputError("test triple entity outside the states");
    const double pos = score(model, states.state(t.head), states.state(t.tail), r);
    const auto& name = test.relations().name(t.rel);
    auto& per = rep.per_relation[name];
    per.resize(config.ks.size(), 0.0);
    ++rep.per_relation_count[name];
    for (int side = 0; side < 2; ++side) {
      const EntityId fixed = side == 0 ? t.tail : t.head;
      const EntityId orig = side == 0 ? t.head : t.tail;
      for (std::uint32_t i = 0; i < config.negatives; ++i) {
        // Uniform over the n-1 entities other than orig, keyed by (seed, triple, side, i).
        auto x = static_cast<EntityId>(counter_hash(config.seed, index, 2 * i + side) % (n - 1));
        if (x >= orig) ++x;
        neg[i] = side == 0 ? score(model, states.state(x), states.state(fixed), r)
                           : score(model, states.state(fixed), states.state(x), r);
      }
      const double rank = mid_rank(pos, neg);
      for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
        const double hit = rank <= config.ks[ki] ? 1.0 : 0.0;
        (side == 0 ? rep.hits_head : rep.hits_tail)[ki] += hit;
        per[ki] += 0.5 * hit;
      }
    }
    ++index;
  }
  rep.triples = test.size();
  const double count = static_cast<double>(rep.triples);
  for (std::size_t ki = 0; ki < config.ks.size(); ++ki) {
    rep.hits_head[ki] /= count;
    rep.hits_tail[ki] /= count;
    rep.hits[ki] = 0.5 * (rep.hits_head[ki] + rep.hits_tail[ki]);
  }
  for (auto& [name, v] : rep.per_relation) {
    for (auto& x : v) x /= static_cast<double>(rep.per_relation_count[name]);
  }
  return rep;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json doc;
  doc["triples"] = r.triples;
  doc["seed"] = r.seed;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    const auto key = "hits@" + std::to_string(r.ks[i]);
    doc[key] = r.hits[i];
    doc["head"][key] = r.hits_head[i];
    doc["tail"][key] = r.hits_tail[i];
    for (const auto& [name, v] : r.per_relation) doc["relations"][name][key] = v[i];
  }
  for (const auto& [name, c] : r.per_relation_count) doc["relations"][name]["count"] = c;
  return doc.dump(2) + "\n";
}

std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  char buf[128];
  out << "triples " << r.triples << ", seed " << r.seed << "\n";
  out << "relation            count";
  for (auto k : r.ks) {
    std::snprintf(buf, sizeof buf, "  hits@%-4u", k);
    out << buf;
  }
  out << "\n";
  auto row = [&](const std::string& name, std::size_t count, const std::vector<double>& v) {
    std::snprintf(buf, sizeof buf, "%-18s %6zu", name.c_str(), count);
    out << buf;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "  %9.4f", x);
      out << buf;
    }
    out << "\n";
  };
  for (const auto& [name, v] : r.per_relation) row(name, r.per_relation_count.at(name), v);
  row("(head side)", r.triples, r.hits_head);
  row("(tail side)", r.triples, r.hits_tail);
  row("(all)", r.triples, r.hits);
  return out.str();
}

}  // namespace reshuffle
