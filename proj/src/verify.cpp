#include <set>

#include "reshuffle/engine.hpp"
#include "reshuffle/error.hpp"

namespace reshuffle {

PropositionReport verify_propositions(const RuleBase& rb, const KnowledgeGraph& g,
                                      const RuleGraph& h, const PropositionConfig& config) {
  if (config.k_values.empty() || config.seeds == 0) {
    throw InputError("verify needs at least one k and one seed");
  }
  if (auto r2 = check_R2(h); !r2.holds()) throw InputError("rule graph fails R2");

  // Oracle labels, translated into the rule graph's relation ids.
  const RelationTable& mt = h.relations();
  auto to_model = [&](const Triple& t) {
    const auto r = mt.find(rb.relations().name(t.rel));
    if (!r) throw InputError("rule graph lacks relation '" + rb.relations().name(t.rel) + "'");
    return Triple{t.head, *r, t.tail};
  };
  std::set<Triple> full, within;
  for (const auto& t : materialize(rb, g, DerivationLimit::unbounded())) full.insert(to_model(t));
  if (config.bounded_m) {
    for (const auto& t : materialize(rb, g, DerivationLimit::bounded(*config.bounded_m))) {
      within.insert(to_model(t));
    }
  }
  const std::set<Triple>& required = config.bounded_m ? within : full;

  const auto n = static_cast<EntityId>(g.num_entities());
  std::vector<Triple> negatives, beyond;
  for (EntityId a = 0; a < n; ++a) {
    for (RelationId r = 0; r < mt.size(); ++r) {
      for (EntityId b = 0; b < n; ++b) {
        const Triple t{a, r, b};
        if (!full.contains(t)) negatives.push_back(t);
        else if (config.bounded_m && !within.contains(t)) beyond.push_back(t);
      }
    }
  }

  PropositionReport rep;
  rep.k_values = config.k_values;
  rep.entailed = required.size();
  rep.non_entailed = negatives.size();
  rep.beyond_bound = beyond.size();
  std::size_t checked = 0;
  for (std::size_t ki = 0; ki < config.k_values.size(); ++ki) {
    const auto k = config.k_values[ki];
    const Model model = compile_matrices(h, k);
    BitEngine engine(model, g);
    std::size_t fp = 0, beyond_hits = 0;
    for (std::uint32_t s = 0; s < config.seeds; ++s) {
      const auto seed = counter_hash(config.base_seed, k, s);
      engine.load(init_entities(n, model.dims, seed));
      if (config.bounded_m) {
        std::vector<bool> hit(beyond.size(), false);
        for (std::uint32_t layer = 0; layer <= *config.bounded_m + 1; ++layer) {
          if (layer > 0) engine.round();
          for (std::size_t i = 0; i < beyond.size(); ++i) {
            hit[i] = hit[i] || engine.capture(beyond[i].head, beyond[i].rel, beyond[i].tail);
          }
        }
        for (bool x : hit) beyond_hits += x;
      }
      engine.run_to_fixpoint();
      for (const auto& t : required) {
        ++checked;
        if (!engine.capture(t.head, t.rel, t.tail)) ++rep.missed;
      }
      for (const auto& t : negatives) fp += engine.capture(t.head, t.rel, t.tail);
    }
    const double trials = static_cast<double>(config.seeds);
    rep.false_positive_rate.push_back(
        negatives.empty() ? 0.0 : static_cast<double>(fp) / (trials * negatives.size()));
    if (config.bounded_m) {
      rep.beyond_bound_rate.push_back(
          beyond.empty() ? 0.0 : static_cast<double>(beyond_hits) / (trials * beyond.size()));
    }
  }
  rep.completeness = checked ? 1.0 - static_cast<double>(rep.missed) / checked : 1.0;
  return rep;
}

}  // namespace reshuffle
