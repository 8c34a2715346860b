#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reshuffle/engine.hpp"

namespace reshuffle {

struct EvalConfig {
  std::uint32_t negatives = 50;  // per side
  std::vector<std::uint32_t> ks{10};
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::vector<std::uint32_t> ks;
  std::vector<double> hits, hits_head, hits_tail;  // aligned with ks
  std::map<std::string, std::vector<double>> per_relation;  // averaged over sides
  std::map<std::string, std::size_t> per_relation_count;
  std::size_t triples = 0;
  std::uint64_t seed = 0;
};

// 1 + #(negatives scoring strictly higher) + #(exact ties)/2.
double mid_rank(double positive, std::span<const double> negatives);

// Entity states of `context` after the model's forward pass: the fixpoint for a
// binary model, dims.layers rounds for a learned one. Layer 0 uses model.seed.
Snapshot model_states(const Model& model, const KnowledgeGraph& context, unsigned threads = 1);

// Ranks every test triple against head and tail corruptions drawn uniformly
// from the other context entities (unfiltered). Test entity ids must be
// context entity ids.
EvalReport hits_at_k(const Model& model, const KnowledgeGraph& context, const KnowledgeGraph& test,
                     const EvalConfig& config, unsigned threads = 1);

// Same, with precomputed states.
EvalReport hits_at_k(const Model& model, const Snapshot& states, const KnowledgeGraph& test,
                     const EvalConfig& config);

std::string report_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace reshuffle
