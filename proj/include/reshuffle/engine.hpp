#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reshuffle/kg.hpp"
#include "reshuffle/rulegraph.hpp"

namespace reshuffle {

struct ModelDims {
  std::uint32_t ell = 1;     // blocks (rule-graph nodes when compiled)
  std::uint32_t k = 1;       // block width
  std::uint32_t layers = 1;  // GNN rounds used by training and bounded checks

  std::size_t d() const noexcept { return std::size_t{ell} * k; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

// B_r, row-major ell x ell. b(i, j) = 1 in compiled mode iff an r-edge n_j -> n_i.
struct RelationMatrix {
  RelationId rel = 0;
  std::uint32_t ell = 0;
  std::vector<double> b;

  RelationMatrix() = default;
  RelationMatrix(RelationId r, std::uint32_t n) : rel(r), ell(n), b(std::size_t{n} * n, 0.0) {}

  double& at(std::uint32_t i, std::uint32_t j) { return b[std::size_t{i} * ell + j]; }
  double at(std::uint32_t i, std::uint32_t j) const { return b[std::size_t{i} * ell + j]; }
  bool is_binary() const;  // entries in {0,1}, at most one 1 per row
};

enum class ModelMode { binary, learned };

struct Model {
  ModelDims dims;
  ModelMode mode = ModelMode::binary;
  RelationTable relations;               // mats[r] belongs to relations entry r
  std::vector<RelationMatrix> mats;
  std::vector<std::string> node_names;   // block order = rule-graph node-id order
  std::uint64_t seed = 0;

  const RelationMatrix& matrix(RelationId r) const { return mats.at(r); }
  double default_tolerance() const noexcept { return mode == ModelMode::binary ? 0.0 : 1e-6; }
};

Model compile_matrices(const RuleGraph& h, std::uint32_t k);

// Entity states for every entity of a graph; state e is the flattened ell x k
// matrix Z_e, z_{i,t} at offset i*k + t.
struct Snapshot {
  std::uint32_t layer = 0;
  std::size_t d = 0;
  std::vector<double> values;  // num_entities * d
  bool converged = false;

  std::size_t num_entities() const noexcept { return d ? values.size() / d : 0; }
  std::span<const double> state(EntityId e) const {
    return {values.data() + std::size_t{e} * d, d};
  }
  std::span<double> state(EntityId e) { return {values.data() + std::size_t{e} * d, d}; }
  bool operator==(const Snapshot&) const = default;
};

// Stateless hashing generator: the same (seed, a, b) always gives the same word.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

// Layer 0: every coordinate 0 or 1 with probability 1/2, keyed by (seed, entity, coordinate).
Snapshot init_entities(std::size_t num_entities, const ModelDims& dims, std::uint64_t seed);

// Maps g's relation ids to model relation ids by name. Throws on a relation the
// model does not know.
std::vector<RelationId> bind_relations(const Model& model, const KnowledgeGraph& g);

// Incoming messages per target entity, sorted by (model relation, source).
struct MessagePlan {
  struct Message {
    RelationId rel;
    EntityId src;
  };
  std::vector<std::vector<Message>> incoming;
};
MessagePlan plan_messages(const Model& model, const KnowledgeGraph& g);

// One round: Z_f <- max(Z_f, max over (e,r,f) of B_r Z_e), synchronous.
Snapshot forward_round(const Model& model, const MessagePlan& plan, const Snapshot& s,
                       unsigned threads = 1);
Snapshot forward(const Model& model, const KnowledgeGraph& g, const Snapshot& s,
                 std::uint32_t rounds, unsigned threads = 1);

// Iterates until a round changes nothing. Throws RuntimeFailure after d*|E| + 1 rounds.
Snapshot forward_to_fixpoint(const Model& model, const KnowledgeGraph& g, const Snapshot& s,
                             unsigned threads = 1);

// B_r Z (flattened), written to out.
void apply_relation(const RelationMatrix& m, std::uint32_t k, std::span<const double> z,
                    std::span<double> out);

bool capture(const Model& model, std::span<const double> a, std::span<const double> b,
             RelationId r, double tol);
// -||ReLU(B_r Z_a - Z_b)||_2
double score(const Model& model, std::span<const double> a, std::span<const double> b,
             RelationId r);

// Index-set view of a compiled relation: coordinate i of the tail is bounded
// below by coordinate sigma(i) of the head, for i in I_r (0-based).
struct OrderingConstraint {
  RelationId rel = 0;
  std::vector<std::size_t> index_set;
  std::vector<std::size_t> reindex;  // aligned with index_set
};
OrderingConstraint ordering_constraint(const RuleGraph& h, RelationId r, std::uint32_t k);

// mu map of a path type read off the rule graph: block i receives block j when a
// path of that type runs n_j -> n_i, else zero. Empty path is the identity.
std::vector<double> mu_path(const RuleGraph& h, const PathType& path, std::uint32_t k,
                            std::span<const double> x);

// A_r = B_r (x) I_k as a dense row-major d x d matrix.
std::vector<double> kronecker_lift(const RelationMatrix& m, std::uint32_t k);

// Runs the flattened-vector model with `lifted` (one d x d matrix per relation)
// and the matrix model side by side on random graphs and random non-negative
// states; true iff every trial agrees bitwise.
bool kronecker_equivalence_check(const Model& model, const std::vector<std::vector<double>>& lifted,
                                 std::uint32_t trials, std::uint64_t seed);
bool kronecker_equivalence_check(const Model& model, std::uint32_t trials, std::uint64_t seed);

// Bit-packed binary engine. Only for compiled models with {0,1} states; used by
// the statistical suites and cross-checked against the dense engine.
class BitEngine {
 public:
  BitEngine(const Model& model, const KnowledgeGraph& g);

  void load(const Snapshot& s);
  Snapshot snapshot() const;
  // Returns true if anything changed.
  bool round();
  std::uint32_t run_to_fixpoint();
  bool capture(EntityId a, RelationId model_rel, EntityId b) const;
  std::uint32_t layer() const noexcept { return layer_; }

 private:
  std::uint32_t ell_, k_, words_;
  std::size_t stride_;
  std::vector<std::vector<std::int32_t>> src_;  // per model relation, per row: source block or -1
  MessagePlan plan_;
  std::vector<std::uint64_t> bits_, next_;
  std::uint32_t layer_ = 0;
  std::size_t num_entities_;

  const std::uint64_t* block(const std::vector<std::uint64_t>& v, EntityId e,
                             std::uint32_t i) const {
    return v.data() + e * stride_ + std::size_t{i} * words_;
  }
};

// Monte Carlo checks of completeness and (bounded) soundness.
struct PropositionConfig {
  std::vector<std::uint32_t> k_values{1, 4, 16, 64};
  std::uint32_t seeds = 100;
  std::uint64_t base_seed = 0;
  std::optional<std::uint32_t> bounded_m;
};

struct PropositionReport {
  std::size_t entailed = 0;       // per seed and k: triples with P ∪ G ⊨ t (or ⊨_m)
  std::size_t non_entailed = 0;
  std::size_t missed = 0;         // entailed triples not captured at convergence, summed
  double completeness = 1.0;
  std::vector<std::uint32_t> k_values;
  std::vector<double> false_positive_rate;  // per k, over non-entailed triples and seeds
  // Bounded mode only: triples with ⊨ but not ⊨_m, and how often any layer
  // i <= m+1 captured them.
  std::size_t beyond_bound = 0;
  std::vector<double> beyond_bound_rate;
};

// rb must share relation ids with g; h must be built for rb. g should already
// contain eq self-loops if the rule graph relies on eq edges.
PropositionReport verify_propositions(const RuleBase& rb, const KnowledgeGraph& g,
                                      const RuleGraph& h, const PropositionConfig& config);

}  // namespace reshuffle
