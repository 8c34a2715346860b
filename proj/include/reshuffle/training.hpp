#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "reshuffle/checkpoint.hpp"
#include "reshuffle/engine.hpp"

namespace reshuffle {

struct TrainConfig {
  std::uint32_t ell = 20;
  std::uint32_t k = 40;
  std::uint32_t layers = 3;
  double margin = 1.0;
  double lr = 0.005;
  std::uint32_t epochs = 1000;
  std::uint32_t negatives = 100;
  std::uint32_t batch_size = 1024;
  std::uint64_t seed = 0;
  std::uint32_t patience = 100;
  double min_improvement = 0.01;  // relative gain in validation Hits@10
  std::uint32_t valid_negatives = 50;
  double init_scale = 1.0;        // std-dev of the initial logits
  unsigned threads = 1;

  void validate() const;
};

// Row i of B_r is the first ell entries of softmax(logits row i), which has ell+1
// entries; the extra slot lets a row shrink to zero.
struct LearnedParams {
  std::uint32_t ell = 0;
  RelationTable relations;
  std::vector<std::vector<double>> logits;  // per relation, ell x (ell+1) row-major

  std::size_t row_width() const noexcept { return std::size_t{ell} + 1; }
  RelationMatrix matrix(RelationId r) const;
};

LearnedParams init_params(const RelationTable& relations, std::uint32_t ell, double scale,
                          std::uint64_t seed);
Model learned_model(const LearnedParams& params, std::uint32_t k, std::uint32_t layers,
                    std::uint64_t seed);

// Binary matrices: per row, the argmax slot if it is one of the first ell and its
// probability reaches threshold, else a zero row. Ties go to the zero slot, then
// the lowest index.
std::vector<RelationMatrix> harden(const LearnedParams& params, double threshold);

enum class CorruptedSide { head, tail };

struct NegativeSample {
  Triple positive;
  Triple corrupted;
  CorruptedSide side = CorruptedSide::tail;
};

// Plain PCA corruption: side uniform, replacement uniform over the other
// entities, no filtering against known facts.
std::vector<NegativeSample> sample_negatives(std::size_t num_entities, const Triple& t,
                                             std::uint32_t n, std::mt19937_64& rng);

// sum_i max(0, s_neg_i - s_pos + margin)
double margin_loss(double s_pos, std::span<const double> s_neg, double margin);

struct TrainingExample {
  Triple positive;                // model relation ids
  std::vector<Triple> negatives;
};

struct LossGrad {
  double loss = 0.0;  // mean over the batch
  std::vector<std::vector<double>> grad;  // same shape as logits
  double kink_gap = 0.0;  // smallest distance of any max/ReLU/hinge decision to a tie
};

// Runs `layers` rounds of the GNN over g from `layer0`, then scores the batch.
// g's relation ids must equal the parameter relation ids.
LossGrad loss_and_gradients(const LearnedParams& params, const KnowledgeGraph& g,
                            const Snapshot& layer0, std::uint32_t k, std::uint32_t layers,
                            double margin, const std::vector<TrainingExample>& batch,
                            bool want_grad = true);

using AdamState = OptimizerState;

void adam_step(LearnedParams& params, AdamState& state, const std::vector<std::vector<double>>& grad,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EpochLog {
  std::uint32_t epoch = 0;
  double loss = 0.0;
  double valid_hits = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  LearnedParams params;        // best-validation parameters
  AdamState adam;              // optimizer state at the end of training
  std::uint32_t best_epoch = 0;
  double best_valid = 0.0;
  std::vector<EpochLog> log;
};

// g_train and g_valid share entity and relation vocabularies; g_train provides
// the message graph for both. Eq triples are messages only, never positives.
TrainResult train(const KnowledgeGraph& g_train, const KnowledgeGraph& g_valid,
                  const TrainConfig& config, std::ostream* csv_log = nullptr);

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config);

struct GradCheckReport {
  std::uint32_t points = 0;
  std::uint32_t rejected = 0;  // random points discarded for sitting near a kink
  double max_relative_error = 0.0;
};

// Analytic gradients vs central differences (step 1e-6) on random small problems.
GradCheckReport gradcheck(std::uint32_t points, std::uint64_t seed);

}  // namespace reshuffle
