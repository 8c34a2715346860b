#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reshuffle/engine.hpp"

namespace reshuffle {

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// JSON on disk. Holds everything `infer` and `eval` need (dims, node order,
// B_r per relation, seed, mode) plus logits and optimizer state for learned models.
struct Checkpoint {
  static constexpr int kVersion = 1;

  Model model;
  std::vector<std::vector<double>> logits;
  std::optional<OptimizerState> optimizer;
  std::uint32_t epoch = 0;
};

std::string to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace reshuffle
