#pragma once

#include <cstdint>
#include <vector>

#include "promptforge/config.hpp"
#include "promptforge/encoders.hpp"

namespace pf::data {

struct Sample {
  encoders::ImageInput image;
  std::int64_t label = 0;
};

// Few-shot classification task with a base/novel split. Class patch
// prototypes are a fixed linear image of the class token-embedding
// prototypes, so the text-image correspondence is recoverable by a learner
// even though the backbone is random.
struct SyntheticTask {
  std::int64_t K = 0;
  std::vector<std::int64_t> base_classes;
  std::vector<std::int64_t> novel_classes;
  encoders::ClassTokens class_tokens;    // all K classes, class order
  std::vector<Tensor> patch_prototypes;  // K of M_a x d_v
  std::vector<Sample> train;             // base classes only, shots per class
  std::vector<Sample> test_base;
  std::vector<Sample> test_novel;
};

SyntheticTask generate_task(std::uint64_t seed, std::int64_t K, double base_fraction, std::int64_t shots,
                            double noise, const ModelConfig& cfg, std::int64_t test_per_class);

// Convenience: task from a run config (seed = model seed).
SyntheticTask generate_task(const RunConfig& cfg);

// Index batches for one epoch: deterministic shuffle from (seed, epoch), last
// partial batch kept.
std::vector<std::vector<std::int64_t>> iterate_batches(std::int64_t split_size, std::int64_t batch_size,
                                                       std::uint64_t seed, std::int64_t epoch);

// Single-file task export/import (same tensor record layout as checkpoints).
void save_task(const SyntheticTask& task, const std::string& path);
SyntheticTask load_task(const std::string& path);

}  // namespace pf::data
