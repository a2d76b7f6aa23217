#pragma once

#include <cstdint>
#include <vector>

#include "promptforge/tensor.hpp"

namespace pf::filter {

struct ClassProbabilities {
  Tensor probs;   // K, sums to 1
  Tensor logits;  // K, cos(x, z_k) / tau
};

struct FilteredFeatures {
  Tensor rows;                        // a x d, gathered in descending-probability order
  std::vector<std::int64_t> indices;  // matching class indices
};

// Temperature-softmax class probabilities from cosine similarity. Value-level
// and shared with the graph path so both produce bit-identical numbers.
ClassProbabilities class_probabilities(const Tensor& x, const Tensor& Z, double tau);

// Indices of the a largest probabilities, descending, ties to the lower class
// index. Selection is an index choice only; gradients flow through gathered
// values elsewhere.
std::vector<std::int64_t> top_a_indices(const Tensor& probs, std::int64_t a);

FilteredFeatures select_top_a(const ClassProbabilities& p, const Tensor& Z, std::int64_t a);

}  // namespace pf::filter
