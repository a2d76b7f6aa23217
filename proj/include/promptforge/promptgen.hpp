#pragma once

#include <cstdint>
#include <vector>

#include "promptforge/autodiff.hpp"
#include "promptforge/config.hpp"
#include "promptforge/param_store.hpp"

namespace pf::promptgen {

// Vision generators share W1/W2 across depth; only the bias pairs are
// layer-specific.
struct VisionGenerator {
  NodePtr W1;                // d x h
  NodePtr W2;                // h x d_v
  std::vector<NodePtr> b1;   // J of (h)
  std::vector<NodePtr> b2;   // J of (d_v)
};

struct TextGenerator {
  NodePtr W1;  // d x h
  NodePtr b1;  // h
  NodePtr W2;  // h x d_l
  NodePtr b2;  // d_l
};

struct BasePrompts {
  NodePtr P0;                // b x d_l, template-embedding init
  std::vector<NodePtr> O0;   // J of a x d_v, zero init
};

// block j = relu(filtered W1 + b1_j) W2 + b2_j + prev_j, applied per row.
std::vector<NodePtr> gen_vision_prompts(const NodePtr& filtered, const std::vector<NodePtr>& prev,
                                        const VisionGenerator& gen);

// v = relu(x W1 + b1) W2 + b2, broadcast-added to every prompt row of prev.
NodePtr gen_text_prompt(const NodePtr& x, const NodePtr& prev, const TextGenerator& gen);

// Adds all generator weights and base prompts to the store as trainable
// slots. The template prompt is initialized from the embedding rows of token
// ids 0..b-1.
struct Generators {
  VisionGenerator vision;
  TextGenerator text;
  BasePrompts base;
};

Generators init_generators(const ModelConfig& cfg, std::uint64_t seed, ParamStore& store);

// Rebinds the handle structs to the store's current nodes (after checkpoint
// load).
Generators bind_generators(const ModelConfig& cfg, const ParamStore& store);

}  // namespace pf::promptgen
