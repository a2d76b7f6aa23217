#pragma once

#include <cstdint>
#include <vector>

#include "promptforge/autodiff.hpp"
#include "promptforge/config.hpp"
#include "promptforge/param_store.hpp"

namespace pf::encoders {

// Pre-extracted patch vectors, one row per patch. Patch dim equals d_v.
struct ImageInput {
  Tensor patches;  // M_a x d_v
};

struct ClassName {
  std::vector<std::int64_t> ids;  // length M_b - b, right-padded with pad id
  std::int64_t true_len = 0;      // count of real tokens
};

struct ClassTokens {
  std::vector<ClassName> classes;  // ordered by class index
};

// Test hook: with identity attention the token-mixing sublayer is skipped,
// so prompt tokens cannot influence any other position.
struct EncodeHooks {
  bool identity_attention = false;
};

struct ImageEncodeResult {
  NodePtr x;                    // shared-space feature, shape (d)
  NodePtr tail_prompt_outputs;  // prompt-position outputs of the last layer, a x d_v (null without prompts)
};

// Reserved pad id: one row past the real vocabulary.
std::int64_t pad_id(const ModelConfig& cfg);

// Vision tower. Without prompts this is the plain class-token recurrence;
// with prompts, blocks replace the prompt slot at layers 1..J and the layer-J
// prompt outputs then propagate as ordinary tokens through layers J+1..L.
ImageEncodeResult encode_image(const ImageInput& img, const std::vector<NodePtr>& prompts,
                               const ParamStore& params, const ModelConfig& cfg,
                               const EncodeHooks& hooks = {});

// Same tower on an M_a x d_v patch node, for callers that need gradients
// with respect to the patches themselves.
ImageEncodeResult encode_image(const NodePtr& patches, const std::vector<NodePtr>& prompts,
                               const ParamStore& params, const ModelConfig& cfg,
                               const EncodeHooks& hooks = {});

// Text tower: per class, concat(prompt, token embeddings) through L layers
// with pad positions masked out of attention; readout at the last real token,
// projected to the shared space. Returns a K x d node.
NodePtr encode_text(const ClassTokens& classes, const NodePtr& text_prompt, const ParamStore& params,
                    const ModelConfig& cfg, const EncodeHooks& hooks = {});

// Random frozen backbone, deterministic in seed: per-tensor streams derived
// from (seed, slot name), scale 1/sqrt(fan-in).
ParamStore init_backbone(const ModelConfig& cfg, std::uint64_t seed);

// The (vocab+1) x d_l token embedding table exactly as init_backbone would
// draw it, without building the rest of the backbone.
Tensor text_embedding_table(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace pf::encoders
