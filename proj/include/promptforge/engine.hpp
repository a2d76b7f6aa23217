#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptforge/autodiff.hpp"
#include "promptforge/config.hpp"
#include "promptforge/data.hpp"
#include "promptforge/encoders.hpp"
#include "promptforge/filter.hpp"
#include "promptforge/param_store.hpp"
#include "promptforge/promptgen.hpp"

namespace pf::engine {

// Frozen backbone plus trainable generators and base prompts, all living in
// one ParamStore.
struct Model {
  ModelConfig cfg;
  ParamStore params;
  promptgen::Generators gens;
};

Model build_model(const ModelConfig& cfg);

// Snapshot of one iteration. Value fields describe what happened; the node
// handles carry the differentiable path into the next step and the loss.
struct IterationState {
  std::int64_t n = 0;
  Tensor x;  // d
  Tensor Z;  // K x d
  filter::ClassProbabilities probs;
  filter::FilteredFeatures filtered;
  std::vector<Tensor> vprompts;  // the O_j^n in effect (base prompts at n=0)
  Tensor tprompt;                // the P_0^n in effect

  NodePtr x_node, Z_node, logits_node, filtered_node, tprompt_node;
  std::vector<NodePtr> vprompt_nodes;

  std::int64_t predicted() const;  // argmax of probs, ties to lower index
};

struct EpisodeTrace {
  std::vector<IterationState> states;  // n = 0..N
  std::optional<std::int64_t> label;
};

// n = 0: plain zero-shot scoring with the template prompt; no generator runs.
IterationState initialize(const encoders::ImageInput& img, const encoders::ClassTokens& classes,
                          const Model& model, const encoders::EncodeHooks& hooks = {});

// One evolution step, in fixed order: vision prompts from the previous
// filtered features, image re-encode, text prompt from the new image feature,
// text re-encode, probabilities, filtering.
IterationState mie_step(const IterationState& prev, const encoders::ImageInput& img,
                        const encoders::ClassTokens& classes, const Model& model,
                        const encoders::EncodeHooks& hooks = {});

EpisodeTrace forward_episode(const encoders::ImageInput& img, const encoders::ClassTokens& classes,
                             const Model& model, std::int64_t N, const encoders::EncodeHooks& hooks = {});

// L = sum_{n=1..N} lambda^(N-n) * CE(p^n, y), from log-softmax. Iteration 0
// never contributes, so N must be >= 1.
NodePtr episode_loss(const EpisodeTrace& trace, std::int64_t label, double lambda, std::int64_t N);

struct TrainHistory {
  std::vector<double> epoch_mean_loss;
};

// Minibatch SGD over the episode loss on the task's few-shot train split.
// Only trainable slots move; shuffling is deterministic in (seed, epoch).
TrainHistory train(Model& model, const data::SyntheticTask& task, const TrainConfig& train_cfg,
                   std::uint64_t seed);

// Binary checkpoint: magic "PMPT", version, config text block (with epoch and
// rng seed), then every ParamStore slot. Round-trips are bit-exact.
struct CheckpointMeta {
  RunConfig cfg;
  std::int64_t epoch = 0;
  std::uint64_t rng_seed = 0;
};

void save_checkpoint(const Model& model, const RunConfig& cfg, std::int64_t epoch, std::uint64_t rng_seed,
                     const std::string& path);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);
// As above, but rejects a checkpoint whose architecture differs from `expect`.
Model load_checkpoint_expecting(const std::string& path, const ModelConfig& expect,
                                CheckpointMeta* meta = nullptr);

}  // namespace pf::engine
