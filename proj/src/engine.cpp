#include "promptforge/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace pf::engine {

namespace {

IterationState make_state(std::int64_t n, NodePtr x_node, NodePtr Z_node, NodePtr tprompt_node,
                          std::vector<NodePtr> vprompt_nodes, const ModelConfig& cfg) {
  IterationState st;
  st.n = n;
  st.x_node = std::move(x_node);
  st.Z_node = std::move(Z_node);
  st.tprompt_node = std::move(tprompt_node);
  st.vprompt_nodes = std::move(vprompt_nodes);

  st.x = st.x_node->value;
  st.Z = st.Z_node->value;
  st.tprompt = st.tprompt_node->value;
  for (const auto& block : st.vprompt_nodes) st.vprompts.push_back(block->value);

  st.probs = filter::class_probabilities(st.x, st.Z, cfg.tau);
  st.filtered = filter::select_top_a(st.probs, st.Z, cfg.a);
  st.filtered_node = gather_rows(st.Z_node, st.filtered.indices);

  // Differentiable twin of st.probs.logits; same kernels, so the values are
  // bit-identical.
  NodePtr xcol = reshape(l2_normalize(st.x_node), Shape{cfg.d, 1});
  NodePtr cos = reshape(matmul(l2_normalize(st.Z_node), xcol), Shape{cfg.K});
  st.logits_node = scale(cos, 1.0 / cfg.tau);
  return st;
}

}  // namespace

std::int64_t IterationState::predicted() const {
  std::int64_t best = 0;
  for (std::int64_t k = 1; k < probs.probs.size(); ++k) {
    if (probs.probs.at(k) > probs.probs.at(best)) best = k;
  }
  return best;
}

Model build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.params = encoders::init_backbone(cfg, cfg.seed);
  m.gens = promptgen::init_generators(cfg, cfg.seed, m.params);
  return m;
}

IterationState initialize(const encoders::ImageInput& img, const encoders::ClassTokens& classes,
                          const Model& model, const encoders::EncodeHooks& hooks) {
  encoders::ImageEncodeResult enc = encoders::encode_image(img, {}, model.params, model.cfg, hooks);
  NodePtr Z = encoders::encode_text(classes, model.gens.base.P0, model.params, model.cfg, hooks);
  return make_state(0, enc.x, Z, model.gens.base.P0, model.gens.base.O0, model.cfg);
}

IterationState mie_step(const IterationState& prev, const encoders::ImageInput& img,
                        const encoders::ClassTokens& classes, const Model& model,
                        const encoders::EncodeHooks& hooks) {
  if (!prev.filtered_node || !prev.tprompt_node) {
    throw std::invalid_argument("mie_step: previous state is missing its graph handles");
  }
  std::vector<NodePtr> O = promptgen::gen_vision_prompts(prev.filtered_node, prev.vprompt_nodes,
                                                         model.gens.vision);
  encoders::ImageEncodeResult enc = encoders::encode_image(img, O, model.params, model.cfg, hooks);
  NodePtr P = model.cfg.static_text_prompt ? prev.tprompt_node
                                           : promptgen::gen_text_prompt(enc.x, prev.tprompt_node, model.gens.text);
  NodePtr Z = encoders::encode_text(classes, P, model.params, model.cfg, hooks);
  return make_state(prev.n + 1, enc.x, Z, P, std::move(O), model.cfg);
}

EpisodeTrace forward_episode(const encoders::ImageInput& img, const encoders::ClassTokens& classes,
                             const Model& model, std::int64_t N, const encoders::EncodeHooks& hooks) {
  if (N < 0) throw std::invalid_argument("forward_episode: N must be >= 0");
  EpisodeTrace trace;
  trace.states.push_back(initialize(img, classes, model, hooks));
  for (std::int64_t n = 1; n <= N; ++n) {
    trace.states.push_back(mie_step(trace.states.back(), img, classes, model, hooks));
  }
  return trace;
}

NodePtr episode_loss(const EpisodeTrace& trace, std::int64_t label, double lambda, std::int64_t N) {
  if (N < 1) throw std::invalid_argument("episode_loss: N must be >= 1; iteration 0 carries no loss");
  if (static_cast<std::int64_t>(trace.states.size()) != N + 1) {
    throw std::invalid_argument("episode_loss: trace has " + std::to_string(trace.states.size()) +
                                " states, expected " + std::to_string(N + 1));
  }
  if (lambda < 0.0) throw std::invalid_argument("episode_loss: lambda must be >= 0");

  // lambda^(N-n), built by repeated multiplication from the final iteration.
  std::vector<double> weight(static_cast<std::size_t>(N + 1), 1.0);
  for (std::int64_t n = N - 1; n >= 1; --n) {
    weight[static_cast<std::size_t>(n)] = weight[static_cast<std::size_t>(n + 1)] * lambda;
  }

  NodePtr loss;
  for (std::int64_t n = 1; n <= N; ++n) {
    const IterationState& st = trace.states[static_cast<std::size_t>(n)];
    NodePtr ce = cross_entropy_from_log_probs(log_softmax(st.logits_node, 0, 1.0), label);
    NodePtr term = scale(ce, weight[static_cast<std::size_t>(n)]);
    loss = loss ? add(loss, term) : term;
  }
  return loss;
}

TrainHistory train(Model& model, const data::SyntheticTask& task, const TrainConfig& train_cfg,
                   std::uint64_t seed) {
  train_cfg.validate();
  if (task.train.empty()) throw std::invalid_argument("train: task has no training samples");
  if (train_cfg.epochs > 0 && model.cfg.N < 1) {
    throw std::invalid_argument("train: N must be >= 1 to have a loss");
  }

  TrainHistory history;
  const std::int64_t n_train = static_cast<std::int64_t>(task.train.size());
  for (std::int64_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = data::iterate_batches(n_train, train_cfg.batch, seed, epoch);
    for (const auto& batch : batches) {
      NodePtr batch_loss;
      for (std::int64_t idx : batch) {
        const data::Sample& sample = task.train[static_cast<std::size_t>(idx)];
        EpisodeTrace trace = forward_episode(sample.image, task.class_tokens, model, model.cfg.N);
        trace.label = sample.label;
        NodePtr loss = episode_loss(trace, sample.label, model.cfg.lambda, model.cfg.N);
        loss_sum += loss->value.item();
        batch_loss = batch_loss ? add(batch_loss, loss) : loss;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(batch.size()));
      backward(batch_loss);
      sgd_step(model.params, train_cfg.lr);
    }
    history.epoch_mean_loss.push_back(loss_sum / static_cast<double>(n_train));
  }
  return history;
}

}  // namespace pf::engine
