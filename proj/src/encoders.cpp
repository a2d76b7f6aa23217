#include "promptforge/encoders.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "promptforge/rng.hpp"

namespace pf::encoders {

namespace {

constexpr double kMaskedScore = -1e30;

struct LayerRefs {
  NodePtr ln1g, ln1b, Wq, Wk, Wv, Wo, ln2g, ln2b, W1, W2;
};

LayerRefs layer_refs(const ParamStore& params, const std::string& prefix) {
  return LayerRefs{
      params.get(prefix + "/ln1/gamma"), params.get(prefix + "/ln1/beta"),
      params.get(prefix + "/attn/Wq"),   params.get(prefix + "/attn/Wk"),
      params.get(prefix + "/attn/Wv"),   params.get(prefix + "/attn/Wo"),
      params.get(prefix + "/ln2/gamma"), params.get(prefix + "/ln2/beta"),
      params.get(prefix + "/mlp/W1"),    params.get(prefix + "/mlp/W2"),
  };
}

// Pre-LN block: S + MHA(LN(S)), then S + MLP(LN(S)). `mask` is an additive
// T x T score mask (kMaskedScore on disallowed keys) or null.
NodePtr transformer_layer(NodePtr S, const LayerRefs& p, std::int64_t heads, const NodePtr& mask,
                          bool identity_attention) {
  if (!identity_attention) {
    const std::int64_t width = S->value.cols();
    const std::int64_t head_dim = width / heads;
    NodePtr h = layer_norm(S, p.ln1g, p.ln1b);
    NodePtr Q = matmul(h, p.Wq);
    NodePtr K = matmul(h, p.Wk);
    NodePtr V = matmul(h, p.Wv);
    std::vector<NodePtr> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t i = 0; i < heads; ++i) {
      NodePtr Qi = slice(Q, 1, i * head_dim, (i + 1) * head_dim);
      NodePtr Ki = slice(K, 1, i * head_dim, (i + 1) * head_dim);
      NodePtr Vi = slice(V, 1, i * head_dim, (i + 1) * head_dim);
      NodePtr scores = scale(matmul(Qi, transpose(Ki)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
      if (mask) scores = add(scores, mask);
      NodePtr attn = softmax(scores, 1, 1.0);
      head_outs.push_back(matmul(attn, Vi));
    }
    S = add(S, matmul(concat(head_outs, 1), p.Wo));
  }
  NodePtr h2 = layer_norm(S, p.ln2g, p.ln2b);
  return add(S, matmul(gelu(matmul(h2, p.W1)), p.W2));
}

void add_layer_params(ParamStore& store, const std::string& prefix, std::int64_t width,
                      std::int64_t mlp_ratio, std::uint64_t seed) {
  auto draw = [&](const std::string& name, Shape shape, double stddev) {
    rng::Stream stream(rng::derive_seed(seed, name));
    store.add(name, rng::normal_tensor(stream, std::move(shape), stddev), false);
  };
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(width));
  store.add(prefix + "/ln1/gamma", Tensor(Shape{width}, 1.0), false);
  store.add(prefix + "/ln1/beta", Tensor(Shape{width}, 0.0), false);
  draw(prefix + "/attn/Wq", {width, width}, w_scale);
  draw(prefix + "/attn/Wk", {width, width}, w_scale);
  draw(prefix + "/attn/Wv", {width, width}, w_scale);
  draw(prefix + "/attn/Wo", {width, width}, w_scale);
  store.add(prefix + "/ln2/gamma", Tensor(Shape{width}, 1.0), false);
  store.add(prefix + "/ln2/beta", Tensor(Shape{width}, 0.0), false);
  draw(prefix + "/mlp/W1", {width, mlp_ratio * width}, w_scale);
  draw(prefix + "/mlp/W2", {mlp_ratio * width, width},
       1.0 / std::sqrt(static_cast<double>(mlp_ratio * width)));
}

}  // namespace

std::int64_t pad_id(const ModelConfig& cfg) { return cfg.vocab; }

ImageEncodeResult encode_image(const ImageInput& img, const std::vector<NodePtr>& prompts,
                               const ParamStore& params, const ModelConfig& cfg,
                               const EncodeHooks& hooks) {
  return encode_image(constant(img.patches), prompts, params, cfg, hooks);
}

ImageEncodeResult encode_image(const NodePtr& patches, const std::vector<NodePtr>& prompts,
                               const ParamStore& params, const ModelConfig& cfg,
                               const EncodeHooks& hooks) {
  if (!patches || patches->value.rank() != 2 || patches->value.rows() != cfg.M_a ||
      patches->value.cols() != cfg.d_v) {
    throw std::invalid_argument("encode_image: patches must be (" + std::to_string(cfg.M_a) + "," +
                                std::to_string(cfg.d_v) + "), got " +
                                (patches ? shape_str(patches->value.shape) : std::string("null")));
  }
  const bool with_prompts = !prompts.empty();
  if (with_prompts) {
    if (static_cast<std::int64_t>(prompts.size()) != cfg.J) {
      throw std::invalid_argument("encode_image: expected " + std::to_string(cfg.J) + " prompt blocks, got " +
                                  std::to_string(prompts.size()));
    }
    for (const auto& block : prompts) {
      if (block->value.rank() != 2 || block->value.rows() != cfg.a || block->value.cols() != cfg.d_v) {
        throw std::invalid_argument("encode_image: prompt block must be (" + std::to_string(cfg.a) + "," +
                                    std::to_string(cfg.d_v) + "), got " + shape_str(block->value.shape));
      }
    }
  }

  NodePtr embedded = matmul(patches, params.get("backbone/vision/patch_embed"));
  NodePtr cls = params.get("backbone/vision/cls");

  NodePtr S = with_prompts ? concat({cls, prompts[0], embedded}, 0) : concat({cls, embedded}, 0);
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    if (with_prompts && l > 1 && l <= cfg.J) {
      // Fresh block replaces the prompt slot; the previous layer's prompt
      // outputs are dropped.
      S = concat({slice(S, 0, 0, 1), prompts[static_cast<std::size_t>(l - 1)],
                  slice(S, 0, 1 + cfg.a, 1 + cfg.a + cfg.M_a)},
                 0);
    }
    S = transformer_layer(S, layer_refs(params, "backbone/vision/layer" + std::to_string(l)), cfg.heads,
                          nullptr, hooks.identity_attention);
  }

  ImageEncodeResult out;
  out.x = reshape(matmul(slice(S, 0, 0, 1), params.get("backbone/vision/proj")), Shape{cfg.d});
  if (with_prompts) out.tail_prompt_outputs = slice(S, 0, 1, 1 + cfg.a);
  return out;
}

NodePtr encode_text(const ClassTokens& classes, const NodePtr& text_prompt, const ParamStore& params,
                    const ModelConfig& cfg, const EncodeHooks& hooks) {
  if (!text_prompt || text_prompt->value.rank() != 2 || text_prompt->value.rows() != cfg.b ||
      text_prompt->value.cols() != cfg.d_l) {
    throw std::invalid_argument("encode_text: prompt must be (" + std::to_string(cfg.b) + "," +
                                std::to_string(cfg.d_l) + "), got " +
                                (text_prompt ? shape_str(text_prompt->value.shape) : std::string("null")));
  }
  if (classes.classes.empty()) throw std::invalid_argument("encode_text: no classes");
  const std::int64_t capacity = cfg.M_b - cfg.b;
  const std::int64_t pad = pad_id(cfg);

  const NodePtr embed = params.get("backbone/text/embed");
  const NodePtr proj = params.get("backbone/text/proj");

  std::vector<NodePtr> z_rows;
  z_rows.reserve(classes.classes.size());
  for (std::size_t k = 0; k < classes.classes.size(); ++k) {
    const ClassName& name = classes.classes[k];
    if (static_cast<std::int64_t>(name.ids.size()) != capacity) {
      throw std::invalid_argument("encode_text: class " + std::to_string(k) + " has " +
                                  std::to_string(name.ids.size()) + " ids, capacity is " +
                                  std::to_string(capacity));
    }
    if (name.true_len < 1 || name.true_len > capacity) {
      throw std::invalid_argument("encode_text: class " + std::to_string(k) + " has no real tokens");
    }
    for (std::int64_t i = 0; i < capacity; ++i) {
      const std::int64_t id = name.ids[static_cast<std::size_t>(i)];
      if (i < name.true_len ? (id < 0 || id >= cfg.vocab) : (id != pad)) {
        throw std::invalid_argument("encode_text: class " + std::to_string(k) + " has bad token id " +
                                    std::to_string(id) + " at position " + std::to_string(i));
      }
    }

    NodePtr S = concat({text_prompt, embedding_lookup(embed, name.ids)}, 0);

    // Keys at pad positions are removed from every query's attention.
    NodePtr mask;
    const std::int64_t real = cfg.b + name.true_len;
    if (real < cfg.M_b) {
      Tensor m(Shape{cfg.M_b, cfg.M_b}, 0.0);
      for (std::int64_t q = 0; q < cfg.M_b; ++q) {
        for (std::int64_t key = real; key < cfg.M_b; ++key) m.at(q, key) = kMaskedScore;
      }
      mask = constant(std::move(m));
    }

    for (std::int64_t l = 1; l <= cfg.L; ++l) {
      S = transformer_layer(S, layer_refs(params, "backbone/text/layer" + std::to_string(l)), cfg.heads,
                            mask, hooks.identity_attention);
    }
    z_rows.push_back(matmul(slice(S, 0, real - 1, real), proj));
  }
  return concat(z_rows, 0);
}

ParamStore init_backbone(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store(seed);
  auto draw = [&](const std::string& name, Shape shape, double stddev) {
    rng::Stream stream(rng::derive_seed(seed, name));
    store.add(name, rng::normal_tensor(stream, std::move(shape), stddev), false);
  };

  draw("backbone/vision/patch_embed", {cfg.d_v, cfg.d_v}, 1.0 / std::sqrt(static_cast<double>(cfg.d_v)));
  draw("backbone/vision/cls", {1, cfg.d_v}, 1.0 / std::sqrt(static_cast<double>(cfg.d_v)));
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    add_layer_params(store, "backbone/vision/layer" + std::to_string(l), cfg.d_v, cfg.mlp_ratio, seed);
  }
  draw("backbone/vision/proj", {cfg.d_v, cfg.d}, 1.0 / std::sqrt(static_cast<double>(cfg.d_v)));

  store.add("backbone/text/embed", text_embedding_table(cfg, seed), false);
  for (std::int64_t l = 1; l <= cfg.L; ++l) {
    add_layer_params(store, "backbone/text/layer" + std::to_string(l), cfg.d_l, cfg.mlp_ratio, seed);
  }
  draw("backbone/text/proj", {cfg.d_l, cfg.d}, 1.0 / std::sqrt(static_cast<double>(cfg.d_l)));
  return store;
}

Tensor text_embedding_table(const ModelConfig& cfg, std::uint64_t seed) {
  rng::Stream stream(rng::derive_seed(seed, "backbone/text/embed"));
  return rng::normal_tensor(stream, {cfg.vocab + 1, cfg.d_l}, 1.0 / std::sqrt(static_cast<double>(cfg.d_l)));
}

}  // namespace pf::encoders
