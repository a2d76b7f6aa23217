#include "promptforge/promptgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "promptforge/rng.hpp"

namespace pf::promptgen {

namespace {

// MLP core shared by both generators: rows (n x d) -> relu(rows W1 + b1) W2 + b2.
NodePtr mlp_rows(const NodePtr& rows, const NodePtr& W1, const NodePtr& b1, const NodePtr& W2,
                 const NodePtr& b2) {
  const std::int64_t n = rows->value.rows();
  NodePtr h = relu(add(matmul(rows, W1), repeat_rows(b1, n)));
  return add(matmul(h, W2), repeat_rows(b2, n));
}

}  // namespace

std::vector<NodePtr> gen_vision_prompts(const NodePtr& filtered, const std::vector<NodePtr>& prev,
                                        const VisionGenerator& gen) {
  if (!filtered || filtered->value.rank() != 2) {
    throw std::invalid_argument("gen_vision_prompts: filtered features must be 2-D");
  }
  if (prev.size() != gen.b1.size()) {
    throw std::invalid_argument("gen_vision_prompts: prompt stack has " + std::to_string(prev.size()) +
                                " blocks, generator has " + std::to_string(gen.b1.size()));
  }
  const std::int64_t a = prev.empty() ? filtered->value.rows() : prev[0]->value.rows();
  if (filtered->value.rows() != a) {
    throw std::invalid_argument("gen_vision_prompts: expected " + std::to_string(a) + " filtered rows, got " +
                                std::to_string(filtered->value.rows()));
  }
  std::vector<NodePtr> out;
  out.reserve(prev.size());
  for (std::size_t j = 0; j < prev.size(); ++j) {
    out.push_back(add(mlp_rows(filtered, gen.W1, gen.b1[j], gen.W2, gen.b2[j]), prev[j]));
  }
  return out;
}

NodePtr gen_text_prompt(const NodePtr& x, const NodePtr& prev, const TextGenerator& gen) {
  if (!x || x->value.rank() != 1) {
    throw std::invalid_argument("gen_text_prompt: image feature must be a 1-D vector");
  }
  if (!prev || prev->value.rank() != 2) {
    throw std::invalid_argument("gen_text_prompt: previous prompt must be 2-D");
  }
  NodePtr row = reshape(x, Shape{1, x->value.size()});
  NodePtr v = reshape(mlp_rows(row, gen.W1, gen.b1, gen.W2, gen.b2), Shape{gen.b2->value.size()});
  return add(prev, repeat_rows(v, prev->value.rows()));
}

Generators init_generators(const ModelConfig& cfg, std::uint64_t seed, ParamStore& store) {
  cfg.validate();
  const std::int64_t h = cfg.gen_hidden();
  auto draw = [&](const std::string& name, Shape shape, double stddev) {
    rng::Stream stream(rng::derive_seed(seed, name));
    return store.add(name, rng::normal_tensor(stream, std::move(shape), stddev), true);
  };

  Generators g;
  g.vision.W1 = draw("gen/vision/W1", {cfg.d, h}, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  g.vision.W2 = draw("gen/vision/W2", {h, cfg.d_v}, 1.0 / std::sqrt(static_cast<double>(h)));
  for (std::int64_t j = 0; j < cfg.J; ++j) {
    g.vision.b1.push_back(store.add("gen/vision/b1/" + std::to_string(j), Tensor(Shape{h}, 0.0), true));
    g.vision.b2.push_back(store.add("gen/vision/b2/" + std::to_string(j), Tensor(Shape{cfg.d_v}, 0.0), true));
  }
  g.text.W1 = draw("gen/text/W1", {cfg.d, h}, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  g.text.b1 = store.add("gen/text/b1", Tensor(Shape{h}, 0.0), true);
  g.text.W2 = draw("gen/text/W2", {h, cfg.d_l}, 1.0 / std::sqrt(static_cast<double>(h)));
  g.text.b2 = store.add("gen/text/b2", Tensor(Shape{cfg.d_l}, 0.0), true);

  // Template prompt: embedding rows of token ids 0..b-1.
  const Tensor& embed = store.get("backbone/text/embed")->value;
  Tensor p0(Shape{cfg.b, cfg.d_l});
  for (std::int64_t r = 0; r < cfg.b; ++r) {
    for (std::int64_t c = 0; c < cfg.d_l; ++c) p0.at(r, c) = embed.at(r, c);
  }
  g.base.P0 = store.add("prompt/text_base", std::move(p0), true);
  for (std::int64_t j = 0; j < cfg.J; ++j) {
    g.base.O0.push_back(
        store.add("prompt/vision_base/" + std::to_string(j), Tensor(Shape{cfg.a, cfg.d_v}, 0.0), true));
  }
  return g;
}

Generators bind_generators(const ModelConfig& cfg, const ParamStore& store) {
  Generators g;
  g.vision.W1 = store.get("gen/vision/W1");
  g.vision.W2 = store.get("gen/vision/W2");
  for (std::int64_t j = 0; j < cfg.J; ++j) {
    g.vision.b1.push_back(store.get("gen/vision/b1/" + std::to_string(j)));
    g.vision.b2.push_back(store.get("gen/vision/b2/" + std::to_string(j)));
  }
  g.text.W1 = store.get("gen/text/W1");
  g.text.b1 = store.get("gen/text/b1");
  g.text.W2 = store.get("gen/text/W2");
  g.text.b2 = store.get("gen/text/b2");
  g.base.P0 = store.get("prompt/text_base");
  for (std::int64_t j = 0; j < cfg.J; ++j) {
    g.base.O0.push_back(store.get("prompt/vision_base/" + std::to_string(j)));
  }
  return g;
}

}  // namespace pf::promptgen
