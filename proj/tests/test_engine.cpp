#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <vector>

#include "promptforge/engine.hpp"
#include "promptforge/metrics.hpp"
#include "promptforge/rng.hpp"

using namespace pf;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.d_v = 8;
  cfg.d_l = 8;
  cfg.L = 2;
  cfg.heads = 2;
  cfg.M_a = 4;
  cfg.M_b = 6;
  cfg.vocab = 64;
  cfg.K = 4;
  cfg.a = 2;
  cfg.b = 2;
  cfg.J = 2;
  cfg.N = 2;
  cfg.tau = 0.1;
  cfg.seed = 0;
  return cfg;
}

data::SyntheticTask toy_task(const ModelConfig& cfg, std::int64_t shots = 2, std::int64_t per_class = 2) {
  return data::generate_task(cfg.seed, cfg.K, 0.5, shots, 0.1, cfg, per_class);
}

// CE value that a rigged two-class logit vector produces: -log softmax([0,c])[0] = L.
NodePtr rigged_logits(double L) {
  const double c = std::log(std::exp(L) - 1.0);
  return leaf(Tensor({2}, {0.0, c}));
}

engine::EpisodeTrace rigged_trace(double L1, double L2) {
  engine::EpisodeTrace trace;
  trace.states.resize(3);
  for (int n = 0; n < 3; ++n) trace.states[static_cast<std::size_t>(n)].n = n;
  trace.states[1].logits_node = rigged_logits(L1);
  trace.states[2].logits_node = rigged_logits(L2);
  return trace;
}

std::map<std::string, Tensor> snapshot(const ParamStore& params, const std::string& prefix) {
  std::map<std::string, Tensor> snap;
  for (const auto& [name, slot] : params.slots()) {
    if (name.rfind(prefix, 0) == 0) snap[name] = slot.node->value;
  }
  return snap;
}

}  // namespace

TEST_CASE("initialize matches standalone zero-shot scoring byte for byte") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.test_base.front().image;

  engine::IterationState st = engine::initialize(img, task.class_tokens, model);
  CHECK(st.n == 0);

  auto enc = encoders::encode_image(img, {}, model.params, cfg);
  auto Z = encoders::encode_text(task.class_tokens, model.gens.base.P0, model.params, cfg);
  auto probs = filter::class_probabilities(enc.x->value, Z->value, cfg.tau);
  CHECK(st.probs.probs.data == probs.probs.data);
  CHECK(st.probs.logits.data == probs.logits.data);

  // The differentiable logits twin carries the same numbers.
  CHECK(st.logits_node->value.data == st.probs.logits.data);

  // Initialization records the base prompts and is N-independent.
  CHECK(st.tprompt.data == model.gens.base.P0->value.data);
  auto trace0 = engine::forward_episode(img, task.class_tokens, model, 0);
  auto trace2 = engine::forward_episode(img, task.class_tokens, model, 2);
  CHECK(trace0.states[0].probs.probs.data == trace2.states[0].probs.probs.data);
}

TEST_CASE("mie_step increments n and is deterministic") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;

  engine::IterationState s0 = engine::initialize(img, task.class_tokens, model);
  engine::IterationState s1 = engine::mie_step(s0, img, task.class_tokens, model);
  engine::IterationState s1b = engine::mie_step(s0, img, task.class_tokens, model);
  CHECK(s1.n == 1);
  CHECK(s1.x.data == s1b.x.data);
  CHECK(s1.Z.data == s1b.Z.data);
  CHECK(s1.probs.probs.data == s1b.probs.probs.data);
  CHECK(s1.filtered.indices == s1b.filtered.indices);

  // State invariants: filtered rows gathered from exactly this Z.
  for (std::size_t i = 0; i < s1.filtered.indices.size(); ++i) {
    for (std::int64_t c = 0; c < cfg.d; ++c) {
      CHECK(s1.filtered.rows.at(static_cast<std::int64_t>(i), c) == s1.Z.at(s1.filtered.indices[i], c));
    }
  }
}

TEST_CASE("ablated attention with zero generators and zero base prompts freezes the probabilities") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  for (const auto& [name, slot] : model.params.slots()) {
    if (name.rfind("gen/", 0) == 0 || name.rfind("prompt/", 0) == 0) {
      for (double& v : slot.node->value.data) v = 0.0;
    }
  }
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;
  const encoders::EncodeHooks ablated{true};

  engine::IterationState s0 = engine::initialize(img, task.class_tokens, model, ablated);
  engine::IterationState s1 = engine::mie_step(s0, img, task.class_tokens, model, ablated);
  CHECK(s1.probs.probs.data == s0.probs.probs.data);
  CHECK(s1.probs.logits.data == s0.probs.logits.data);

  // Without the hook the injected prompt tokens do reach x through attention,
  // even though the prompts themselves are all zero.
  engine::IterationState t0 = engine::initialize(img, task.class_tokens, model);
  engine::IterationState t1 = engine::mie_step(t0, img, task.class_tokens, model);
  CHECK(t1.x.data != t0.x.data);
}

TEST_CASE("static-text-prompt ablation pins the text side to the base prompt") {
  ModelConfig cfg = toy_config();
  cfg.static_text_prompt = true;
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;
  auto trace = engine::forward_episode(img, task.class_tokens, model, 2);
  for (const auto& st : trace.states) {
    CHECK(st.tprompt.data == model.gens.base.P0->value.data);
    CHECK(st.Z.data == trace.states[0].Z.data);  // text features never move
  }
  // The vision side still evolves, and the base prompt still receives
  // gradient (it is the CoOp-style learnable prompt).
  CHECK(trace.states[1].x.data != trace.states[0].x.data);
  backward(engine::episode_loss(trace, task.train.front().label, cfg.lambda, cfg.N));
  bool p0_grad = false;
  for (double v : model.gens.base.P0->grad->data) p0_grad |= v != 0.0;
  CHECK(p0_grad);

  CHECK_THROWS_AS(parse_config_text("static_text_prompt = 2\n"), std::invalid_argument);
  CHECK(parse_config_text("static_text_prompt = 1\n").model.static_text_prompt);
}

TEST_CASE("step order: vision prompts come from the previous filtered features") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;
  engine::IterationState s0 = engine::initialize(img, task.class_tokens, model);
  engine::IterationState s1 = engine::mie_step(s0, img, task.class_tokens, model);

  const Tensor& W1 = model.params.get("gen/vision/W1")->value;
  const Tensor& W2 = model.params.get("gen/vision/W2")->value;
  const std::int64_t h = cfg.gen_hidden();
  for (std::int64_t j = 0; j < cfg.J; ++j) {
    const Tensor& b1 = model.params.get("gen/vision/b1/" + std::to_string(j))->value;
    const Tensor& b2 = model.params.get("gen/vision/b2/" + std::to_string(j))->value;
    const Tensor& base = model.params.get("prompt/vision_base/" + std::to_string(j))->value;
    for (std::int64_t r = 0; r < cfg.a; ++r) {
      std::vector<double> hidden(static_cast<std::size_t>(h));
      for (std::int64_t t = 0; t < h; ++t) {
        double acc = b1.at(t);
        for (std::int64_t c = 0; c < cfg.d; ++c) acc += s0.filtered.rows.at(r, c) * W1.at(c, t);
        hidden[static_cast<std::size_t>(t)] = acc > 0.0 ? acc : 0.0;
      }
      for (std::int64_t c = 0; c < cfg.d_v; ++c) {
        double acc = b2.at(c) + base.at(r, c);
        for (std::int64_t t = 0; t < h; ++t) acc += hidden[static_cast<std::size_t>(t)] * W2.at(t, c);
        CHECK(s1.vprompts[static_cast<std::size_t>(j)].at(r, c) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("forward_episode trace lengths and reproducible filtered indices") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;

  CHECK(engine::forward_episode(img, task.class_tokens, model, 0).states.size() == 1);
  auto t1 = engine::forward_episode(img, task.class_tokens, model, 2);
  auto t2 = engine::forward_episode(img, task.class_tokens, model, 2);
  REQUIRE(t1.states.size() == 3);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(t1.states[n].n == static_cast<std::int64_t>(n));
    CHECK(t1.states[n].filtered.indices == t2.states[n].filtered.indices);
  }
  CHECK_THROWS_AS(engine::forward_episode(img, task.class_tokens, model, -1), std::invalid_argument);
}

TEST_CASE("episode_loss weighting law") {
  SUBCASE("lambda = 1 sums the iteration losses") {
    auto loss = engine::episode_loss(rigged_trace(0.3, 0.5), 0, 1.0, 2);
    CHECK(std::fabs(loss->value.item() - 0.8) <= 1e-12);
  }
  SUBCASE("lambda = 0.5 halves the earlier iteration") {
    auto loss = engine::episode_loss(rigged_trace(0.3, 0.5), 0, 0.5, 2);
    CHECK(std::fabs(loss->value.item() - 0.65) <= 1e-12);
  }
  SUBCASE("lambda = 0 keeps only the final iteration") {
    auto loss = engine::episode_loss(rigged_trace(0.3, 0.5), 0, 0.0, 2);
    CHECK(std::fabs(loss->value.item() - 0.5) <= 1e-12);
  }
  SUBCASE("N = 0 is rejected, as is a mismatched trace") {
    auto trace = rigged_trace(0.3, 0.5);
    CHECK_THROWS_AS(engine::episode_loss(trace, 0, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(engine::episode_loss(trace, 0, 1.0, 3), std::invalid_argument);
  }
}

TEST_CASE("with lambda = 1 the episode loss equals the sum of per-iteration CE") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& sample = task.train.front();
  auto trace = engine::forward_episode(sample.image, task.class_tokens, model, 2);
  auto loss = engine::episode_loss(trace, sample.label, 1.0, 2);

  double expected = 0.0;
  for (int n = 1; n <= 2; ++n) {
    Tensor lp;
    kernels::log_softmax_last_axis(trace.states[static_cast<std::size_t>(n)].probs.logits, 1.0, lp);
    expected += -lp.at(sample.label);
  }
  CHECK(std::fabs(loss->value.item() - expected) <= 1e-12);
}

TEST_CASE("text prompt recurrence telescopes") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg);
  const auto& img = task.train.front().image;
  const std::int64_t N = 3;
  auto trace = engine::forward_episode(img, task.class_tokens, model, N);

  // Plain recomputation of G^T from raw parameter values.
  const Tensor& W1 = model.params.get("gen/text/W1")->value;
  const Tensor& b1 = model.params.get("gen/text/b1")->value;
  const Tensor& W2 = model.params.get("gen/text/W2")->value;
  const Tensor& b2 = model.params.get("gen/text/b2")->value;
  const std::int64_t h = cfg.gen_hidden();

  Tensor expected = model.gens.base.P0->value;
  for (std::int64_t n = 1; n <= N; ++n) {
    const Tensor& x = trace.states[static_cast<std::size_t>(n)].x;
    std::vector<double> hidden(static_cast<std::size_t>(h));
    for (std::int64_t j = 0; j < h; ++j) {
      double acc = b1.at(j);
      for (std::int64_t c = 0; c < cfg.d; ++c) acc += x.at(c) * W1.at(c, j);
      hidden[static_cast<std::size_t>(j)] = acc > 0.0 ? acc : 0.0;
    }
    for (std::int64_t c = 0; c < cfg.d_l; ++c) {
      double acc = b2.at(c);
      for (std::int64_t j = 0; j < h; ++j) acc += hidden[static_cast<std::size_t>(j)] * W2.at(j, c);
      for (std::int64_t r = 0; r < cfg.b; ++r) expected.at(r, c) += acc;
    }
    double max_diff = 0.0;
    for (std::int64_t i = 0; i < expected.size(); ++i) {
      max_diff = std::max(max_diff,
                          std::fabs(expected.at(i) - trace.states[static_cast<std::size_t>(n)].tprompt.at(i)));
    }
    CHECK(max_diff < 1e-10);
  }
}

TEST_CASE("training updates only the trainable slots and decreases the loss") {
  ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg, 8, 2);

  const auto backbone_before = snapshot(model.params, "backbone/");
  const auto gen_before = snapshot(model.params, "gen/");
  const auto prompt_before = snapshot(model.params, "prompt/");

  TrainConfig tc;
  tc.lr = 0.01;
  tc.epochs = 0;
  engine::train(model, task, tc, cfg.seed);
  for (const auto& [name, t] : gen_before) CHECK(model.params.get(name)->value.data == t.data);

  tc.epochs = 3;
  tc.batch = 4;
  engine::TrainHistory history = engine::train(model, task, tc, cfg.seed);
  REQUIRE(history.epoch_mean_loss.size() == 3);
  CHECK(history.epoch_mean_loss.back() < history.epoch_mean_loss.front());

  for (const auto& [name, t] : backbone_before) CHECK(model.params.get(name)->value.data == t.data);
  bool gen_changed = false, prompt_changed = false;
  for (const auto& [name, t] : gen_before) gen_changed |= model.params.get(name)->value.data != t.data;
  for (const auto& [name, t] : prompt_before) prompt_changed |= model.params.get(name)->value.data != t.data;
  CHECK(gen_changed);
  CHECK(prompt_changed);

  data::SyntheticTask empty = task;
  empty.train.clear();
  CHECK_THROWS_AS(engine::train(model, empty, tc, cfg.seed), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit-exact and validates its header") {
  const ModelConfig cfg = toy_config();
  RunConfig rc;
  rc.model = cfg;
  engine::Model model = engine::build_model(cfg);
  // Perturb a trainable slot so the file is not just the fresh init.
  model.params.get("gen/text/b2")->value.at(0) = 0.125;

  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "promptforge_ckpt_test.ckpt").string();
  engine::save_checkpoint(model, rc, 3, 77, path);

  engine::CheckpointMeta meta;
  engine::Model loaded = engine::load_checkpoint(path, &meta);
  CHECK(meta.epoch == 3);
  CHECK(meta.rng_seed == 77);
  CHECK(meta.cfg.model.d == cfg.d);
  for (const auto& [name, slot] : model.params.slots()) {
    CHECK(loaded.params.get(name)->value.data == slot.node->value.data);
    CHECK(loaded.params.trainable(name) == model.params.trainable(name));
  }

  SUBCASE("corrupted magic is rejected") {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('Z', f);
    std::fclose(f);
    CHECK_THROWS_WITH_AS(engine::load_checkpoint(path), doctest::Contains("bad magic"), std::runtime_error);
  }
  SUBCASE("truncated file is rejected") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    CHECK_THROWS_AS(engine::load_checkpoint(path), std::runtime_error);
  }
  SUBCASE("architecture mismatch is rejected") {
    ModelConfig other = cfg;
    other.d = 16;
    other.d_v = 16;
    other.d_l = 16;
    CHECK_THROWS_AS(engine::load_checkpoint_expecting(path, other), std::runtime_error);
    CHECK_NOTHROW(engine::load_checkpoint_expecting(path, cfg));
  }
  std::filesystem::remove(path);
}

TEST_CASE("evaluate fans out over threads without changing results") {
  const ModelConfig cfg = toy_config();
  engine::Model model = engine::build_model(cfg);
  auto task = toy_task(cfg, 2, 6);
  setenv("PROMPTFORGE_THREADS", "1", 1);
  auto serial = metrics::evaluate(model, task, cfg.N);
  setenv("PROMPTFORGE_THREADS", "8", 1);
  auto parallel = metrics::evaluate(model, task, cfg.N);
  unsetenv("PROMPTFORGE_THREADS");
  CHECK(serial.base_acc == parallel.base_acc);
  CHECK(serial.new_acc == parallel.new_acc);
  CHECK(serial.per_iter_acc == parallel.per_iter_acc);
  CHECK(serial.episodes == parallel.episodes);

  CHECK(serial.episodes == 2 * 2 * 6);
  if (serial.base_acc + serial.new_acc > 0.0) {
    CHECK(serial.hm == doctest::Approx(metrics::harmonic_mean(serial.base_acc, serial.new_acc)).epsilon(1e-12));
  }
}
