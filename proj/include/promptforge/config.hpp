#pragma once

#include <cstdint>
#include <string>

namespace pf {

// Architecture and method hyperparameters. Defaults mirror a ViT-B/16-style
// dual encoder with the published prompt settings.
struct ModelConfig {
  std::int64_t d = 512;      // shared embedding dim
  std::int64_t d_v = 768;    // vision width
  std::int64_t d_l = 512;    // text width
  std::int64_t L = 12;       // layers per encoder
  std::int64_t heads = 8;    // attention heads (divides d_v and d_l)
  std::int64_t M_a = 196;    // image patch count
  std::int64_t M_b = 77;     // text token capacity incl. template slots
  std::int64_t vocab = 64;   // token vocabulary size
  std::int64_t K = 10;       // class count
  std::int64_t a = 8;        // vision prompt length / filter width
  std::int64_t b = 5;        // text prompt length
  std::int64_t J = 9;        // vision prompt depth
  std::int64_t N = 2;        // evolution iterations
  double lambda = 1.0;       // loss weighting factor
  double tau = 0.01;         // similarity temperature
  std::uint64_t seed = 0;
  std::int64_t mlp_ratio = 4;
  // Ablation: keep text prompts static (trainable base prompt only, no
  // image-conditional generator), the way CoOp-style tuning works.
  bool static_text_prompt = false;

  // Generator bottleneck d -> d/16 -> d_v|d_l, floored at 1 so toy widths
  // below 16 stay usable.
  std::int64_t gen_hidden() const { return d / 16 > 0 ? d / 16 : 1; }

  void validate() const;  // throws std::invalid_argument with the offending field
};

struct TrainConfig {
  double lr = 0.008;
  std::int64_t epochs = 5;
  std::int64_t batch = 4;
  std::int64_t shots = 16;
  double noise = 0.1;
  double base_fraction = 0.5;
  std::int64_t test_per_class = 20;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// Flat "key = value" config files; '#' starts a comment; unknown keys are
// rejected.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
std::string config_to_text(const RunConfig& cfg);

}  // namespace pf
