#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "promptforge/engine.hpp"
#include "promptforge/records.hpp"

namespace pf::engine {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

bool same_architecture(const ModelConfig& x, const ModelConfig& y) {
  return x.d == y.d && x.d_v == y.d_v && x.d_l == y.d_l && x.L == y.L && x.heads == y.heads &&
         x.M_a == y.M_a && x.M_b == y.M_b && x.vocab == y.vocab && x.K == y.K && x.a == y.a &&
         x.b == y.b && x.J == y.J && x.mlp_ratio == y.mlp_ratio;
}

}  // namespace

void save_checkpoint(const Model& model, const RunConfig& cfg, std::int64_t epoch, std::uint64_t rng_seed,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  out.write(kMagic, 4);
  records::write_u32(out, kVersion);

  std::ostringstream meta;
  meta << config_to_text(cfg);
  meta << "epoch = " << epoch << "\n";
  meta << "rng_state = " << rng_seed << "\n";
  records::write_text_block(out, meta.str());

  records::write_u64(out, model.params.slots().size());
  for (const auto& [name, slot] : model.params.slots()) {
    records::write_tensor_record(out, name, slot.trainable ? 1 : 0, slot.node->value);
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic, '" + path + "' is not a checkpoint");
  }
  const std::uint32_t version = records::read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: format version " + std::to_string(version) +
                             " not supported (expected " + std::to_string(kVersion) + ")");
  }

  const std::string text = records::read_text_block(in);
  CheckpointMeta local;
  std::ostringstream cfg_text;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("epoch = ", 0) == 0) {
      local.epoch = std::stoll(line.substr(8));
    } else if (line.rfind("rng_state = ", 0) == 0) {
      local.rng_seed = std::stoull(line.substr(12));
    } else {
      cfg_text << line << "\n";
    }
  }
  local.cfg = parse_config_text(cfg_text.str());

  Model model = build_model(local.cfg.model);
  const std::uint64_t count = records::read_u64(in);
  if (count != model.params.slots().size()) {
    throw std::runtime_error("load_checkpoint: slot count " + std::to_string(count) +
                             " does not match config (" + std::to_string(model.params.slots().size()) + ")");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    records::TensorRecord rec = records::read_tensor_record(in);
    if (!model.params.has(rec.name)) {
      throw std::runtime_error("load_checkpoint: unexpected slot '" + rec.name + "'");
    }
    Node& node = *model.params.get(rec.name);
    if (node.value.shape != rec.tensor.shape) {
      throw std::runtime_error("load_checkpoint: slot '" + rec.name + "' has shape " +
                               shape_str(rec.tensor.shape) + ", config expects " + shape_str(node.value.shape));
    }
    const bool trainable = rec.flag != 0;
    if (trainable != model.params.trainable(rec.name)) {
      throw std::runtime_error("load_checkpoint: slot '" + rec.name + "' trainable flag mismatch");
    }
    node.value = std::move(rec.tensor);
  }
  if (meta) *meta = local;
  return model;
}

Model load_checkpoint_expecting(const std::string& path, const ModelConfig& expect, CheckpointMeta* meta) {
  CheckpointMeta local;
  Model model = load_checkpoint(path, &local);
  if (!same_architecture(local.cfg.model, expect)) {
    throw std::runtime_error("load_checkpoint: checkpoint architecture does not match the requested config");
  }
  if (meta) *meta = local;
  return model;
}

}  // namespace pf::engine
