#include "promptforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "promptforge/filter.hpp"
#include "promptforge/records.hpp"
#include "promptforge/rng.hpp"

namespace pf::data {

namespace {

constexpr std::int64_t kNameLen = 3;
constexpr char kTaskMagic[4] = {'P', 'M', 'T', 'K'};
constexpr std::uint32_t kTaskVersion = 1;

// Mixing-map fit: stop once this fraction of class prototypes is classified
// correctly by the zero-shot path. The cap keeps degenerate configs from
// looping forever.
constexpr double kFitTargetFraction = 0.4;
constexpr int kFitMaxSteps = 300;
constexpr double kFitLr = 2.0;

// The hidden mixing map sends a class's token-embedding prototype to its
// patch prototype. Starting from a random map, a short gradient fit through
// the frozen vision tower pulls each encoded prototype toward its own text
// feature until a moderate fraction of classes score correctly zero-shot.
// This plays the role of pretraining alignment: enough signal that prompting
// can recover the class-token correspondence, with headroom left for
// training to improve on it.
Tensor fit_mixing_map(const ModelConfig& cfg, const encoders::ClassTokens& tokens,
                      const std::vector<Tensor>& proto_text, std::uint64_t task_seed) {
  const ParamStore backbone = encoders::init_backbone(cfg, cfg.seed);

  const Tensor& embed = backbone.get("backbone/text/embed")->value;
  Tensor p0(Shape{cfg.b, cfg.d_l});
  for (std::int64_t r = 0; r < cfg.b; ++r) {
    for (std::int64_t c = 0; c < cfg.d_l; ++c) p0.at(r, c) = embed.at(r, c);
  }
  const Tensor Z0 = encoders::encode_text(tokens, constant(p0), backbone, cfg)->value;
  Tensor Z0n;
  kernels::l2_normalize_rows(Z0, Z0n);
  const NodePtr zn_const = constant(Z0n);

  rng::Stream mix_stream(rng::derive_seed(task_seed, "task/mix"));
  NodePtr W = leaf(rng::normal_tensor(mix_stream, {cfg.M_a * cfg.d_v, cfg.d_l},
                                      1.0 / std::sqrt(static_cast<double>(cfg.d_l))));

  std::vector<NodePtr> e_cols;
  for (std::int64_t k = 0; k < cfg.K; ++k) {
    e_cols.push_back(constant(Tensor(Shape{cfg.d_l, 1}, proto_text[static_cast<std::size_t>(k)].data)));
  }

  for (int step = 0; step < kFitMaxSteps; ++step) {
    NodePtr loss;
    std::int64_t correct = 0;
    for (std::int64_t k = 0; k < cfg.K; ++k) {
      NodePtr patches =
          l2_normalize(reshape(matmul(W, e_cols[static_cast<std::size_t>(k)]), Shape{cfg.M_a, cfg.d_v}));
      NodePtr x = encoders::encode_image(patches, {}, backbone, cfg).x;
      NodePtr cos = reshape(matmul(zn_const, reshape(l2_normalize(x), Shape{cfg.d, 1})), Shape{cfg.K});
      NodePtr ce = cross_entropy_from_log_probs(log_softmax(scale(cos, 1.0 / cfg.tau), 0, 1.0), k);
      loss = loss ? add(loss, ce) : ce;

      std::int64_t best = 0;
      for (std::int64_t i = 1; i < cfg.K; ++i) {
        if (cos->value.at(i) > cos->value.at(best)) best = i;
      }
      if (best == k) ++correct;
    }
    if (static_cast<double>(correct) >= kFitTargetFraction * static_cast<double>(cfg.K)) break;
    backward(loss);
    for (std::int64_t i = 0; i < W->value.size(); ++i) W->value.at(i) -= kFitLr * W->grad->at(i);
    W->grad.reset();
  }
  return W->value;
}

Tensor noisy_sample(const Tensor& prototype, double noise, rng::Stream& stream) {
  Tensor s = prototype;
  if (noise > 0.0) {
    for (double& v : s.data) v += noise * stream.normal();
  }
  return s;
}

void append_samples(std::vector<Sample>& out, const std::vector<std::int64_t>& class_ids,
                    std::int64_t per_class, const std::vector<Tensor>& prototypes, double noise,
                    rng::Stream& stream) {
  for (std::int64_t k : class_ids) {
    for (std::int64_t i = 0; i < per_class; ++i) {
      out.push_back(Sample{encoders::ImageInput{noisy_sample(prototypes[static_cast<std::size_t>(k)], noise, stream)},
                           k});
    }
  }
}

}  // namespace

SyntheticTask generate_task(std::uint64_t seed, std::int64_t K, double base_fraction, std::int64_t shots,
                            double noise, const ModelConfig& cfg, std::int64_t test_per_class) {
  cfg.validate();
  if (K < 4) throw std::invalid_argument("generate_task: K must be >= 4");
  if (!(base_fraction > 0.0 && base_fraction < 1.0)) {
    throw std::invalid_argument("generate_task: base_fraction must be in (0, 1)");
  }
  if (shots < 1) throw std::invalid_argument("generate_task: shots must be >= 1");
  if (noise < 0.0) throw std::invalid_argument("generate_task: noise must be >= 0");
  if (test_per_class < 1) throw std::invalid_argument("generate_task: test_per_class must be >= 1");
  if (K != cfg.K) {
    throw std::invalid_argument("generate_task: K = " + std::to_string(K) + " does not match config K = " +
                                std::to_string(cfg.K));
  }
  const std::int64_t capacity = cfg.M_b - cfg.b;
  if (capacity < kNameLen) {
    throw std::invalid_argument("generate_task: class names need M_b - b >= " + std::to_string(kNameLen));
  }

  SyntheticTask task;
  task.K = K;

  // Distinct random token sequences as class names.
  rng::Stream names(rng::derive_seed(seed, "task/names"));
  std::set<std::vector<std::int64_t>> seen;
  const std::int64_t pad = encoders::pad_id(cfg);
  while (static_cast<std::int64_t>(task.class_tokens.classes.size()) < K) {
    std::vector<std::int64_t> ids(kNameLen);
    for (auto& id : ids) id = static_cast<std::int64_t>(names.bounded(static_cast<std::uint64_t>(cfg.vocab)));
    if (!seen.insert(ids).second) continue;
    encoders::ClassName name;
    name.ids = ids;
    name.ids.resize(static_cast<std::size_t>(capacity), pad);
    name.true_len = kNameLen;
    task.class_tokens.classes.push_back(std::move(name));
  }

  // Patch prototypes: one shared (hidden) linear map applied per class to the
  // class's token-embedding prototype, rows normalized to unit length. Being
  // class-independent is what lets prompting learned on base classes transfer
  // to novel ones.
  const Tensor embed = encoders::text_embedding_table(cfg, cfg.seed);
  std::vector<Tensor> proto_text;
  for (std::int64_t k = 0; k < K; ++k) {
    Tensor pt(Shape{cfg.d_l}, 0.0);
    for (std::int64_t t = 0; t < kNameLen; ++t) {
      const std::int64_t id = task.class_tokens.classes[static_cast<std::size_t>(k)].ids[static_cast<std::size_t>(t)];
      for (std::int64_t c = 0; c < cfg.d_l; ++c) pt.at(c) += embed.at(id, c);
    }
    for (std::int64_t c = 0; c < cfg.d_l; ++c) pt.at(c) /= static_cast<double>(kNameLen);
    proto_text.push_back(std::move(pt));
  }
  const Tensor mix = fit_mixing_map(cfg, task.class_tokens, proto_text, seed);
  for (std::int64_t k = 0; k < K; ++k) {
    Tensor proto(Shape{cfg.M_a, cfg.d_v});
    for (std::int64_t r = 0; r < cfg.M_a * cfg.d_v; ++r) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < cfg.d_l; ++c) acc += mix.at(r, c) * proto_text[static_cast<std::size_t>(k)].at(c);
      proto.at(r) = acc;
    }
    for (std::int64_t r = 0; r < cfg.M_a; ++r) {
      const double norm = kernels::l2_norm(proto.data.data() + r * cfg.d_v, cfg.d_v);
      if (norm > 0.0) {
        for (std::int64_t c = 0; c < cfg.d_v; ++c) proto.at(r, c) /= norm;
      }
    }
    task.patch_prototypes.push_back(std::move(proto));
  }

  // Base/novel split.
  std::vector<std::int64_t> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream split(rng::derive_seed(seed, "task/split"));
  split.shuffle(order);
  const std::int64_t n_base = static_cast<std::int64_t>(static_cast<double>(K) * base_fraction);
  if (n_base < 1 || n_base >= K) {
    throw std::invalid_argument("generate_task: split leaves fewer than 1 base or 1 novel class");
  }
  task.base_classes.assign(order.begin(), order.begin() + n_base);
  task.novel_classes.assign(order.begin() + n_base, order.end());
  std::sort(task.base_classes.begin(), task.base_classes.end());
  std::sort(task.novel_classes.begin(), task.novel_classes.end());

  rng::Stream train_stream(rng::derive_seed(seed, "task/train"));
  append_samples(task.train, task.base_classes, shots, task.patch_prototypes, noise, train_stream);
  rng::Stream tb_stream(rng::derive_seed(seed, "task/test_base"));
  append_samples(task.test_base, task.base_classes, test_per_class, task.patch_prototypes, noise, tb_stream);
  rng::Stream tn_stream(rng::derive_seed(seed, "task/test_novel"));
  append_samples(task.test_novel, task.novel_classes, test_per_class, task.patch_prototypes, noise, tn_stream);
  return task;
}

SyntheticTask generate_task(const RunConfig& cfg) {
  return generate_task(cfg.model.seed, cfg.model.K, cfg.train.base_fraction, cfg.train.shots,
                       cfg.train.noise, cfg.model, cfg.train.test_per_class);
}

std::vector<std::vector<std::int64_t>> iterate_batches(std::int64_t split_size, std::int64_t batch_size,
                                                       std::uint64_t seed, std::int64_t epoch) {
  if (split_size < 1) throw std::invalid_argument("iterate_batches: empty split");
  if (batch_size < 1) throw std::invalid_argument("iterate_batches: batch size must be >= 1");
  std::vector<std::int64_t> order(static_cast<std::size_t>(split_size));
  std::iota(order.begin(), order.end(), 0);
  rng::Stream stream(rng::derive_seed(seed, "shuffle/epoch" + std::to_string(epoch)));
  stream.shuffle(order);
  std::vector<std::vector<std::int64_t>> batches;
  for (std::int64_t start = 0; start < split_size; start += batch_size) {
    const std::int64_t stop = std::min(split_size, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

namespace {

Tensor ids_tensor(const std::vector<std::int64_t>& v) {
  Tensor t(Shape{static_cast<std::int64_t>(v.size())});
  for (std::size_t i = 0; i < v.size(); ++i) t.at(static_cast<std::int64_t>(i)) = static_cast<double>(v[i]);
  return t;
}

std::vector<std::int64_t> tensor_ids(const Tensor& t) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(t.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::int64_t>(t.at(static_cast<std::int64_t>(i)));
  return v;
}

void write_split(std::ostream& out, const std::string& prefix, const std::vector<Sample>& split) {
  std::vector<std::int64_t> labels;
  for (const Sample& s : split) labels.push_back(s.label);
  records::write_tensor_record(out, prefix + "/labels", 0, ids_tensor(labels));
  for (std::size_t i = 0; i < split.size(); ++i) {
    records::write_tensor_record(out, prefix + "/patches/" + std::to_string(i), 0, split[i].image.patches);
  }
}

}  // namespace

void save_task(const SyntheticTask& task, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_task: cannot open '" + path + "'");
  out.write(kTaskMagic, 4);
  records::write_u32(out, kTaskVersion);

  std::ostringstream header;
  header << "K = " << task.K << "\n";
  records::write_text_block(out, header.str());

  // split/base, split/novel, token ids, true lengths, K prototypes, then one
  // label vector plus per-sample patches for each split.
  const std::uint64_t count = 4 + static_cast<std::uint64_t>(task.K) + (1 + task.train.size()) +
                              (1 + task.test_base.size()) + (1 + task.test_novel.size());
  records::write_u64(out, count);

  records::write_tensor_record(out, "split/base", 0, ids_tensor(task.base_classes));
  records::write_tensor_record(out, "split/novel", 0, ids_tensor(task.novel_classes));

  const std::int64_t capacity = static_cast<std::int64_t>(task.class_tokens.classes[0].ids.size());
  Tensor token_ids(Shape{task.K, capacity});
  std::vector<std::int64_t> lens;
  for (std::int64_t k = 0; k < task.K; ++k) {
    const auto& name = task.class_tokens.classes[static_cast<std::size_t>(k)];
    for (std::int64_t c = 0; c < capacity; ++c) token_ids.at(k, c) = static_cast<double>(name.ids[static_cast<std::size_t>(c)]);
    lens.push_back(name.true_len);
  }
  records::write_tensor_record(out, "class_tokens/ids", 0, token_ids);
  records::write_tensor_record(out, "class_tokens/true_len", 0, ids_tensor(lens));
  for (std::int64_t k = 0; k < task.K; ++k) {
    records::write_tensor_record(out, "proto/" + std::to_string(k), 0,
                                 task.patch_prototypes[static_cast<std::size_t>(k)]);
  }
  write_split(out, "train", task.train);
  write_split(out, "test_base", task.test_base);
  write_split(out, "test_novel", task.test_novel);
  if (!out) throw std::runtime_error("save_task: write failed for '" + path + "'");
}

SyntheticTask load_task(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_task: cannot open '" + path + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTaskMagic, 4) != 0) {
    throw std::runtime_error("load_task: bad magic, not a task file");
  }
  const std::uint32_t version = records::read_u32(in);
  if (version != kTaskVersion) {
    throw std::runtime_error("load_task: unsupported version " + std::to_string(version));
  }
  const std::string header = records::read_text_block(in);
  const std::uint64_t count = records::read_u64(in);

  std::map<std::string, Tensor> recs;
  for (std::uint64_t i = 0; i < count; ++i) {
    records::TensorRecord rec = records::read_tensor_record(in);
    recs[rec.name] = std::move(rec.tensor);
  }

  SyntheticTask task;
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.rfind("K = ", 0) == 0) task.K = std::stoll(line.substr(4));
  }
  if (task.K < 1) throw std::runtime_error("load_task: missing K");

  auto need = [&](const std::string& name) -> const Tensor& {
    auto it = recs.find(name);
    if (it == recs.end()) throw std::runtime_error("load_task: missing record '" + name + "'");
    return it->second;
  };

  task.base_classes = tensor_ids(need("split/base"));
  task.novel_classes = tensor_ids(need("split/novel"));
  const Tensor& token_ids = need("class_tokens/ids");
  const std::vector<std::int64_t> lens = tensor_ids(need("class_tokens/true_len"));
  for (std::int64_t k = 0; k < task.K; ++k) {
    encoders::ClassName name;
    for (std::int64_t c = 0; c < token_ids.cols(); ++c) {
      name.ids.push_back(static_cast<std::int64_t>(token_ids.at(k, c)));
    }
    name.true_len = lens[static_cast<std::size_t>(k)];
    task.class_tokens.classes.push_back(std::move(name));
  }
  for (std::int64_t k = 0; k < task.K; ++k) {
    task.patch_prototypes.push_back(need("proto/" + std::to_string(k)));
  }
  auto read_split = [&](const std::string& prefix, std::vector<Sample>& out) {
    const std::vector<std::int64_t> labels = tensor_ids(need(prefix + "/labels"));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out.push_back(Sample{encoders::ImageInput{need(prefix + "/patches/" + std::to_string(i))}, labels[i]});
    }
  };
  read_split("train", task.train);
  read_split("test_base", task.test_base);
  read_split("test_novel", task.test_novel);
  return task;
}

}  // namespace pf::data
