#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "promptforge/tensor.hpp"

namespace pf {

enum class OpTag {
  kLeaf,
  kConstant,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kConcat,
  kSlice,
  kRelu,
  kGelu,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kEmbeddingLookup,
  kMean,
  kSum,
  kTranspose,
  kL2Normalize,
  kLog,
  kNegate,
  kCrossEntropyFromLogProbs,
  kGatherRows,
  kRepeatRows,
  kReshape,
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. `parents` are the op inputs, in
// order; the graph is a DAG because ops only ever reference already-built
// nodes. `backward_fn` pulls this node's grad into the parents' grads.
struct Node {
  Tensor value;
  OpTag tag = OpTag::kLeaf;
  std::vector<NodePtr> parents;
  std::optional<Tensor> grad;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

NodePtr leaf(Tensor value);
NodePtr constant(Tensor value);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double c);
NodePtr concat(const std::vector<NodePtr>& parts, int axis);
NodePtr slice(const NodePtr& a, int axis, std::int64_t start, std::int64_t stop);
NodePtr relu(const NodePtr& a);
NodePtr gelu(const NodePtr& a);
NodePtr softmax(const NodePtr& a, int axis, double temperature);
NodePtr log_softmax(const NodePtr& a, int axis, double temperature);
NodePtr layer_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta, double eps = 1e-5);
NodePtr embedding_lookup(const NodePtr& table, const std::vector<std::int64_t>& ids);
NodePtr mean(const NodePtr& a);
NodePtr sum(const NodePtr& a);
NodePtr transpose(const NodePtr& a);
NodePtr l2_normalize(const NodePtr& a);
NodePtr log(const NodePtr& a);
NodePtr negate(const NodePtr& a);
NodePtr cross_entropy_from_log_probs(const NodePtr& log_probs, std::int64_t target);
NodePtr gather_rows(const NodePtr& m, const std::vector<std::int64_t>& rows);
NodePtr repeat_rows(const NodePtr& v, std::int64_t n);
NodePtr reshape(const NodePtr& a, Shape shape);

// Populates `grad` on every node reachable from `loss` (which must be
// scalar), accumulating at fan-out points. Grads of the reachable set are
// reset first, so one backward call per loss graph.
void backward(const NodePtr& loss);

// Reachable set of `root` in deterministic (parent-order DFS) topological
// order, inputs before consumers.
std::vector<Node*> topo_order(const NodePtr& root);

}  // namespace pf
