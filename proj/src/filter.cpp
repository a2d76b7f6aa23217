#include "promptforge/filter.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pf::filter {

ClassProbabilities class_probabilities(const Tensor& x, const Tensor& Z, double tau) {
  if (x.rank() != 1) throw std::invalid_argument("class_probabilities: x must be 1-D, got " + shape_str(x.shape));
  if (Z.rank() != 2 || Z.cols() != x.size()) {
    throw std::invalid_argument("class_probabilities: Z must be K x " + std::to_string(x.size()) + ", got " +
                                shape_str(Z.shape));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("class_probabilities: tau must be positive");

  Tensor xn, zn;
  kernels::l2_normalize_rows(x, xn);
  kernels::l2_normalize_rows(Z, zn);

  const std::int64_t K = Z.rows(), d = x.size();
  const double inv_tau = 1.0 / tau;
  ClassProbabilities out;
  out.logits = Tensor(Shape{K});
  for (std::int64_t k = 0; k < K; ++k) {
    double acc = 0.0;
    for (std::int64_t t = 0; t < d; ++t) acc += zn.at(k, t) * xn.at(t);
    out.logits.at(k) = acc * inv_tau;
  }
  kernels::softmax_last_axis(out.logits, 1.0, out.probs);
  return out;
}

std::vector<std::int64_t> top_a_indices(const Tensor& probs, std::int64_t a) {
  const std::int64_t K = probs.size();
  if (a < 1 || a > K) {
    throw std::invalid_argument("top_a_indices: a = " + std::to_string(a) + " outside [1, " +
                                std::to_string(K) + "]");
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(K));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int64_t lhs, std::int64_t rhs) {
    if (probs.at(lhs) != probs.at(rhs)) return probs.at(lhs) > probs.at(rhs);
    return lhs < rhs;
  });
  order.resize(static_cast<std::size_t>(a));
  return order;
}

FilteredFeatures select_top_a(const ClassProbabilities& p, const Tensor& Z, std::int64_t a) {
  if (Z.rank() != 2 || Z.rows() != p.probs.size()) {
    throw std::invalid_argument("select_top_a: Z rows must match probability count, got " +
                                shape_str(Z.shape) + " vs " + std::to_string(p.probs.size()) + " probs");
  }
  FilteredFeatures out;
  out.indices = top_a_indices(p.probs, a);
  out.rows = Tensor(Shape{a, Z.cols()});
  for (std::int64_t i = 0; i < a; ++i) {
    for (std::int64_t c = 0; c < Z.cols(); ++c) out.rows.at(i, c) = Z.at(out.indices[static_cast<std::size_t>(i)], c);
  }
  return out;
}

}  // namespace pf::filter
