#include "promptforge/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>

namespace pf {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

NodePtr make_node(Tensor value, OpTag tag, std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->tag = tag;
  n->parents = std::move(parents);
  return n;
}

void require_nonempty(const NodePtr& a, const char* op) {
  if (!a || a->value.size() == 0) {
    throw std::invalid_argument(std::string(op) + ": empty tensor");
  }
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
  if (!a->value.same_shape(b->value)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->value.shape) +
                                " vs " + shape_str(b->value.shape));
  }
}

void require_2d(const NodePtr& a, const char* op) {
  if (a->value.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + shape_str(a->value.shape));
  }
}

struct AxisSplit {
  std::int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(shape));
  }
  AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Elementwise unary helper: forward map plus d(out)/d(in) from input value.
NodePtr unary_elementwise(const NodePtr& a, OpTag tag, double (*fwd)(double), double (*dfdx)(double)) {
  Tensor out = Tensor::zeros_like(a->value);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = fwd(a->value.at(i));
  auto n = make_node(std::move(out), tag, {a});
  n->backward_fn = [dfdx](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    const Tensor& x = self.parents[0]->value;
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += dfdx(x.at(i)) * self.grad->at(i);
  };
  return n;
}

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad) grad = Tensor::zeros_like(value);
  return *grad;
}

NodePtr leaf(Tensor value) { return make_node(std::move(value), OpTag::kLeaf, {}); }

NodePtr constant(Tensor value) { return make_node(std::move(value), OpTag::kConstant, {}); }

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  require_nonempty(a, "matmul");
  require_nonempty(b, "matmul");
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a->value.cols() != b->value.rows()) {
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(a->value.shape) + " vs " +
                                shape_str(b->value.shape));
  }
  Tensor out;
  kernels::matmul(a->value, b->value, out);
  auto n = make_node(std::move(out), OpTag::kMatmul, {a, b});
  n->backward_fn = [](Node& self) {
    const Tensor& g = *self.grad;
    const Tensor& A = self.parents[0]->value;
    const Tensor& B = self.parents[1]->value;
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    const std::int64_t m = A.shape[0], k = A.shape[1], nn = B.shape[1];
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t t = 0; t < k; ++t) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < nn; ++j) acc += g.at(i, j) * B.at(t, j);
        ga.at(i, t) += acc;
      }
    }
    for (std::int64_t t = 0; t < k; ++t) {
      for (std::int64_t j = 0; j < nn; ++j) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < m; ++i) acc += A.at(i, t) * g.at(i, j);
        gb.at(t, j) += acc;
      }
    }
  };
  return n;
}

NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_nonempty(a, "add");
  require_nonempty(b, "add");
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros_like(a->value);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = a->value.at(i) + b->value.at(i);
  auto n = make_node(std::move(out), OpTag::kAdd, {a, b});
  n->backward_fn = [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    for (std::int64_t i = 0; i < ga.size(); ++i) {
      ga.at(i) += self.grad->at(i);
      gb.at(i) += self.grad->at(i);
    }
  };
  return n;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_nonempty(a, "mul");
  require_nonempty(b, "mul");
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros_like(a->value);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = a->value.at(i) * b->value.at(i);
  auto n = make_node(std::move(out), OpTag::kMul, {a, b});
  n->backward_fn = [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    Tensor& gb = self.parents[1]->ensure_grad();
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    for (std::int64_t i = 0; i < ga.size(); ++i) {
      ga.at(i) += bv.at(i) * self.grad->at(i);
      gb.at(i) += av.at(i) * self.grad->at(i);
    }
  };
  return n;
}

NodePtr scale(const NodePtr& a, double c) {
  require_nonempty(a, "scale");
  Tensor out = Tensor::zeros_like(a->value);
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) = a->value.at(i) * c;
  auto n = make_node(std::move(out), OpTag::kScale, {a});
  n->backward_fn = [c](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += c * self.grad->at(i);
  };
  return n;
}

NodePtr concat(const std::vector<NodePtr>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  for (const auto& p : parts) require_nonempty(p, "concat");
  const Shape& first = parts[0]->value.shape;
  Shape out_shape = first;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape;
    if (s.size() != first.size()) {
      throw std::invalid_argument("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) {
        throw std::invalid_argument("concat: shape mismatch off axis, " + shape_str(first) + " vs " + shape_str(s));
      }
    }
    total += s[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  const AxisSplit sp = split_axis(out_shape, axis, "concat");
  Tensor out(out_shape);
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t len = p->value.shape[static_cast<std::size_t>(axis)];
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t l = 0; l < len; ++l) {
        for (std::int64_t in = 0; in < sp.inner; ++in) {
          out.at((o * sp.len + offset + l) * sp.inner + in) = p->value.at((o * len + l) * sp.inner + in);
        }
      }
    }
    offset += len;
  }
  auto n = make_node(std::move(out), OpTag::kConcat, parts);
  n->backward_fn = [axis, sp](Node& self) {
    std::int64_t offset = 0;
    for (auto& parent : self.parents) {
      Tensor& gp = parent->ensure_grad();
      const std::int64_t len = parent->value.shape[static_cast<std::size_t>(axis)];
      for (std::int64_t o = 0; o < sp.outer; ++o) {
        for (std::int64_t l = 0; l < len; ++l) {
          for (std::int64_t in = 0; in < sp.inner; ++in) {
            gp.at((o * len + l) * sp.inner + in) += self.grad->at((o * sp.len + offset + l) * sp.inner + in);
          }
        }
      }
      offset += len;
    }
  };
  return n;
}

NodePtr slice(const NodePtr& a, int axis, std::int64_t start, std::int64_t stop) {
  require_nonempty(a, "slice");
  const AxisSplit sp = split_axis(a->value.shape, axis, "slice");
  if (start < 0 || stop <= start || stop > sp.len) {
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                                ") invalid for extent " + std::to_string(sp.len));
  }
  Shape out_shape = a->value.shape;
  out_shape[static_cast<std::size_t>(axis)] = stop - start;
  Tensor out(out_shape);
  const std::int64_t len = stop - start;
  for (std::int64_t o = 0; o < sp.outer; ++o) {
    for (std::int64_t l = 0; l < len; ++l) {
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        out.at((o * len + l) * sp.inner + in) = a->value.at((o * sp.len + start + l) * sp.inner + in);
      }
    }
  }
  auto n = make_node(std::move(out), OpTag::kSlice, {a});
  n->backward_fn = [sp, start, len](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t l = 0; l < len; ++l) {
        for (std::int64_t in = 0; in < sp.inner; ++in) {
          ga.at((o * sp.len + start + l) * sp.inner + in) += self.grad->at((o * len + l) * sp.inner + in);
        }
      }
    }
  };
  return n;
}

NodePtr relu(const NodePtr& a) {
  require_nonempty(a, "relu");
  return unary_elementwise(
      a, OpTag::kRelu, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

NodePtr gelu(const NodePtr& a) {
  require_nonempty(a, "gelu");
  return unary_elementwise(
      a, OpTag::kGelu,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

NodePtr softmax(const NodePtr& a, int axis, double temperature) {
  require_nonempty(a, "softmax");
  if (temperature <= 0.0) throw std::invalid_argument("softmax: temperature must be positive");
  const AxisSplit sp = split_axis(a->value.shape, axis, "softmax");
  Tensor out;
  if (sp.inner == 1) {
    kernels::softmax_last_axis(a->value, temperature, out);
  } else {
    out = Tensor::zeros_like(a->value);
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        double mx = a->value.at(o * sp.len * sp.inner + in) / temperature;
        for (std::int64_t l = 1; l < sp.len; ++l) {
          mx = std::max(mx, a->value.at((o * sp.len + l) * sp.inner + in) / temperature);
        }
        double total = 0.0;
        for (std::int64_t l = 0; l < sp.len; ++l) {
          const std::int64_t idx = (o * sp.len + l) * sp.inner + in;
          out.at(idx) = std::exp(a->value.at(idx) / temperature - mx);
          total += out.at(idx);
        }
        for (std::int64_t l = 0; l < sp.len; ++l) out.at((o * sp.len + l) * sp.inner + in) /= total;
      }
    }
  }
  auto n = make_node(std::move(out), OpTag::kSoftmax, {a});
  n->backward_fn = [sp, temperature](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    const Tensor& s = self.value;
    const Tensor& g = *self.grad;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      for (std::int64_t in = 0; in < sp.inner; ++in) {
        double dot = 0.0;
        for (std::int64_t l = 0; l < sp.len; ++l) {
          const std::int64_t idx = (o * sp.len + l) * sp.inner + in;
          dot += g.at(idx) * s.at(idx);
        }
        for (std::int64_t l = 0; l < sp.len; ++l) {
          const std::int64_t idx = (o * sp.len + l) * sp.inner + in;
          ga.at(idx) += s.at(idx) * (g.at(idx) - dot) / temperature;
        }
      }
    }
  };
  return n;
}

NodePtr log_softmax(const NodePtr& a, int axis, double temperature) {
  require_nonempty(a, "log_softmax");
  if (temperature <= 0.0) throw std::invalid_argument("log_softmax: temperature must be positive");
  const AxisSplit sp = split_axis(a->value.shape, axis, "log_softmax");
  if (sp.inner != 1) throw std::invalid_argument("log_softmax: only the last axis is supported");
  Tensor out;
  kernels::log_softmax_last_axis(a->value, temperature, out);
  auto n = make_node(std::move(out), OpTag::kLogSoftmax, {a});
  n->backward_fn = [sp, temperature](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    const Tensor& y = self.value;
    const Tensor& g = *self.grad;
    for (std::int64_t o = 0; o < sp.outer; ++o) {
      double gsum = 0.0;
      for (std::int64_t l = 0; l < sp.len; ++l) gsum += g.at(o * sp.len + l);
      for (std::int64_t l = 0; l < sp.len; ++l) {
        const std::int64_t idx = o * sp.len + l;
        ga.at(idx) += (g.at(idx) - std::exp(y.at(idx)) * gsum) / temperature;
      }
    }
  };
  return n;
}

NodePtr layer_norm(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta, double eps) {
  require_nonempty(x, "layer_norm");
  require_nonempty(gamma, "layer_norm");
  require_nonempty(beta, "layer_norm");
  const std::int64_t width = x->value.shape.back();
  if (gamma->value.shape != Shape{width} || beta->value.shape != Shape{width}) {
    throw std::invalid_argument("layer_norm: gamma/beta must be (" + std::to_string(width) + "), got " +
                                shape_str(gamma->value.shape) + " and " + shape_str(beta->value.shape));
  }
  const std::int64_t rows = x->value.size() / width;
  Tensor out = Tensor::zeros_like(x->value);
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = x->value.data.data() + r * width;
    double* o = out.data.data() + r * width;
    double mu = 0.0;
    for (std::int64_t i = 0; i < width; ++i) mu += in[i];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::int64_t i = 0; i < width; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t i = 0; i < width; ++i) {
      o[i] = gamma->value.at(i) * ((in[i] - mu) * inv) + beta->value.at(i);
    }
  }
  auto n = make_node(std::move(out), OpTag::kLayerNorm, {x, gamma, beta});
  n->backward_fn = [width, rows, eps](Node& self) {
    const Tensor& xv = self.parents[0]->value;
    const Tensor& gv = self.parents[1]->value;
    Tensor& gx = self.parents[0]->ensure_grad();
    Tensor& gg = self.parents[1]->ensure_grad();
    Tensor& gb = self.parents[2]->ensure_grad();
    const Tensor& g = *self.grad;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* in = xv.data.data() + r * width;
      const double* go = g.data.data() + r * width;
      double mu = 0.0;
      for (std::int64_t i = 0; i < width; ++i) mu += in[i];
      mu /= static_cast<double>(width);
      double var = 0.0;
      for (std::int64_t i = 0; i < width; ++i) var += (in[i] - mu) * (in[i] - mu);
      var /= static_cast<double>(width);
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::int64_t i = 0; i < width; ++i) {
        const double xhat = (in[i] - mu) * inv;
        const double dxhat = go[i] * gv.at(i);
        gg.at(i) += go[i] * xhat;
        gb.at(i) += go[i];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
      }
      mean_dxhat /= static_cast<double>(width);
      mean_dxhat_xhat /= static_cast<double>(width);
      for (std::int64_t i = 0; i < width; ++i) {
        const double xhat = (in[i] - mu) * inv;
        const double dxhat = go[i] * gv.at(i);
        gx.at(r * width + i) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
      }
    }
  };
  return n;
}

NodePtr embedding_lookup(const NodePtr& table, const std::vector<std::int64_t>& ids) {
  require_nonempty(table, "embedding_lookup");
  require_2d(table, "embedding_lookup");
  if (ids.empty()) throw std::invalid_argument("embedding_lookup: no ids");
  const std::int64_t rows = table->value.rows(), width = table->value.cols();
  for (auto id : ids) {
    if (id < 0 || id >= rows) {
      throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                                  std::to_string(rows) + " rows");
    }
  }
  Tensor out(Shape{static_cast<std::int64_t>(ids.size()), width});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::int64_t c = 0; c < width; ++c) out.at(static_cast<std::int64_t>(r), c) = table->value.at(ids[r], c);
  }
  auto n = make_node(std::move(out), OpTag::kEmbeddingLookup, {table});
  n->backward_fn = [ids, width](Node& self) {
    Tensor& gt = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      for (std::int64_t c = 0; c < width; ++c) {
        gt.at(ids[r], c) += self.grad->at(static_cast<std::int64_t>(r), c);
      }
    }
  };
  return n;
}

NodePtr mean(const NodePtr& a) {
  require_nonempty(a, "mean");
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  const double inv = 1.0 / static_cast<double>(a->value.size());
  auto n = make_node(Tensor::scalar(acc * inv), OpTag::kMean, {a});
  n->backward_fn = [inv](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    const double g = self.grad->at(0) * inv;
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
  };
  return n;
}

NodePtr sum(const NodePtr& a) {
  require_nonempty(a, "sum");
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  auto n = make_node(Tensor::scalar(acc), OpTag::kSum, {a});
  n->backward_fn = [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    const double g = self.grad->at(0);
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += g;
  };
  return n;
}

NodePtr transpose(const NodePtr& a) {
  require_nonempty(a, "transpose");
  require_2d(a, "transpose");
  const std::int64_t r = a->value.rows(), c = a->value.cols();
  Tensor out(Shape{c, r});
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = a->value.at(i, j);
  }
  auto n = make_node(std::move(out), OpTag::kTranspose, {a});
  n->backward_fn = [r, c](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < c; ++j) ga.at(i, j) += self.grad->at(j, i);
    }
  };
  return n;
}

NodePtr l2_normalize(const NodePtr& a) {
  require_nonempty(a, "l2_normalize");
  Tensor out;
  kernels::l2_normalize_rows(a->value, out);
  auto n = make_node(std::move(out), OpTag::kL2Normalize, {a});
  n->backward_fn = [](Node& self) {
    const std::int64_t width = self.value.shape.back();
    const std::int64_t rows = self.value.size() / width;
    Tensor& ga = self.parents[0]->ensure_grad();
    const Tensor& xv = self.parents[0]->value;
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data.data() + r * width;
      const double* g = self.grad->data.data() + r * width;
      const double norm = kernels::l2_norm(xv.data.data() + r * width, width);
      double dot = 0.0;
      for (std::int64_t i = 0; i < width; ++i) dot += g[i] * y[i];
      for (std::int64_t i = 0; i < width; ++i) ga.at(r * width + i) += (g[i] - y[i] * dot) / norm;
    }
  };
  return n;
}

NodePtr log(const NodePtr& a) {
  require_nonempty(a, "log");
  for (double v : a->value.data) {
    if (!(v > 0.0)) throw std::invalid_argument("log: input must be strictly positive");
  }
  return unary_elementwise(
      a, OpTag::kLog, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

NodePtr negate(const NodePtr& a) {
  require_nonempty(a, "negate");
  return unary_elementwise(
      a, OpTag::kNegate, [](double x) { return -x; }, [](double) { return -1.0; });
}

NodePtr cross_entropy_from_log_probs(const NodePtr& log_probs, std::int64_t target) {
  require_nonempty(log_probs, "cross_entropy_from_log_probs");
  if (log_probs->value.rank() != 1) {
    throw std::invalid_argument("cross_entropy_from_log_probs: expected 1-D log-prob vector, got " +
                                shape_str(log_probs->value.shape));
  }
  if (target < 0 || target >= log_probs->value.size()) {
    throw std::invalid_argument("cross_entropy_from_log_probs: target " + std::to_string(target) +
                                " outside " + std::to_string(log_probs->value.size()) + " classes");
  }
  auto n = make_node(Tensor::scalar(-log_probs->value.at(target)), OpTag::kCrossEntropyFromLogProbs, {log_probs});
  n->backward_fn = [target](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    ga.at(target) -= self.grad->at(0);
  };
  return n;
}

NodePtr gather_rows(const NodePtr& m, const std::vector<std::int64_t>& rows) {
  require_nonempty(m, "gather_rows");
  require_2d(m, "gather_rows");
  if (rows.empty()) throw std::invalid_argument("gather_rows: no rows");
  const std::int64_t nrows = m->value.rows(), width = m->value.cols();
  for (auto r : rows) {
    if (r < 0 || r >= nrows) {
      throw std::invalid_argument("gather_rows: row " + std::to_string(r) + " outside " +
                                  std::to_string(nrows) + " rows");
    }
  }
  Tensor out(Shape{static_cast<std::int64_t>(rows.size()), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::int64_t c = 0; c < width; ++c) out.at(static_cast<std::int64_t>(i), c) = m->value.at(rows[i], c);
  }
  auto n = make_node(std::move(out), OpTag::kGatherRows, {m});
  n->backward_fn = [rows, width](Node& self) {
    Tensor& gm = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::int64_t c = 0; c < width; ++c) {
        gm.at(rows[i], c) += self.grad->at(static_cast<std::int64_t>(i), c);
      }
    }
  };
  return n;
}

NodePtr repeat_rows(const NodePtr& v, std::int64_t n_rows) {
  require_nonempty(v, "repeat_rows");
  if (v->value.rank() != 1) {
    throw std::invalid_argument("repeat_rows: expected 1-D vector, got " + shape_str(v->value.shape));
  }
  if (n_rows <= 0) throw std::invalid_argument("repeat_rows: row count must be positive");
  const std::int64_t width = v->value.size();
  Tensor out(Shape{n_rows, width});
  for (std::int64_t r = 0; r < n_rows; ++r) {
    for (std::int64_t c = 0; c < width; ++c) out.at(r, c) = v->value.at(c);
  }
  auto n = make_node(std::move(out), OpTag::kRepeatRows, {v});
  n->backward_fn = [n_rows, width](Node& self) {
    Tensor& gv = self.parents[0]->ensure_grad();
    for (std::int64_t r = 0; r < n_rows; ++r) {
      for (std::int64_t c = 0; c < width; ++c) gv.at(c) += self.grad->at(r, c);
    }
  };
  return n;
}

NodePtr reshape(const NodePtr& a, Shape shape) {
  require_nonempty(a, "reshape");
  if (numel(shape) != a->value.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a->value.shape) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), a->value.data);
  auto n = make_node(std::move(out), OpTag::kReshape, {a});
  n->backward_fn = [](Node& self) {
    Tensor& ga = self.parents[0]->ensure_grad();
    for (std::int64_t i = 0; i < ga.size(); ++i) ga.at(i) += self.grad->at(i);
  };
  return n;
}

std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  visited.insert(root.get());
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      Node* p = f.node->parents[f.next++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

void backward(const NodePtr& loss) {
  if (!loss) throw std::invalid_argument("backward: null loss");
  if (loss->value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->value.shape));
  }
  std::vector<Node*> order = topo_order(loss);
  for (Node* n : order) n->grad = Tensor::zeros_like(n->value);
  loss->grad->at(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace pf
