#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pf {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of 64-bit reals. Plain value type; copies are deep.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros_like(const Tensor& t);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;

  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;

  double item() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
};

// Value-level kernels shared by the graph ops and the standalone filter path.
// Keeping one implementation of each keeps independently computed results
// bit-identical.
namespace kernels {

// C = A (m x k) * B (k x n), accumulation over k in ascending order.
void matmul(const Tensor& a, const Tensor& b, Tensor& out);

// Stable softmax of src/temperature along the last axis, max-subtraction.
void softmax_last_axis(const Tensor& src, double temperature, Tensor& out);

// Log-softmax of src/temperature along the last axis.
void log_softmax_last_axis(const Tensor& src, double temperature, Tensor& out);

// Per-row (last axis) Euclidean normalization. Throws on an exact-zero row.
void l2_normalize_rows(const Tensor& src, Tensor& out);

double l2_norm(const double* v, std::int64_t n);

}  // namespace kernels

}  // namespace pf
