#include "promptforge/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pf {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  for (auto e : shape) {
    if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
  }
  data.assign(static_cast<std::size_t>(numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (auto e : shape) {
    if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent in shape " + shape_str(shape));
  }
  if (numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::zeros_like(const Tensor& t) { return Tensor(t.shape, 0.0); }

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not 2-D, shape " + shape_str(shape));
  return shape[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not 2-D, shape " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::int64_t r, std::int64_t c) {
  return data[static_cast<std::size_t>(r * shape[1] + c)];
}

double Tensor::at(std::int64_t r, std::int64_t c) const {
  return data[static_cast<std::size_t>(r * shape[1] + c)];
}

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item(): tensor has " + std::to_string(size()) + " elements");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace kernels {

void matmul(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  out = Tensor(Shape{m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t t = 0; t < k; ++t) acc += arow[t] * b.data[static_cast<std::size_t>(t * n + j)];
      out.data[static_cast<std::size_t>(i * n + j)] = acc;
    }
  }
}

void softmax_last_axis(const Tensor& src, double temperature, Tensor& out) {
  out = Tensor::zeros_like(src);
  const std::int64_t width = src.shape.back();
  const std::int64_t rows = src.size() / width;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = src.data.data() + r * width;
    double* o = out.data.data() + r * width;
    double mx = in[0] / temperature;
    for (std::int64_t i = 1; i < width; ++i) mx = std::max(mx, in[i] / temperature);
    double total = 0.0;
    for (std::int64_t i = 0; i < width; ++i) {
      o[i] = std::exp(in[i] / temperature - mx);
      total += o[i];
    }
    for (std::int64_t i = 0; i < width; ++i) o[i] /= total;
  }
}

void log_softmax_last_axis(const Tensor& src, double temperature, Tensor& out) {
  out = Tensor::zeros_like(src);
  const std::int64_t width = src.shape.back();
  const std::int64_t rows = src.size() / width;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = src.data.data() + r * width;
    double* o = out.data.data() + r * width;
    double mx = in[0] / temperature;
    for (std::int64_t i = 1; i < width; ++i) mx = std::max(mx, in[i] / temperature);
    double total = 0.0;
    for (std::int64_t i = 0; i < width; ++i) total += std::exp(in[i] / temperature - mx);
    const double lse = mx + std::log(total);
    for (std::int64_t i = 0; i < width; ++i) o[i] = in[i] / temperature - lse;
  }
}

double l2_norm(const double* v, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += v[i] * v[i];
  return std::sqrt(acc);
}

void l2_normalize_rows(const Tensor& src, Tensor& out) {
  out = Tensor::zeros_like(src);
  const std::int64_t width = src.shape.back();
  const std::int64_t rows = src.size() / width;
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* in = src.data.data() + r * width;
    double* o = out.data.data() + r * width;
    const double norm = l2_norm(in, width);
    if (norm == 0.0) throw std::invalid_argument("l2-normalize: zero vector (row " + std::to_string(r) + ")");
    for (std::int64_t i = 0; i < width; ++i) o[i] = in[i] / norm;
  }
}

}  // namespace kernels

}  // namespace pf
