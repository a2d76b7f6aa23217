#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "promptforge/tensor.hpp"

namespace pf::rng {

// One root seed per run; every consumer derives its own stream by tag so the
// order in which components initialize never changes the numbers they see.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag);

// mt19937_64 plus hand-rolled distributions. The std:: distributions are
// implementation-defined, which would break bit-reproducibility of stored
// expected values across standard libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53 bits.
  double uniform();
  // Standard normal via Box-Muller, one value per two draws.
  double normal();
  // Uniform integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

Tensor normal_tensor(Stream& stream, Shape shape, double stddev);

}  // namespace pf::rng
