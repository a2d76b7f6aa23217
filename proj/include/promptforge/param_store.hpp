#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "promptforge/autodiff.hpp"

namespace pf {

struct ParamSlot {
  NodePtr node;
  bool trainable = false;
};

// Named parameter leaves. Iteration is always in sorted-name order, which
// pins the summation order of everything that walks the store.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  // Copying would alias the parameter nodes; keep stores move-only.
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  NodePtr add(const std::string& name, Tensor init, bool trainable);
  const NodePtr& get(const std::string& name) const;
  bool has(const std::string& name) const { return slots_.count(name) != 0; }
  bool trainable(const std::string& name) const;

  const std::map<std::string, ParamSlot>& slots() const { return slots_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  void zero_grads();

 private:
  std::map<std::string, ParamSlot> slots_;
  std::uint64_t seed_ = 0;
};

// theta <- theta - lr * grad for every trainable slot; frozen slots stay
// bit-identical. Clears all grads afterwards.
void sgd_step(ParamStore& params, double lr);

// Central finite differences against the analytic gradient of f over every
// trainable scalar. f must be a deterministic function of the stored values.
// Returns the maximum relative error |a - n| / max(1, |a|, |n|).
double finite_diff_check(const std::function<NodePtr(ParamStore&)>& f, ParamStore& params, double step);

}  // namespace pf
