#include "promptforge/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace pf {

NodePtr ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (slots_.count(name)) throw std::invalid_argument("ParamStore: duplicate slot '" + name + "'");
  NodePtr node = leaf(std::move(init));
  slots_[name] = ParamSlot{node, trainable};
  return node;
}

const NodePtr& ParamStore::get(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::invalid_argument("ParamStore: unknown slot '" + name + "'");
  return it->second.node;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw std::invalid_argument("ParamStore: unknown slot '" + name + "'");
  return it->second.trainable;
}

void ParamStore::zero_grads() {
  for (auto& [name, slot] : slots_) slot.node->grad.reset();
}

void sgd_step(ParamStore& params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  for (auto& [name, slot] : params.slots()) {
    if (!slot.trainable) continue;
    Node& node = *slot.node;
    if (!node.grad || !node.grad->same_shape(node.value)) {
      throw std::runtime_error("sgd_step: trainable slot '" + name + "' has no gradient");
    }
    for (std::int64_t i = 0; i < node.value.size(); ++i) node.value.at(i) -= lr * node.grad->at(i);
  }
  for (auto& [name, slot] : params.slots()) slot.node->grad.reset();
}

double finite_diff_check(const std::function<NodePtr(ParamStore&)>& f, ParamStore& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

  auto eval = [&](const char* where) {
    NodePtr out = f(params);
    if (!out || out->value.size() != 1) {
      throw std::invalid_argument("finite_diff_check: f must return a scalar");
    }
    const double v = out->value.at(0);
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("finite_diff_check: non-finite value at ") + where);
    }
    return out;
  };

  NodePtr loss = eval("base point");
  backward(loss);
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, slot] : params.slots()) {
    if (!slot.trainable) continue;
    analytic[name] = slot.node->grad ? *slot.node->grad : Tensor::zeros_like(slot.node->value);
  }
  params.zero_grads();

  double max_rel = 0.0;
  for (const auto& [name, slot] : params.slots()) {
    if (!slot.trainable) continue;
    Tensor& theta = slot.node->value;
    const Tensor& a = analytic.at(name);
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      const double orig = theta.at(i);
      theta.at(i) = orig + step;
      const double fp = eval("plus perturbation")->value.at(0);
      theta.at(i) = orig - step;
      const double fm = eval("minus perturbation")->value.at(0);
      theta.at(i) = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel = std::fabs(a.at(i) - numeric) /
                         std::max({1.0, std::fabs(a.at(i)), std::fabs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace pf
