#include "dmt/numcore/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "dmt/numcore/errors.hpp"

namespace dmt {

Tape Tape::from(const Tensor& output) {
  Tape tape;
  tape.root_ = output.impl();
  std::unordered_set<TensorImpl*> seen;
  // iterative post-order DFS; (impl, next input index)
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(output.impl().get(), 0);
  seen.insert(output.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->node.get();
    if (node && next < node->inputs.size()) {
      TensorImpl* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    tape.order_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

void Tape::backward() const {
  if (order_.empty()) return;
  auto& seed = root_->grad_buffer();
  for (auto& g : seed) g += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl* impl = *it;
    if (!impl->node || impl->grad.empty()) continue;
    impl->node->backward(impl->grad, impl->node->inputs);
  }
  // intermediate gradients are not retained
  for (TensorImpl* impl : order_) {
    if (impl->node) std::vector<double>().swap(impl->grad);
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ValueError("backward: undefined loss");
  if (loss.numel() != 1) {
    throw ValueError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw ValueError("backward: loss is detached from the tape");
  Tape::from(loss).backward();
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace dmt
