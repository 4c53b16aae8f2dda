#pragma once

#include <span>
#include <vector>

#include "dmt/numcore/tensor.hpp"

namespace dmt {

/// Topologically ordered record of the nodes reachable from one output.
/// Every entry's inputs appear before it.
class Tape {
 public:
  static Tape from(const Tensor& output);

  std::size_t size() const { return order_.size(); }
  std::span<TensorImpl* const> entries() const { return order_; }

  /// Replays the recorded ops in reverse, seeding `output` with gradient 1.
  void backward() const;

 private:
  std::vector<TensorImpl*> order_;
  std::shared_ptr<TensorImpl> root_;
};

/// Populates gradients of every requires-grad leaf reachable from `loss`.
/// Gradients accumulate; call zero_grads between steps.
void backward(const Tensor& loss);

void zero_grads(std::span<Tensor> params);

}  // namespace dmt
