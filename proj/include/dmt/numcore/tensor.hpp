#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dmt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class OpKind {
  Add,
  Sub,
  Mul,
  Scale,
  Shift,
  Matmul,
  Transpose,
  Reshape,
  Concat,
  Relu,
  Exp,
  Conv2d,
  SpatialMean,
  Sum,
  Broadcast,
  Softmax,
  LayerNorm,
  Unfold,
  SpatialWindow,
  L2Normalize,
  HingeResidual,
  BoxDecode,
  Pow,
};

struct TensorImpl;

/// One recorded operation. Backward reads the output gradient and
/// accumulates into the gradient buffers of the inputs that require grad.
struct Node {
  using BackwardFn = std::function<void(const std::vector<double>& out_grad,
                                        std::vector<std::shared_ptr<TensorImpl>>& inputs)>;
  OpKind kind;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Dense row-major float64 array with an optional gradient.
///
/// Tensor is a shared handle: copies alias the same storage, the way graph
/// nodes reference their inputs. Data is immutable once an op has produced
/// it; leaves (parameters) are the one exception and may be updated in place
/// by an optimizer between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Mutable view for leaves only; throws for op results.
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag = true);
  bool is_leaf() const;
  /// Gradient view; all zeros when nothing has been accumulated yet.
  std::span<const double> grad() const;
  void zero_grad();

  /// Copy of the data with no tape history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// True when tape recording is enabled on this thread.
bool grad_enabled();

/// Disables tape recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace dmt
