#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dmt/numcore/tensor.hpp"

namespace dmt {

std::string_view op_name(OpKind kind);
/// Parses names such as "matmul" or "conv2d"; throws ValueError otherwise.
OpKind parse_op_kind(std::string_view name);

// Elementwise binary ops. `b` may broadcast onto `a`: right-aligned, each
// extent of b either equal to a's or 1. A single-element b is a scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor shift(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
/// Elementwise x^p for strictly positive x.
Tensor pow(const Tensor& x, double p);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor broadcast(const Tensor& x, Shape shape);

/// x: C×H×W, weight: O×C×k×k, bias: O (or undefined). Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);
/// C×H×W -> C.
Tensor spatial_mean(const Tensor& x);
/// Sum of all entries, shape {1}.
Tensor sum(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes every vector along the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double epsilon);

/// C×H×W -> (H·W)×(C·k·k) patch matrix, stride 1, zero padding k/2.
/// Row p holds the k×k neighbourhood of position p (channel-major).
Tensor unfold(const Tensor& x, std::size_t k);
/// C×H×W -> C×kh×kw window starting at (row0, col0); outside is zero.
Tensor spatial_window(const Tensor& x, long row0, long col0, std::size_t kh,
                      std::size_t kw);
/// Rescales x so the sum of squares equals target_norm².
Tensor l2_normalize(const Tensor& x, double target_norm, double epsilon = 1e-12);

/// Residual l(s, z): s - z where z > threshold, max(0, s) elsewhere.
/// Labels are constants.
Tensor hinge_residual(const Tensor& scores, const Tensor& labels, double threshold);

/// Decodes regression deltas (dx, dy, dw, dh), shape {1,4} or {4}, into an
/// (x, y, w, h) box of shape {4}: the centre moves by delta·stride from
/// (anchor_x, anchor_y) and sizes scale by exp(dw), exp(dh).
Tensor box_decode(const Tensor& deltas, double anchor_x, double anchor_y,
                  double stride, double prev_w, double prev_h);

/// Attributes for the generic dispatcher.
struct OpAttrs {
  std::size_t axis = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  double scalar = 0.0;
  Shape shape;
};

/// Dispatches by kind; inputs are positional per op.
Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

}  // namespace dmt
