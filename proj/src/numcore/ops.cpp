#include "dmt/numcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dmt/numcore/errors.hpp"

namespace dmt {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;
using Inputs = std::vector<ImplPtr>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

constexpr std::array<std::pair<OpKind, std::string_view>, 23> kOpNames{{
    {OpKind::Add, "add"},
    {OpKind::Sub, "sub"},
    {OpKind::Mul, "elementwise-mul"},
    {OpKind::Scale, "scalar-scale"},
    {OpKind::Shift, "shift"},
    {OpKind::Matmul, "matmul"},
    {OpKind::Transpose, "transpose"},
    {OpKind::Reshape, "reshape"},
    {OpKind::Concat, "concat"},
    {OpKind::Relu, "relu"},
    {OpKind::Exp, "exp"},
    {OpKind::Conv2d, "conv2d"},
    {OpKind::SpatialMean, "spatial-mean"},
    {OpKind::Sum, "sum"},
    {OpKind::Broadcast, "broadcast"},
    {OpKind::Softmax, "softmax"},
    {OpKind::LayerNorm, "layer-norm"},
    {OpKind::Unfold, "unfold"},
    {OpKind::SpatialWindow, "spatial-window"},
    {OpKind::L2Normalize, "l2-normalize"},
    {OpKind::HingeResidual, "hinge-residual"},
    {OpKind::BoxDecode, "box-decode"},
    {OpKind::Pow, "pow"},
}};

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(std::string_view op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

// Builds the output tensor and, when any input is tracked, its tape node.
Tensor record(Shape shape, std::vector<double> data, OpKind kind,
              std::initializer_list<const Tensor*> inputs, Node::BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  }
  if (track) {
    auto node = std::make_shared<Node>();
    node->kind = kind;
    for (const Tensor* t : inputs) node->inputs.push_back(t->impl());
    node->backward = std::move(fn);
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Tensor record_many(Shape shape, std::vector<double> data, OpKind kind, std::span<const Tensor> inputs,
                   Node::BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    auto node = std::make_shared<Node>();
    node->kind = kind;
    for (const auto& t : inputs) node->inputs.push_back(t.impl());
    node->backward = std::move(fn);
    impl->requires_grad = true;
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

// Gradient buffer of an input, or null when it does not need one.
double* grad_of(ImplPtr& p) { return p->requires_grad ? p->grad_buffer().data() : nullptr; }

// Flat index into b for every flat index of a, under one-sided broadcasting.
// Empty result means the shapes are identical.
std::vector<std::size_t> broadcast_map(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return {};
  if (b.size() > a.size()) mismatch(op, a, b);
  const std::size_t offset = a.size() - b.size();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] != 1 && b[i] != a[offset + i]) mismatch(op, a, b);
  }
  const std::size_t n = shape_numel(a);
  std::vector<std::size_t> map(n);
  // strides of b expressed over a's axes (0 where broadcast)
  std::vector<std::size_t> bstride(a.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = b.size(); i-- > 0;) {
    bstride[offset + i] = (b[i] == 1) ? 0 : s;
    s *= b[i];
  }
  std::vector<std::size_t> idx(a.size(), 0);
  std::size_t bi = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    map[flat] = bi;
    for (std::size_t ax = a.size(); ax-- > 0;) {
      ++idx[ax];
      bi += bstride[ax];
      if (idx[ax] < a[ax]) break;
      bi -= bstride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return map;
}

enum class Binary { Add, Sub, Mul };

Tensor binary(Binary which, const Tensor& a, const Tensor& b) {
  const OpKind kind = which == Binary::Add ? OpKind::Add
                      : which == Binary::Sub ? OpKind::Sub
                                             : OpKind::Mul;
  const auto name = op_name(kind);
  auto map = broadcast_map(name, a.shape(), b.shape());
  auto ad = a.data();
  auto bd = b.data();
  const std::size_t n = ad.size();
  std::vector<double> out(n);
  auto bat = [&](std::size_t i) { return map.empty() ? bd[i] : bd[map[i]]; };
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bat(i);
    out[i] = which == Binary::Add ? ad[i] + y : which == Binary::Sub ? ad[i] - y : ad[i] * y;
  }
  return record(a.shape(), std::move(out), kind, {&a, &b},
                [which, map = std::move(map)](const std::vector<double>& g, Inputs& in) {
                  double* ga = grad_of(in[0]);
                  double* gb = grad_of(in[1]);
                  const auto& ad = in[0]->data;
                  const auto& bd = in[1]->data;
                  const std::size_t n = g.size();
                  for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t j = map.empty() ? i : map[i];
                    switch (which) {
                      case Binary::Add:
                        if (ga) ga[i] += g[i];
                        if (gb) gb[j] += g[i];
                        break;
                      case Binary::Sub:
                        if (ga) ga[i] += g[i];
                        if (gb) gb[j] -= g[i];
                        break;
                      case Binary::Mul:
                        if (ga) ga[i] += g[i] * bd[j];
                        if (gb) gb[j] += g[i] * ad[i];
                        break;
                    }
                  }
                });
}

// im2col for one C×H×W map: rows are (c, ki, kj), columns output positions.
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, double* cols) {
  const std::size_t npos = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * npos;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(pad);
          double* dst = row + oy * Wo;
          if (iy < 0 || iy >= static_cast<long>(H)) {
            std::fill(dst, dst + Wo, 0.0);
            continue;
          }
          const double* src = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(W)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t Ho, std::size_t Wo, double* x) {
  const std::size_t npos = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * npos;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          double* dst = x + (c * H + static_cast<std::size_t>(iy)) * W;
          const double* src = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  for (const auto& [k, name] : kOpNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

OpKind parse_op_kind(std::string_view name) {
  for (const auto& [k, n] : kOpNames) {
    if (n == name) return k;
  }
  throw ValueError("apply: unknown op kind '" + std::string(name) + "'");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::Mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * factor;
  return record(x.shape(), std::move(out), OpKind::Scale, {&x},
                [factor](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
                });
}

Tensor shift(const Tensor& x, double offset) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] + offset;
  return record(x.shape(), std::move(out), OpKind::Shift, {&x},
                [](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor relu(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  // subgradient at exactly 0 is 0
  return record(x.shape(), std::move(out), OpKind::Relu, {&x},
                [](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  const auto& xd = in[0]->data;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (xd[i] > 0.0) gx[i] += g[i];
                  }
                });
}

Tensor exp(const Tensor& x) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::exp(xd[i]);
  auto result = record(x.shape(), out, OpKind::Exp, {&x},
                       [y = out](const std::vector<double>& g, Inputs& in) {
                         double* gx = grad_of(in[0]);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
                       });
  return result;
}

Tensor pow(const Tensor& x, double p) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (!(xd[i] > 0.0)) throw NumericError("pow: input must be strictly positive, got " + std::to_string(xd[i]));
    out[i] = std::pow(xd[i], p);
  }
  return record(x.shape(), out, OpKind::Pow, {&x}, [p, y = out](const std::vector<double>& g, Inputs& in) {
    double* gx = grad_of(in[0]);
    const auto& xd = in[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * p * y[i] / xd[i];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) mismatch("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n);
  MMap(out.data(), m, n).noalias() = CMap(a.data().data(), m, k) * CMap(b.data().data(), k, n);
  return record({m, n}, std::move(out), OpKind::Matmul, {&a, &b},
                [m, k, n](const std::vector<double>& g, Inputs& in) {
                  CMap G(g.data(), m, n);
                  if (double* ga = grad_of(in[0])) {
                    MMap(ga, m, k).noalias() += G * CMap(in[1]->data.data(), k, n).transpose();
                  }
                  if (double* gb = grad_of(in[1])) {
                    MMap(gb, k, n).noalias() += CMap(in[0]->data.data(), m, k).transpose() * G;
                  }
                });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  MMap(out.data(), c, r) = CMap(x.data().data(), r, c).transpose();
  return record({c, r}, std::move(out), OpKind::Transpose, {&x},
                [r, c](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  MMap(gx, r, c) += CMap(g.data(), c, r).transpose();
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel() || shape.empty()) mismatch("reshape", x.shape(), shape);
  for (auto e : shape) {
    if (e == 0) mismatch("reshape", x.shape(), shape);
  }
  return record(std::move(shape), x.to_vector(), OpKind::Reshape, {&x},
                [](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ValueError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ValueError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) mismatch("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) mismatch("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.data() + o * w, w, out.data() + o * out_row + col);
    }
    widths.push_back(w);
    col += w;
  }
  return record_many(std::move(out_shape), std::move(out), OpKind::Concat, parts,
                     [outer, out_row, widths](const std::vector<double>& g, Inputs& in) {
                       std::size_t col = 0;
                       for (std::size_t p = 0; p < in.size(); ++p) {
                         const std::size_t w = widths[p];
                         if (double* gp = grad_of(in[p])) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t j = 0; j < w; ++j) {
                               gp[o * w + j] += g[o * out_row + col + j];
                             }
                           }
                         }
                         col += w;
                       }
                     });
}

Tensor broadcast(const Tensor& x, Shape shape) {
  auto map = broadcast_map("broadcast", shape, x.shape());
  auto xd = x.data();
  const std::size_t n = shape_numel(shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = map.empty() ? xd[i] : xd[map[i]];
  return record(std::move(shape), std::move(out), OpKind::Broadcast, {&x},
                [map = std::move(map)](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[map.empty() ? i : map[i]] += g[i];
                });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", weight, 4);
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != C || weight.dim(3) != k) mismatch("conv2d", x.shape(), weight.shape());
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  if (H + 2 * padding < k || W + 2 * padding < k) mismatch("conv2d", x.shape(), weight.shape());
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != O)) {
    mismatch("conv2d", weight.shape(), bias.shape());
  }
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - k) / stride + 1;
  const std::size_t K = C * k * k, P = Ho * Wo;
  // 1×1 stride-1 unpadded convolution reads the input directly as columns
  const bool direct = (k == 1 && stride == 1 && padding == 0);
  std::vector<double> cols;
  if (!direct) {
    cols.resize(K * P);
    im2col(x.data().data(), C, H, W, k, stride, padding, Ho, Wo, cols.data());
  }
  const double* colp = direct ? x.data().data() : cols.data();
  std::vector<double> out(O * P);
  MMap Y(out.data(), O, P);
  Y.noalias() = CMap(weight.data().data(), O, K) * CMap(colp, K, P);
  if (has_bias) {
    auto bd = bias.data();
    for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += bd[o];
  }
  const Tensor none;
  return record({O, Ho, Wo}, std::move(out), OpKind::Conv2d,
                {&x, &weight, has_bias ? &bias : &none},
                [=, cols = std::move(cols)](const std::vector<double>& g, Inputs& in) {
                  CMap G(g.data(), O, P);
                  const double* colp = direct ? in[0]->data.data() : cols.data();
                  if (double* gw = grad_of(in[1])) {
                    MMap(gw, O, K).noalias() += G * CMap(colp, K, P).transpose();
                  }
                  if (has_bias) {
                    if (double* gb = grad_of(in[2])) {
                      for (std::size_t o = 0; o < O; ++o) gb[o] += G.row(o).sum();
                    }
                  }
                  if (double* gx = grad_of(in[0])) {
                    if (direct) {
                      MMap(gx, K, P).noalias() += CMap(in[1]->data.data(), O, K).transpose() * G;
                    } else {
                      RowMat dcols = CMap(in[1]->data.data(), O, K).transpose() * G;
                      col2im(dcols.data(), C, H, W, k, stride, padding, Ho, Wo, gx);
                    }
                  }
                });
}

Tensor spatial_mean(const Tensor& x) {
  require_rank("spatial-mean", x, 3);
  const std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  auto xd = x.data();
  std::vector<double> out(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += xd[c * HW + i];
    out[c] = s / static_cast<double>(HW);
  }
  return record({C}, std::move(out), OpKind::SpatialMean, {&x},
                [C, HW](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t c = 0; c < C; ++c) {
                    const double v = g[c] / static_cast<double>(HW);
                    for (std::size_t i = 0; i < HW; ++i) gx[c * HW + i] += v;
                  }
                });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return record({1}, {s}, OpKind::Sum, {&x}, [](const std::vector<double>& g, Inputs& in) {
    double* gx = grad_of(in[0]);
    const std::size_t n = in[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[0];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ValueError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xd[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return record(s, out, OpKind::Softmax, {&x},
                [outer, inner, len, y = out](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t i = 0; i < inner; ++i) {
                      const std::size_t base = o * len * inner + i;
                      double dot = 0.0;
                      for (std::size_t j = 0; j < len; ++j) {
                        dot += g[base + j * inner] * y[base + j * inner];
                      }
                      for (std::size_t j = 0; j < len; ++j) {
                        const std::size_t p = base + j * inner;
                        gx[p] += y[p] * (g[p] - dot);
                      }
                    }
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon) {
  const std::size_t d = x.shape().back();
  if (d == 0) throw ShapeError("layer-norm: zero-length feature dimension");
  if (gamma.numel() != d) mismatch("layer-norm", x.shape(), gamma.shape());
  if (beta.numel() != d) mismatch("layer-norm", x.shape(), beta.shape());
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> out(xd.size()), xhat(xd.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = xd.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += v[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (v[j] - mean) * (v[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (v[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  return record(x.shape(), std::move(out), OpKind::LayerNorm, {&x, &gamma, &beta},
                [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  double* gg = grad_of(in[1]);
                  double* gb = grad_of(in[2]);
                  const auto& gamma = in[1]->data;
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double* gr = g.data() + r * d;
                    const double* h = xhat.data() + r * d;
                    if (gg) {
                      for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * h[j];
                    }
                    if (gb) {
                      for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                    }
                    if (gx) {
                      double mean_dh = 0.0, mean_dh_h = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gr[j] * gamma[j];
                        mean_dh += dh;
                        mean_dh_h += dh * h[j];
                      }
                      mean_dh *= inv_d;
                      mean_dh_h *= inv_d;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double dh = gr[j] * gamma[j];
                        gx[r * d + j] += inv_std[r] * (dh - mean_dh - h[j] * mean_dh_h);
                      }
                    }
                  }
                });
}

Tensor unfold(const Tensor& x, std::size_t k) {
  require_rank("unfold", x, 3);
  if (k % 2 == 0) throw ValueError("unfold: kernel size must be odd");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t P = H * W, K = C * k * k;
  // im2col gives K×P; the patch matrix is its transpose
  std::vector<double> cols(K * P);
  im2col(x.data().data(), C, H, W, k, 1, k / 2, H, W, cols.data());
  std::vector<double> out(P * K);
  MMap(out.data(), P, K) = CMap(cols.data(), K, P).transpose();
  return record({P, K}, std::move(out), OpKind::Unfold, {&x},
                [C, H, W, k, P, K](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  RowMat colsg = CMap(g.data(), P, K).transpose();
                  col2im(colsg.data(), C, H, W, k, 1, k / 2, H, W, gx);
                });
}

Tensor spatial_window(const Tensor& x, long row0, long col0, std::size_t kh, std::size_t kw) {
  require_rank("spatial-window", x, 3);
  if (kh == 0 || kw == 0) throw ValueError("spatial-window: empty window");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  auto xd = x.data();
  std::vector<double> out(C * kh * kw, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      const long r = row0 + static_cast<long>(i);
      if (r < 0 || r >= static_cast<long>(H)) continue;
      for (std::size_t j = 0; j < kw; ++j) {
        const long q = col0 + static_cast<long>(j);
        if (q < 0 || q >= static_cast<long>(W)) continue;
        out[(c * kh + i) * kw + j] = xd[(c * H + r) * W + q];
      }
    }
  }
  return record({C, kh, kw}, std::move(out), OpKind::SpatialWindow, {&x},
                [=](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  for (std::size_t c = 0; c < C; ++c) {
                    for (std::size_t i = 0; i < kh; ++i) {
                      const long r = row0 + static_cast<long>(i);
                      if (r < 0 || r >= static_cast<long>(H)) continue;
                      for (std::size_t j = 0; j < kw; ++j) {
                        const long q = col0 + static_cast<long>(j);
                        if (q < 0 || q >= static_cast<long>(W)) continue;
                        gx[(c * H + r) * W + q] += g[(c * kh + i) * kw + j];
                      }
                    }
                  }
                });
}

Tensor l2_normalize(const Tensor& x, double target_norm, double epsilon) {
  auto xd = x.data();
  double ss = 0.0;
  for (double v : xd) ss += v * v;
  const double norm = std::sqrt(ss + epsilon);
  const double f = target_norm / norm;
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * f;
  return record(x.shape(), std::move(out), OpKind::L2Normalize, {&x},
                [f, norm](const std::vector<double>& g, Inputs& in) {
                  double* gx = grad_of(in[0]);
                  const auto& xd = in[0]->data;
                  double dot = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * xd[i];
                  const double c = dot / (norm * norm);
                  for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * (g[i] - xd[i] * c);
                });
}

Tensor hinge_residual(const Tensor& scores, const Tensor& labels, double threshold) {
  if (scores.shape() != labels.shape()) {
    mismatch("hinge-residual", scores.shape(), labels.shape());
  }
  auto sd = scores.data();
  auto zd = labels.data();
  std::vector<double> out(sd.size());
  std::vector<char> pass(sd.size());
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (zd[i] > threshold) {
      out[i] = sd[i] - zd[i];
      pass[i] = 1;
    } else {
      out[i] = sd[i] > 0.0 ? sd[i] : 0.0;
      pass[i] = sd[i] > 0.0;
    }
  }
  return record(scores.shape(), std::move(out), OpKind::HingeResidual, {&scores},
                [pass = std::move(pass)](const std::vector<double>& g, Inputs& in) {
                  double* gs = grad_of(in[0]);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (pass[i]) gs[i] += g[i];
                  }
                });
}

Tensor box_decode(const Tensor& deltas, double anchor_x, double anchor_y, double stride,
                  double prev_w, double prev_h) {
  if (deltas.numel() != 4) throw ShapeError("box-decode: expected 4 deltas, got " + shape_str(deltas.shape()));
  auto d = deltas.data();
  const double w = prev_w * std::exp(d[2]);
  const double h = prev_h * std::exp(d[3]);
  const double cx = anchor_x + d[0] * stride;
  const double cy = anchor_y + d[1] * stride;
  return record({4}, {cx - 0.5 * w, cy - 0.5 * h, w, h}, OpKind::BoxDecode, {&deltas},
                [w, h, stride](const std::vector<double>& g, Inputs& in) {
                  double* gd = grad_of(in[0]);
                  gd[0] += g[0] * stride;
                  gd[1] += g[1] * stride;
                  gd[2] += (g[2] - 0.5 * g[0]) * w;
                  gd[3] += (g[3] - 0.5 * g[1]) * h;
                });
}

Tensor apply(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (in.size() < lo || in.size() > hi) {
      throw ValueError(std::string(op_name(kind)) + ": wrong number of inputs (" +
                       std::to_string(in.size()) + ")");
    }
  };
  switch (kind) {
    case OpKind::Add: arity(2, 2); return add(in[0], in[1]);
    case OpKind::Sub: arity(2, 2); return sub(in[0], in[1]);
    case OpKind::Mul: arity(2, 2); return mul(in[0], in[1]);
    case OpKind::Scale: arity(1, 1); return scale(in[0], attrs.scalar);
    case OpKind::Shift: arity(1, 1); return shift(in[0], attrs.scalar);
    case OpKind::Matmul: arity(2, 2); return matmul(in[0], in[1]);
    case OpKind::Transpose: arity(1, 1); return transpose(in[0]);
    case OpKind::Reshape: arity(1, 1); return reshape(in[0], attrs.shape);
    case OpKind::Concat: arity(1, in.size()); return concat(in, attrs.axis);
    case OpKind::Relu: arity(1, 1); return relu(in[0]);
    case OpKind::Exp: arity(1, 1); return exp(in[0]);
    case OpKind::Pow: arity(1, 1); return pow(in[0], attrs.scalar);
    case OpKind::Conv2d:
      arity(2, 3);
      return conv2d(in[0], in[1], in.size() == 3 ? in[2] : Tensor{}, attrs.stride, attrs.padding);
    case OpKind::SpatialMean: arity(1, 1); return spatial_mean(in[0]);
    case OpKind::Sum: arity(1, 1); return sum(in[0]);
    case OpKind::Broadcast: arity(1, 1); return broadcast(in[0], attrs.shape);
    case OpKind::Softmax: arity(1, 1); return softmax(in[0], attrs.axis);
    case OpKind::LayerNorm: arity(3, 3); return layer_norm(in[0], in[1], in[2], attrs.scalar);
    case OpKind::Unfold: arity(1, 1); return unfold(in[0], attrs.shape.empty() ? 3 : attrs.shape[0]);
    case OpKind::L2Normalize: arity(1, 1); return l2_normalize(in[0], attrs.scalar);
    case OpKind::HingeResidual: arity(2, 2); return hinge_residual(in[0], in[1], attrs.scalar);
    case OpKind::SpatialWindow:
    case OpKind::BoxDecode:
      break;
  }
  throw ValueError("apply: op kind '" + std::string(op_name(kind)) +
                   "' needs its dedicated entry point");
}

}  // namespace dmt
