#pragma once

#include <cmath>
#include <vector>

#include "dmt/numcore/ops.hpp"
#include "dmt/numcore/rng.hpp"
#include "dmt/numcore/tensor.hpp"

namespace dmt::testing {

inline Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor random_param(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor(std::move(shape), rng, lo, hi).set_requires_grad(true);
}

/// Scalar probe sum(x ⊙ R) with a fixed random R, used to turn any tensor
/// output into a well-conditioned scalar for gradient checks.
inline Tensor probe(const Tensor& x, std::uint64_t seed = 99) {
  SplitMix64 rng(seed);
  return sum(mul(x, random_tensor(x.shape(), rng)));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dmt::testing
