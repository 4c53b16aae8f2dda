#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmt/numcore/tensor.hpp"

namespace dmt {

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Coordinates checked per parameter tensor; 0 checks all of them.
  /// When limited, coordinates are drawn with a seeded generator.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Per coordinate the error is |g_a - g_n| / max(1e-12, |g_a| + |g_n|); the
/// result is the maximum. `f` must be deterministic. Points where f is not
/// differentiable (e.g. |x| at 0) are outside the contract.
GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  const GradCheckOptions& options = {});

}  // namespace dmt
