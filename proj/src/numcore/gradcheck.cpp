#include "dmt/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmt/numcore/autograd.hpp"
#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/rng.hpp"

namespace dmt {

GradCheckResult finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ValueError("finite_diff_check: epsilon must be positive");
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tensor loss = f();
    if (!std::isfinite(loss.item())) throw NumericError("finite_diff_check: non-finite f at theta");
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  auto eval = [&] {
    NoGradGuard guard;
    const double v = f().item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite f evaluation");
    return v;
  };

  SplitMix64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].mutable_data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      // partial Fisher-Yates
      for (std::size_t i = 0; i < options.max_coords_per_param; ++i) {
        std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
      }
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t idx : coords) {
      const double saved = data[idx];
      data[idx] = saved + options.epsilon;
      const double fp = eval();
      data[idx] = saved - options.epsilon;
      const double fm = eval();
      data[idx] = saved;
      const double numeric = (fp - fm) / (2.0 * options.epsilon);
      const double ga = analytic[pi][idx];
      const double err = std::abs(ga - numeric) / std::max(1e-12, std::abs(ga) + std::abs(numeric));
      ++result.coords_checked;
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(err, result.max_rel_error);
        if (err >= result.max_rel_error) {
          result.worst_param = pi;
          result.worst_index = idx;
          result.worst_analytic = ga;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace dmt
