#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dmt/attention/attention.hpp"
#include "dmt/numcore/checkpoint.hpp"
#include "dmt/numcore/rng.hpp"
#include "dmt/numcore/tensor.hpp"

namespace dmt::fusion {

struct CMIMConfig {
  std::size_t channels = 32;  // C
  std::size_t inner = 64;     // C_i, equals attention.d_model
  std::size_t layers = 2;
  attention::AttentionConfig attention = attention::AttentionConfig::desk();
  /// Add positional encodings at every CMA layer rather than only the first.
  bool reencode_each_layer = true;

  static CMIMConfig desk();   // C=32, C_i=64
  static CMIMConfig paper();  // C=1024, C_i=256
  void validate() const;
};

struct CMIMParams {
  Tensor reduce_w;  // C_i×C×1×1
  Tensor reduce_b;  // C_i
  Tensor expand_w;  // C×C_i×1×1
  Tensor expand_b;  // C
  std::vector<attention::CMAParams> layers;

  static CMIMParams init(const CMIMConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

struct SPMParams {
  Tensor v;      // C
  Tensor alpha;  // {1}
  Tensor beta;   // {1}

  /// V = 0.01, alpha = beta = 0.5.
  static SPMParams init(std::size_t channels);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// reduce -> flatten -> CMA stack (depth queries RGB) -> unflatten -> expand.
Tensor cmim(const Tensor& i0, const Tensor& d0, const CMIMParams& params, const CMIMConfig& config);

/// F1 = D0 + V⊙F0; alpha·I0 + beta·F1.
Tensor spm(const Tensor& f0, const Tensor& i0, const Tensor& d0, const SPMParams& params);

/// F1 = I0 + V⊙F0; alpha·D0 + beta·F1.
Tensor spm_swapped(const Tensor& f0, const Tensor& i0, const Tensor& d0, const SPMParams& params);

/// I0 + D0.
Tensor base_fuse(const Tensor& i0, const Tensor& d0);

enum class FusionMode {
  Full,        // spm(cmim(I, D), I, D)
  Base,        // I + D
  CmimOnly,    // cmim(I, D)
  SpmOnly,     // spm(I + D, I, D)
  SwappedSpm,  // spm_swapped(cmim(I, D), I, D)
};

std::string fusion_mode_name(FusionMode mode);
/// Accepts "full", "base", "cmim-only", "spm-only", "swapped-spm".
FusionMode parse_fusion_mode(const std::string& name);

/// The fusion network shared by the template and search branches.
class FusionNetwork {
 public:
  FusionNetwork(const CMIMConfig& config, FusionMode mode, SplitMix64& rng);

  Tensor fuse(const Tensor& i0, const Tensor& d0) const;
  /// Parameters the current mode actually uses, named "fusion.*".
  ParamSet parameters() const;

  const CMIMConfig& config() const { return config_; }
  FusionMode mode() const { return mode_; }
  CMIMParams& cmim_params() { return cmim_; }
  SPMParams& spm_params() { return spm_; }
  const CMIMParams& cmim_params() const { return cmim_; }
  const SPMParams& spm_params() const { return spm_; }

 private:
  CMIMConfig config_;
  FusionMode mode_;
  CMIMParams cmim_;
  SPMParams spm_;
};

}  // namespace dmt::fusion
