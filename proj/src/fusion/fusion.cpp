#include "dmt/fusion/fusion.hpp"

#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/ops.hpp"

namespace dmt::fusion {

namespace {

void require_same_shape(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_feature_map(const char* what, const Tensor& x) {
  if (x.rank() != 3) throw ShapeError(std::string(what) + ": expected C×H×W, got " + shape_str(x.shape()));
}

Tensor channel_scale(const Tensor& x, const Tensor& v, const char* what) {
  if (v.numel() != x.dim(0)) {
    throw ShapeError(std::string(what) + ": filter vector has " + std::to_string(v.numel()) +
                     " entries for " + std::to_string(x.dim(0)) + " channels");
  }
  return mul(x, reshape(v, {x.dim(0), 1, 1}));
}

Tensor spm_impl(const Tensor& f0, const Tensor& keep, const Tensor& blend, const SPMParams& p,
                const char* what) {
  require_feature_map(what, f0);
  require_same_shape(what, f0, keep);
  require_same_shape(what, f0, blend);
  Tensor f1 = add(keep, channel_scale(f0, p.v, what));
  return add(mul(blend, p.alpha), mul(f1, p.beta));
}

}  // namespace

CMIMConfig CMIMConfig::desk() { return CMIMConfig{}; }

CMIMConfig CMIMConfig::paper() {
  CMIMConfig c;
  c.channels = 1024;
  c.inner = 256;
  c.attention = attention::AttentionConfig::paper();
  return c;
}

void CMIMConfig::validate() const {
  if (channels == 0 || inner == 0) throw ValueError("cmim config: channel widths must be positive");
  if (layers < 1 || layers > 3) {
    throw ValueError("cmim config: layer count " + std::to_string(layers) + " outside {1, 2, 3}");
  }
  if (attention.d_model != inner) {
    throw ValueError("cmim config: attention width " + std::to_string(attention.d_model) +
                     " differs from C_i " + std::to_string(inner));
  }
  attention.validate();
}

CMIMParams CMIMParams::init(const CMIMConfig& config, SplitMix64& rng) {
  config.validate();
  CMIMParams p;
  p.reduce_w = uniform_init({config.inner, config.channels, 1, 1}, config.channels, rng);
  p.reduce_b = uniform_init({config.inner}, config.channels, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    p.layers.push_back(attention::CMAParams::init(config.attention, rng));
  }
  p.expand_w = uniform_init({config.channels, config.inner, 1, 1}, config.inner, rng);
  p.expand_b = uniform_init({config.channels}, config.inner, rng);
  return p;
}

void CMIMParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".reduce.w", reduce_w);
  out.add(prefix + ".reduce.b", reduce_b);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].collect(out, prefix + ".layer" + std::to_string(l));
  }
  out.add(prefix + ".expand.w", expand_w);
  out.add(prefix + ".expand.b", expand_b);
}

SPMParams SPMParams::init(std::size_t channels) {
  return {param(Tensor::full({channels}, 0.01)), param(Tensor::full({1}, 0.5)),
          param(Tensor::full({1}, 0.5))};
}

void SPMParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".V", v);
  out.add(prefix + ".alpha", alpha);
  out.add(prefix + ".beta", beta);
}

Tensor cmim(const Tensor& i0, const Tensor& d0, const CMIMParams& params, const CMIMConfig& config) {
  require_feature_map("cmim", i0);
  require_same_shape("cmim", i0, d0);
  if (i0.dim(0) != config.channels) {
    throw ShapeError("cmim: input has " + std::to_string(i0.dim(0)) + " channels, config expects " +
                     std::to_string(config.channels));
  }
  if (params.layers.size() != config.layers) {
    throw ShapeError("cmim: params hold " + std::to_string(params.layers.size()) + " layers, config expects " +
                     std::to_string(config.layers));
  }
  const std::size_t h = i0.dim(1), w = i0.dim(2), ci = config.inner;
  auto flatten = [&](const Tensor& x) {
    return transpose(reshape(conv2d(x, params.reduce_w, params.reduce_b, 1, 0), {ci, h * w}));
  };
  Tensor i_seq = flatten(i0);
  Tensor d_seq = flatten(d0);

  Tensor pe;
  if (config.attention.use_positional_encoding) pe = attention::pos_encoding_2d(h, w, ci);
  auto later = config.attention;
  if (!config.reencode_each_layer) later.use_positional_encoding = false;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& cfg = l == 0 ? config.attention : later;
    d_seq = attention::cma_block(d_seq, i_seq, params.layers[l], cfg, pe, pe);
  }
  Tensor map = reshape(transpose(d_seq), {ci, h, w});
  return conv2d(map, params.expand_w, params.expand_b, 1, 0);
}

Tensor spm(const Tensor& f0, const Tensor& i0, const Tensor& d0, const SPMParams& params) {
  return spm_impl(f0, d0, i0, params, "spm");
}

Tensor spm_swapped(const Tensor& f0, const Tensor& i0, const Tensor& d0, const SPMParams& params) {
  return spm_impl(f0, i0, d0, params, "spm_swapped");
}

Tensor base_fuse(const Tensor& i0, const Tensor& d0) {
  require_same_shape("base_fuse", i0, d0);
  return add(i0, d0);
}

std::string fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::Full: return "full";
    case FusionMode::Base: return "base";
    case FusionMode::CmimOnly: return "cmim-only";
    case FusionMode::SpmOnly: return "spm-only";
    case FusionMode::SwappedSpm: return "swapped-spm";
  }
  return "full";
}

FusionMode parse_fusion_mode(const std::string& name) {
  for (auto m : {FusionMode::Full, FusionMode::Base, FusionMode::CmimOnly, FusionMode::SpmOnly,
                 FusionMode::SwappedSpm}) {
    if (fusion_mode_name(m) == name) return m;
  }
  throw ValueError("unknown fusion mode '" + name + "' (expected full, base, cmim-only, spm-only, swapped-spm)");
}

FusionNetwork::FusionNetwork(const CMIMConfig& config, FusionMode mode, SplitMix64& rng)
    : config_(config), mode_(mode), cmim_(CMIMParams::init(config, rng)), spm_(SPMParams::init(config.channels)) {}

Tensor FusionNetwork::fuse(const Tensor& i0, const Tensor& d0) const {
  switch (mode_) {
    case FusionMode::Full: return spm(cmim(i0, d0, cmim_, config_), i0, d0, spm_);
    case FusionMode::Base: return base_fuse(i0, d0);
    case FusionMode::CmimOnly: return cmim(i0, d0, cmim_, config_);
    case FusionMode::SpmOnly: return spm(base_fuse(i0, d0), i0, d0, spm_);
    case FusionMode::SwappedSpm: return spm_swapped(cmim(i0, d0, cmim_, config_), i0, d0, spm_);
  }
  throw ValueError("fusion: invalid mode");
}

ParamSet FusionNetwork::parameters() const {
  ParamSet out;
  if (mode_ != FusionMode::Base && mode_ != FusionMode::SpmOnly) cmim_.collect(out, "fusion.cmim");
  if (mode_ != FusionMode::Base && mode_ != FusionMode::CmimOnly) spm_.collect(out, "fusion.spm");
  return out;
}

}  // namespace dmt::fusion
