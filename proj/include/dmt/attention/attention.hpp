#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dmt/numcore/checkpoint.hpp"
#include "dmt/numcore/rng.hpp"
#include "dmt/numcore/tensor.hpp"

namespace dmt::attention {

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t d_k = 16;
  std::size_t d_v = 16;
  std::size_t ffn_hidden = 256;
  double layer_norm_epsilon = 1e-5;
  bool use_positional_encoding = true;
  /// Also add the encoding to the value sequence (off: queries and keys only).
  bool encode_values = false;

  static AttentionConfig paper();  // h=8, d_model=256, d_k=d_v=32
  static AttentionConfig desk();   // h=4, d_model=64, d_k=d_v=16
  /// Throws ValueError on inconsistent widths.
  void validate() const;
};

struct MHAParams {
  std::vector<Tensor> w_q;  // per head, d_model×d_k
  std::vector<Tensor> w_k;  // per head, d_model×d_k
  std::vector<Tensor> w_v;  // per head, d_model×d_v
  Tensor w_o;               // (h·d_v)×d_model

  static MHAParams init(const AttentionConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

struct FFNParams {
  Tensor w1;  // d_model×hidden
  Tensor b1;  // hidden
  Tensor w2;  // hidden×d_model
  Tensor b2;  // d_model

  static FFNParams init(const AttentionConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(std::size_t width);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// One cross-modal attention block: cross-attention plus FFN, post-norm.
struct CMAParams {
  MHAParams mha;
  FFNParams ffn;
  LayerNormParams norm1;
  LayerNormParams norm2;

  static CMAParams init(const AttentionConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// softmax(Q Kᵀ / sqrt(d_k)) V for Q: Nq×d_k, K: Nk×d_k, V: Nk×d_v.
Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v);

/// Concat(head_1 .. head_h) W_O with head_i = sdpa(Q W_Q_i, K W_K_i, V W_V_i).
Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const MHAParams& params,
           const AttentionConfig& config);

/// relu(x W1 + b1) W2 + b2, row by row.
Tensor ffn(const Tensor& x, const FFNParams& params);

/// Fixed sine/cosine table of shape (H·W)×d_model, row-major positions.
/// Channels [0, d/2) encode the row index, [d/2, d) the column index;
/// within each half, channel 2i is sin(p / 10000^(2i/(d/2))) and 2i+1 the
/// matching cosine.
Tensor pos_encoding_2d(std::size_t rows, std::size_t cols, std::size_t d_model);

/// f = LN(D + MHA(D + pe_D, I + pe_I, I)); out = LN(f + FFN(f)).
/// D: N×d_model is the query side, I: M×d_model the key/value side.
/// Encodings may be undefined tensors when the config disables them.
Tensor cma_block(const Tensor& d_seq, const Tensor& i_seq, const CMAParams& params,
                 const AttentionConfig& config, const Tensor& pe_d, const Tensor& pe_i);

}  // namespace dmt::attention
