#include "dmt/attention/attention.hpp"

#include <cmath>

#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/ops.hpp"

namespace dmt::attention {

AttentionConfig AttentionConfig::paper() {
  AttentionConfig c;
  c.heads = 8;
  c.d_model = 256;
  c.d_k = 32;
  c.d_v = 32;
  c.ffn_hidden = 4 * 256;
  return c;
}

AttentionConfig AttentionConfig::desk() { return AttentionConfig{}; }

void AttentionConfig::validate() const {
  if (heads == 0 || d_model == 0 || d_k == 0 || d_v == 0 || ffn_hidden == 0) {
    throw ValueError("attention config: all widths must be positive");
  }
  if (use_positional_encoding && d_model % 4 != 0) {
    throw ValueError("attention config: d_model must be divisible by 4 for 2D encodings");
  }
}

MHAParams MHAParams::init(const AttentionConfig& config, SplitMix64& rng) {
  config.validate();
  MHAParams p;
  for (std::size_t h = 0; h < config.heads; ++h) {
    p.w_q.push_back(uniform_init({config.d_model, config.d_k}, config.d_model, rng));
    p.w_k.push_back(uniform_init({config.d_model, config.d_k}, config.d_model, rng));
    p.w_v.push_back(uniform_init({config.d_model, config.d_v}, config.d_model, rng));
  }
  p.w_o = uniform_init({config.heads * config.d_v, config.d_model}, config.heads * config.d_v, rng);
  return p;
}

void MHAParams::collect(ParamSet& out, const std::string& prefix) const {
  for (std::size_t h = 0; h < w_q.size(); ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    out.add(hp + ".wq", w_q[h]);
    out.add(hp + ".wk", w_k[h]);
    out.add(hp + ".wv", w_v[h]);
  }
  out.add(prefix + ".wo", w_o);
}

FFNParams FFNParams::init(const AttentionConfig& config, SplitMix64& rng) {
  FFNParams p;
  p.w1 = uniform_init({config.d_model, config.ffn_hidden}, config.d_model, rng);
  p.b1 = uniform_init({config.ffn_hidden}, config.d_model, rng);
  p.w2 = uniform_init({config.ffn_hidden, config.d_model}, config.ffn_hidden, rng);
  p.b2 = uniform_init({config.d_model}, config.ffn_hidden, rng);
  return p;
}

void FFNParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".w1", w1);
  out.add(prefix + ".b1", b1);
  out.add(prefix + ".w2", w2);
  out.add(prefix + ".b2", b2);
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {param(Tensor::full({width}, 1.0)), param(Tensor::zeros({width}))};
}

void LayerNormParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".gamma", gamma);
  out.add(prefix + ".beta", beta);
}

CMAParams CMAParams::init(const AttentionConfig& config, SplitMix64& rng) {
  CMAParams p;
  p.mha = MHAParams::init(config, rng);
  p.ffn = FFNParams::init(config, rng);
  p.norm1 = LayerNormParams::init(config.d_model);
  p.norm2 = LayerNormParams::init(config.d_model);
  return p;
}

void CMAParams::collect(ParamSet& out, const std::string& prefix) const {
  mha.collect(out, prefix + ".mha");
  ffn.collect(out, prefix + ".ffn");
  norm1.collect(out, prefix + ".norm1");
  norm2.collect(out, prefix + ".norm2");
}

Tensor sdpa(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw ShapeError("sdpa: expected matrices, got " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  if (q.dim(1) != k.dim(1)) {
    throw ShapeError("sdpa: query/key width mismatch " + shape_str(q.shape()) + " vs " +
                     shape_str(k.shape()));
  }
  if (k.dim(0) != v.dim(0)) {
    throw ShapeError("sdpa: key/value count mismatch " + shape_str(k.shape()) + " vs " +
                     shape_str(v.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(k.dim(1)));
  Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  return matmul(softmax(logits, 1), v);
}

Tensor mha(const Tensor& q, const Tensor& k, const Tensor& v, const MHAParams& params,
           const AttentionConfig& config) {
  const std::size_t h = config.heads;
  if (params.w_q.size() != h || params.w_k.size() != h || params.w_v.size() != h) {
    throw ShapeError("mha: params hold " + std::to_string(params.w_q.size()) +
                     " heads, config expects " + std::to_string(h));
  }
  if (params.w_o.shape() != Shape{h * config.d_v, config.d_model}) {
    throw ShapeError("mha: W_O shape " + shape_str(params.w_o.shape()) + " does not match config");
  }
  for (const Tensor* x : {&q, &k, &v}) {
    if (x->rank() != 2 || x->dim(1) != config.d_model) {
      throw ShapeError("mha: input " + shape_str(x->shape()) + " is not N×" +
                       std::to_string(config.d_model));
    }
  }
  std::vector<Tensor> heads;
  heads.reserve(h);
  for (std::size_t i = 0; i < h; ++i) {
    heads.push_back(sdpa(matmul(q, params.w_q[i]), matmul(k, params.w_k[i]),
                         matmul(v, params.w_v[i])));
  }
  return matmul(concat(heads, 1), params.w_o);
}

Tensor ffn(const Tensor& x, const FFNParams& params) {
  if (x.rank() != 2 || x.dim(1) != params.w1.dim(0)) {
    throw ShapeError("ffn: input " + shape_str(x.shape()) + " does not match W1 " +
                     shape_str(params.w1.shape()));
  }
  Tensor hidden = relu(add(matmul(x, params.w1), params.b1));
  return add(matmul(hidden, params.w2), params.b2);
}

Tensor pos_encoding_2d(std::size_t rows, std::size_t cols, std::size_t d_model) {
  if (d_model == 0 || d_model % 4 != 0) {
    throw ValueError("pos_encoding_2d: d_model " + std::to_string(d_model) +
                     " is not divisible by 4");
  }
  const std::size_t half = d_model / 2;
  std::vector<double> table(rows * cols * d_model);
  auto encode = [half](double pos, double* dst) {
    for (std::size_t i = 0; i < half; i += 2) {
      const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(half));
      dst[i] = std::sin(pos / freq);
      dst[i + 1] = std::cos(pos / freq);
    }
  };
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double* row = table.data() + (r * cols + c) * d_model;
      encode(static_cast<double>(r), row);
      encode(static_cast<double>(c), row + half);
    }
  }
  return Tensor::from({rows * cols, d_model}, std::move(table));
}

Tensor cma_block(const Tensor& d_seq, const Tensor& i_seq, const CMAParams& params,
                 const AttentionConfig& config, const Tensor& pe_d, const Tensor& pe_i) {
  if (d_seq.rank() != 2 || i_seq.rank() != 2 || d_seq.dim(1) != config.d_model ||
      i_seq.dim(1) != config.d_model) {
    throw ShapeError("cma_block: width mismatch " + shape_str(d_seq.shape()) + " vs " +
                     shape_str(i_seq.shape()) + " (d_model " + std::to_string(config.d_model) + ")");
  }
  Tensor query = d_seq, key = i_seq, value = i_seq;
  if (config.use_positional_encoding) {
    if (!pe_d.defined() || !pe_i.defined()) {
      throw ValueError("cma_block: positional encoding required by config but not supplied");
    }
    query = add(d_seq, pe_d);
    key = add(i_seq, pe_i);
    if (config.encode_values) value = key;
  }
  Tensor attended = mha(query, key, value, params.mha, config);
  const double eps = config.layer_norm_epsilon;
  Tensor f = layer_norm(add(d_seq, attended), params.norm1.gamma, params.norm1.beta, eps);
  return layer_norm(add(f, ffn(f, params.ffn)), params.norm2.gamma, params.norm2.beta, eps);
}

}  // namespace dmt::attention
