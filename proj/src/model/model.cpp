#include "dmt/model/model.hpp"

#include <cmath>

#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/ops.hpp"

namespace dmt::model {

BackboneConfig BackboneConfig::desk() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::paper() {
  BackboneConfig c;
  c.input_size = 288;
  c.widths = {64, 256, 512, 1024};
  return c;
}

void BackboneConfig::validate() const {
  if (widths.empty()) throw ValueError("backbone: at least one stage required");
  for (auto w : widths) {
    if (w == 0) throw ValueError("backbone: stage widths must be positive");
  }
  if (input_size == 0 || input_size % downsample() != 0) {
    throw ValueError("backbone: input size " + std::to_string(input_size) + " not divisible by n=" +
                     std::to_string(downsample()));
  }
}

StreamParams StreamParams::init(const BackboneConfig& config, SplitMix64& rng) {
  StreamParams p;
  std::size_t in = 3;
  for (auto out : config.widths) {
    p.weights.push_back(uniform_init({out, in, 3, 3}, in * 9, rng));
    p.biases.push_back(uniform_init({out}, in * 9, rng));
    in = out;
  }
  return p;
}

void StreamParams::collect(ParamSet& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.add(prefix + ".conv" + std::to_string(i) + ".w", weights[i]);
    out.add(prefix + ".conv" + std::to_string(i) + ".b", biases[i]);
  }
}

BackboneParams BackboneParams::init(const BackboneConfig& config, SplitMix64& rng) {
  config.validate();
  BackboneParams p;
  p.rgb = StreamParams::init(config, rng);
  p.depth = config.share_weights_across_modalities ? p.rgb : StreamParams::init(config, rng);
  return p;
}

void BackboneParams::collect(ParamSet& out, const std::string& prefix, const BackboneConfig& config) const {
  if (config.share_weights_across_modalities) {
    rgb.collect(out, prefix + ".shared");
    return;
  }
  rgb.collect(out, prefix + ".rgb");
  depth.collect(out, prefix + ".depth");
}

Tensor backbone_stream(const Tensor& image, const StreamParams& params) {
  Tensor x = image;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    x = relu(conv2d(x, params.weights[i], params.biases[i], 2, 1));
  }
  return x;
}

std::pair<Tensor, Tensor> extract(const Tensor& rgb_patch, const Tensor& depth_patch, const BackboneParams& params,
                                  const BackboneConfig& config) {
  for (const Tensor* p : {&rgb_patch, &depth_patch}) {
    if (p->rank() != 3 || p->dim(0) != 3 || p->dim(1) != p->dim(2)) {
      throw ShapeError("extract: expected a 3×S×S patch, got " + shape_str(p->shape()));
    }
    if (p->dim(1) % config.downsample() != 0) {
      throw ValueError("extract: patch side " + std::to_string(p->dim(1)) + " not divisible by n=" +
                       std::to_string(config.downsample()));
    }
  }
  return {backbone_stream(rgb_patch, params.rgb), backbone_stream(depth_patch, params.depth)};
}

void LabelConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValueError("labels: threshold T must lie in (0, 1)");
  if (!(sigma_cells > 0.0)) throw ValueError("labels: sigma must be positive");
}

Tensor gaussian_labels(const BBox& box, std::size_t rows, std::size_t cols, double stride,
                       const LabelConfig& config) {
  config.validate();
  if (!box.present()) throw ValueError("gaussian_labels: degenerate box");
  const double cx = box.cx(), cy = box.cy();
  if (cx < 0.0 || cy < 0.0 || cx >= cols * stride || cy >= rows * stride) {
    throw ValueError("gaussian_labels: box centre outside the patch");
  }
  const double c_col = std::floor(cx / stride), c_row = std::floor(cy / stride);
  const double sigma = config.sigma_cells * std::sqrt(box.area()) / stride;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> z(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - c_row, dc = static_cast<double>(c) - c_col;
      z[r * cols + c] = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return Tensor::from({rows, cols}, std::move(z));
}

void FilterConfig::validate() const {
  if (size == 0 || size % 2 == 0) throw ValueError("filter: spatial extent must be odd");
  if (iterations == 0) throw ValueError("filter: N_iter must be at least 1");
  if (!(step > 0.0)) throw ValueError("filter: step size must be positive");
  if (!(feature_bound > 0.0 && feature_bound < 2.0)) throw ValueError("filter: feature_bound must lie in (0, 2)");
}

namespace {

void check_samples(const char* what, std::span<const Tensor> features, std::span<const Tensor> labels) {
  if (features.empty()) throw ValueError(std::string(what) + ": no samples");
  if (features.size() != labels.size()) {
    throw ValueError(std::string(what) + ": " + std::to_string(features.size()) + " feature maps vs " +
                     std::to_string(labels.size()) + " label maps");
  }
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& x = features[i];
    if (x.rank() != 3 || labels[i].shape() != Shape{x.dim(1), x.dim(2)}) {
      throw ShapeError(std::string(what) + ": sample " + std::to_string(i) + " features " + shape_str(x.shape()) +
                       " vs labels " + shape_str(labels[i].shape()));
    }
  }
}

Tensor as_column(const Tensor& label) { return reshape(label, {label.numel(), 1}); }

}  // namespace

Tensor classify(const Tensor& filter, const Tensor& features) {
  if (filter.rank() != 3 || features.rank() != 3 || filter.dim(0) != features.dim(0) ||
      filter.dim(1) != filter.dim(2) || filter.dim(1) % 2 == 0) {
    throw ShapeError("classify: filter " + shape_str(filter.shape()) + " does not fit features " +
                     shape_str(features.shape()));
  }
  const std::size_t k = filter.dim(1);
  Tensor col = reshape(filter, {filter.numel(), 1});
  return reshape(matmul(unfold(features, k), col), {features.dim(1), features.dim(2)});
}

Tensor filter_objective(const Tensor& filter, std::span<const Tensor> features, std::span<const Tensor> labels,
                        double threshold) {
  check_samples("filter_objective", features, labels);
  Tensor total;
  for (std::size_t i = 0; i < features.size(); ++i) {
    Tensor r = hinge_residual(classify(filter, features[i]), labels[i], threshold);
    Tensor term = sum(mul(r, r));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(features.size()));
}

FilterResult learn_filter(std::span<const Tensor> features, std::span<const Tensor> labels,
                          const FilterConfig& config, const Tensor& init) {
  config.validate();
  check_samples("learn_filter", features, labels);
  const std::size_t c = features[0].dim(0), k = config.size;
  for (const auto& x : features) {
    for (double v : x.data()) {
      if (!std::isfinite(v)) throw NumericError("learn_filter: non-finite feature value");
    }
  }
  const Shape fshape{c, k, k};
  if (init.defined() && init.shape() != fshape) {
    throw ShapeError("learn_filter: initial filter " + shape_str(init.shape()) + ", expected " + shape_str(fshape));
  }

  std::vector<Tensor> patches, targets;
  for (std::size_t i = 0; i < features.size(); ++i) {
    patches.push_back(unfold(features[i], k));
    targets.push_back(as_column(labels[i]));
  }
  const double n = static_cast<double>(features.size());

  FilterResult out;
  Tensor f = init.defined() ? reshape(init, {c * k * k, 1}) : Tensor::zeros({c * k * k, 1});
  for (std::size_t it = 0; it <= config.iterations; ++it) {
    Tensor grad;
    double objective = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      Tensor r = hinge_residual(matmul(patches[i], f), targets[i], config.threshold);
      for (double v : r.data()) objective += v * v;
      if (it == config.iterations) continue;
      Tensor g = matmul(transpose(patches[i]), r);
      grad = grad.defined() ? add(grad, g) : g;
    }
    out.objective.push_back(objective / n);
    if (it == config.iterations) break;
    f = sub(f, scale(grad, 2.0 * config.step / n));
    out.history.push_back(reshape(f, fshape));
  }
  out.filter = out.history.back();
  return out;
}

Peak find_peak(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("find_peak: expected h×w scores, got " + shape_str(scores.shape()));
  auto d = scores.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    if (d[i] > d[best]) best = i;
  }
  return {best / scores.dim(1), best % scores.dim(1), d[best]};
}

HeadParams HeadParams::init(std::size_t channels, std::size_t cls_channels, SplitMix64& rng) {
  HeadParams h;
  h.cls_w = uniform_init({cls_channels, channels, 1, 1}, channels, rng);
  h.cls_b = uniform_init({cls_channels}, channels, rng);
  h.reg_w = param(Tensor::zeros({channels * 9, 4}));
  h.reg_b = param(Tensor::zeros({4}));
  return h;
}

void HeadParams::collect(ParamSet& out, const std::string& prefix) const {
  out.add(prefix + ".cls.w", cls_w);
  out.add(prefix + ".cls.b", cls_b);
  out.add(prefix + ".reg.w", reg_w);
  out.add(prefix + ".reg.b", reg_b);
}

Tensor classification_features(const Tensor& fused, const HeadParams& head, const FilterConfig& filter) {
  Tensor projected = conv2d(fused, head.cls_w, head.cls_b, 1, 0);
  Tensor u = unfold(projected, filter.size);
  Tensor gram = matmul(u, transpose(u));
  Tensor fro2 = shift(sum(mul(gram, gram)), 1e-300);
  return mul(projected, scale(pow(fro2, -0.25), std::sqrt(filter.feature_bound)));
}

Tensor regress_deltas(const Tensor& fused, std::size_t peak_row, std::size_t peak_col, const HeadParams& head) {
  if (fused.rank() != 3 || peak_row >= fused.dim(1) || peak_col >= fused.dim(2)) {
    throw ShapeError("regress: peak (" + std::to_string(peak_row) + "," + std::to_string(peak_col) +
                     ") outside map " + shape_str(fused.shape()));
  }
  Tensor window = spatial_window(fused, static_cast<long>(peak_row) - 1, static_cast<long>(peak_col) - 1, 3, 3);
  Tensor row = reshape(window, {1, window.numel()});
  return add(matmul(row, head.reg_w), head.reg_b);
}

Tensor regress_box(const Tensor& fused, std::size_t peak_row, std::size_t peak_col, double stride, double prev_w,
                   double prev_h, const HeadParams& head) {
  Tensor deltas = regress_deltas(fused, peak_row, peak_col, head);
  const double ax = (static_cast<double>(peak_col) + 0.5) * stride;
  const double ay = (static_cast<double>(peak_row) + 0.5) * stride;
  return box_decode(deltas, ax, ay, stride, prev_w, prev_h);
}

BBox regress_bbox(const Tensor& fused, const Peak& peak, double stride, const BBox& prev, const HeadParams& head,
                  double frame_w, double frame_h) {
  Tensor b = regress_box(fused, peak.row, peak.col, stride, prev.w, prev.h, head);
  return clamp_box({b[0], b[1], b[2], b[3]}, frame_w, frame_h);
}

Tensor loss_cls(const std::vector<std::vector<Tensor>>& scores, std::span<const Tensor> labels, double threshold) {
  if (scores.empty() || labels.empty()) throw ValueError("loss_cls: empty sample set");
  Tensor total;
  for (const auto& iteration : scores) {
    if (iteration.size() != labels.size()) {
      throw ValueError("loss_cls: " + std::to_string(iteration.size()) + " score maps vs " +
                       std::to_string(labels.size()) + " labels");
    }
    for (std::size_t m = 0; m < labels.size(); ++m) {
      Tensor r = hinge_residual(iteration[m], labels[m], threshold);
      Tensor term = sum(mul(r, r));
      total = total.defined() ? add(total, term) : term;
    }
  }
  return scale(total, 1.0 / static_cast<double>(scores.size()));
}

Tensor loss_bbox(std::span<const Tensor> predicted, std::span<const BBox> truth, double patch_size) {
  if (predicted.size() != truth.size()) {
    throw ValueError("loss_bbox: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " groundtruth boxes");
  }
  if (predicted.empty()) throw ValueError("loss_bbox: empty sample set");
  Tensor total;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& t = truth[i];
    Tensor diff = scale(sub(reshape(predicted[i], {4}), Tensor::from({4}, {t.x, t.y, t.w, t.h})), 1.0 / patch_size);
    Tensor term = sum(mul(diff, diff));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 0.25 / static_cast<double>(predicted.size()));
}

Tensor loss_total(const Tensor& l_cls, const Tensor& l_bbox, double lambda) {
  return add(scale(l_cls, lambda), l_bbox);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.backbone = BackboneConfig::paper();
  c.cmim = fusion::CMIMConfig::paper();
  c.cls_channels = 512;
  return c;
}

void ModelConfig::validate() const {
  backbone.validate();
  cmim.validate();
  labels.validate();
  filter.validate();
  if (cmim.channels != backbone.out_channels()) {
    throw ValueError("model: fusion expects " + std::to_string(cmim.channels) + " channels, backbone gives " +
                     std::to_string(backbone.out_channels()));
  }
  if (cls_channels == 0) throw ValueError("model: classification width must be positive");
  if (!(lambda >= 0.0)) throw ValueError("model: lambda must be non-negative");
}

TrackerModel::TrackerModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  SplitMix64 rng(seed);
  auto backbone_rng = rng.fork(1), fusion_rng = rng.fork(2), head_rng = rng.fork(3);
  backbone_ = BackboneParams::init(config_.backbone, backbone_rng);
  template_fusion_ = std::make_shared<fusion::FusionNetwork>(config_.cmim, config_.fusion_mode, fusion_rng);
  search_fusion_ = template_fusion_;
  head_ = HeadParams::init(config_.backbone.out_channels(), config_.cls_channels, head_rng);
}

Tensor TrackerModel::fused_features(const Tensor& rgb_patch, const Tensor& depth_patch) const {
  auto [i0, d0] = extract(rgb_patch, depth_patch, backbone_, config_.backbone);
  return template_fusion_->fuse(i0, d0);
}

ParamSet TrackerModel::parameters() const {
  ParamSet out;
  backbone_.collect(out, "model.backbone", config_.backbone);
  out.extend(template_fusion_->parameters());
  head_.collect(out, "model.head");
  return out;
}

PairLoss pair_loss(const TrackerModel& model, const PairInputs& pair) {
  const auto& cfg = model.config();
  const double stride = model.stride();
  auto [ti, td] = extract(pair.template_rgb, pair.template_depth, model.backbone(), cfg.backbone);
  auto [si, sd] = extract(pair.search_rgb, pair.search_depth, model.backbone(), cfg.backbone);
  Tensor t_fused = model.template_fuse(ti, td);
  Tensor s_fused = model.search_fuse(si, sd);
  const std::size_t rows = s_fused.dim(1), cols = s_fused.dim(2);

  Tensor t_cls = classification_features(t_fused, model.head(), cfg.filter);
  Tensor s_cls = classification_features(s_fused, model.head(), cfg.filter);
  Tensor t_label = gaussian_labels(pair.template_box, t_fused.dim(1), t_fused.dim(2), stride, cfg.labels);
  Tensor s_label = gaussian_labels(pair.search_box, rows, cols, stride, cfg.labels);

  auto learned = learn_filter(std::span(&t_cls, 1), std::span(&t_label, 1), cfg.filter);
  std::vector<std::vector<Tensor>> final_scores = {{classify(learned.filter, s_cls)}};
  Tensor l_cls = loss_cls(final_scores, std::span(&s_label, 1), cfg.labels.threshold);

  const auto peak_row = static_cast<std::size_t>(std::floor(pair.search_box.cy() / stride));
  const auto peak_col = static_cast<std::size_t>(std::floor(pair.search_box.cx() / stride));
  Tensor box = regress_box(s_fused, std::min(peak_row, rows - 1), std::min(peak_col, cols - 1), stride,
                           pair.template_box.w, pair.template_box.h, model.head());
  Tensor l_bbox = loss_bbox(std::span(&box, 1), std::span(&pair.search_box, 1),
                            static_cast<double>(pair.search_rgb.dim(1)));

  PairLoss out;
  out.total = loss_total(l_cls, l_bbox, cfg.lambda);
  out.cls_final = l_cls;
  out.bbox = l_bbox;
  {
    NoGradGuard guard;
    std::vector<std::vector<Tensor>> history;
    for (const auto& f : learned.history) history.push_back({classify(f, s_cls)});
    out.cls_averaged = loss_cls(history, std::span(&s_label, 1), cfg.labels.threshold).item();
  }
  out.total_averaged = cfg.lambda * out.cls_averaged + l_bbox.item();
  return out;
}

}  // namespace dmt::model
