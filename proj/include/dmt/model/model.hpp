#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmt/fusion/fusion.hpp"
#include "dmt/numcore/bbox.hpp"
#include "dmt/numcore/checkpoint.hpp"
#include "dmt/numcore/rng.hpp"
#include "dmt/numcore/tensor.hpp"

namespace dmt::model {

struct BackboneConfig {
  std::size_t input_size = 96;
  /// Output width of each 3×3 stride-2 conv stage; the last entry is C.
  std::vector<std::size_t> widths = {16, 32, 32};
  bool share_weights_across_modalities = false;

  std::size_t downsample() const { return std::size_t{1} << widths.size(); }
  std::size_t out_channels() const { return widths.back(); }
  std::size_t feature_size() const { return input_size / downsample(); }

  static BackboneConfig desk();   // 96 px, n=8, C=32
  static BackboneConfig paper();  // 288 px, n=16, C=1024
  void validate() const;
};

struct StreamParams {
  std::vector<Tensor> weights;  // stage i: widths[i]×in×3×3
  std::vector<Tensor> biases;

  static StreamParams init(const BackboneConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

struct BackboneParams {
  StreamParams rgb;
  /// Aliases `rgb` when weights are shared.
  StreamParams depth;

  static BackboneParams init(const BackboneConfig& config, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix, const BackboneConfig& config) const;
};

/// One stream: relu(conv3x3/2) per stage. Input 3×S×S.
Tensor backbone_stream(const Tensor& image, const StreamParams& params);

/// Runs both streams; returns (I, D), each C×S/n×S/n.
std::pair<Tensor, Tensor> extract(const Tensor& rgb_patch, const Tensor& depth_patch, const BackboneParams& params,
                                  const BackboneConfig& config);

struct LabelConfig {
  double threshold = 0.05;   // T
  double sigma_cells = 0.25;  // sigma as a fraction of sqrt(w·h), before division by the stride

  void validate() const;
};

/// Gaussian map over feature cells, peak 1 at the cell containing the box centre.
/// The box is in patch pixels; cell (r, c) covers [c·stride, (c+1)·stride).
Tensor gaussian_labels(const BBox& box, std::size_t rows, std::size_t cols, double stride,
                       const LabelConfig& config);

struct FilterConfig {
  std::size_t size = 3;        // odd spatial extent
  std::size_t iterations = 5;  // N_iter
  double step = 0.5;
  double threshold = 0.05;     // T
  /// Frobenius norm of the patch Gram matrix of the classification features.
  /// It bounds the largest curvature of the filter objective, so descent with
  /// this step stays stable below 2.
  double feature_bound = 1.8;

  void validate() const;
};

struct FilterResult {
  Tensor filter;                // C×k×k
  std::vector<Tensor> history;  // f_1 .. f_N
  std::vector<double> objective;  // objective at f_0 .. f_N
};

/// Mean over samples of the summed squared hinge residual of classify(f, x).
Tensor filter_objective(const Tensor& filter, std::span<const Tensor> features, std::span<const Tensor> labels,
                        double threshold);

/// N_iter fixed-step gradient descent steps on filter_objective, starting from
/// `init` (zeros when undefined). The steps are recorded on the tape, so the
/// result stays differentiable with respect to the features.
FilterResult learn_filter(std::span<const Tensor> features, std::span<const Tensor> labels,
                          const FilterConfig& config, const Tensor& init = Tensor{});

/// Cross-correlation of a C×k×k filter over a C×h×w map, zero padded: h×w.
Tensor classify(const Tensor& filter, const Tensor& features);

struct Peak {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// Row-major argmax; the lowest index wins ties.
Peak find_peak(const Tensor& scores);

struct HeadParams {
  Tensor cls_w;  // C_cls×C×1×1
  Tensor cls_b;  // C_cls
  Tensor reg_w;  // (C·3·3)×4
  Tensor reg_b;  // 4

  static HeadParams init(std::size_t channels, std::size_t cls_channels, SplitMix64& rng);
  void collect(ParamSet& out, const std::string& prefix) const;
};

/// 1×1 projection of fused features, rescaled so that the k×k patch Gram
/// matrix U·Uᵀ has Frobenius norm `feature_bound`.
Tensor classification_features(const Tensor& fused, const HeadParams& head, const FilterConfig& filter);

/// Regression deltas (dx, dy, dw, dh) from the 3×3 window of fused features at the peak.
Tensor regress_deltas(const Tensor& fused, std::size_t peak_row, std::size_t peak_col, const HeadParams& head);

/// Box in patch pixels as a {4} tensor (x, y, w, h), centred at the peak cell plus dx·stride.
Tensor regress_box(const Tensor& fused, std::size_t peak_row, std::size_t peak_col, double stride, double prev_w,
                   double prev_h, const HeadParams& head);

/// Same, as a BBox clipped to a `frame_w`×`frame_h` area.
BBox regress_bbox(const Tensor& fused, const Peak& peak, double stride, const BBox& prev, const HeadParams& head,
                  double frame_w, double frame_h);

/// (1/N_iter) Σ_iter Σ_samples Σ_cells l(s, z)². scores[i][m] is iteration i, test sample m.
Tensor loss_cls(const std::vector<std::vector<Tensor>>& scores, std::span<const Tensor> labels, double threshold);

/// Mean over samples of the mean over (x, y, w, h) of squared error, in units of the patch side.
Tensor loss_bbox(std::span<const Tensor> predicted, std::span<const BBox> truth, double patch_size);

/// lambda·L_cls + L_bbox.
Tensor loss_total(const Tensor& l_cls, const Tensor& l_bbox, double lambda);

struct ModelConfig {
  BackboneConfig backbone = BackboneConfig::desk();
  fusion::CMIMConfig cmim = fusion::CMIMConfig::desk();
  fusion::FusionMode fusion_mode = fusion::FusionMode::Full;
  LabelConfig labels;
  FilterConfig filter;
  std::size_t cls_channels = 32;
  double lambda = 1e-2;

  static ModelConfig desk();
  static ModelConfig paper();
  void validate() const;
};

/// Backbone, fusion network and heads. The template and search branches run
/// through one FusionNetwork instance.
class TrackerModel {
 public:
  TrackerModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  double stride() const { return static_cast<double>(config_.backbone.downsample()); }
  std::size_t feature_size() const { return config_.backbone.feature_size(); }

  /// Backbone then fusion: C×h×w fused map of one RGB-D patch pair.
  Tensor fused_features(const Tensor& rgb_patch, const Tensor& depth_patch) const;
  Tensor template_fuse(const Tensor& i0, const Tensor& d0) const { return template_fusion_->fuse(i0, d0); }
  Tensor search_fuse(const Tensor& i0, const Tensor& d0) const { return search_fusion_->fuse(i0, d0); }

  const std::shared_ptr<fusion::FusionNetwork>& template_fusion() const { return template_fusion_; }
  const std::shared_ptr<fusion::FusionNetwork>& search_fusion() const { return search_fusion_; }
  BackboneParams& backbone() { return backbone_; }
  const BackboneParams& backbone() const { return backbone_; }
  HeadParams& head() { return head_; }
  const HeadParams& head() const { return head_; }

  /// Every trainable tensor: "model.backbone.*", "fusion.*", "model.head.*".
  ParamSet parameters() const;

 private:
  ModelConfig config_;
  BackboneParams backbone_;
  std::shared_ptr<fusion::FusionNetwork> template_fusion_;
  std::shared_ptr<fusion::FusionNetwork> search_fusion_;
  HeadParams head_;
};

/// One training pair with boxes in patch pixels.
struct PairInputs {
  Tensor template_rgb;
  Tensor template_depth;
  BBox template_box;
  Tensor search_rgb;
  Tensor search_depth;
  BBox search_box;
};

struct PairLoss {
  /// lambda·L_cls(final filter) + L_bbox; this is what training differentiates.
  Tensor total;
  Tensor cls_final;
  Tensor bbox;
  /// L_cls averaged over the filter iterations f_1..f_N, and the matching total.
  double cls_averaged = 0.0;
  double total_averaged = 0.0;
};

/// Learns a filter on the template, scores the search patch and regresses the
/// box at the groundtruth cell, with the template box size as the previous size.
PairLoss pair_loss(const TrackerModel& model, const PairInputs& pair);

}  // namespace dmt::model
