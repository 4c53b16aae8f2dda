#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dmt/model/model.hpp"
#include "dmt/synthdata/synthdata.hpp"

namespace dmt::pipeline {

/// Decoupled-weight-decay Adam. Each step applies
///   θ ← θ − lr·(m̂/(√v̂ + ε) + weight_decay·θ).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, double weight_decay = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
        double epsilon = 1e-8);

  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double weight_decay_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t pairs_per_epoch = 200;
  double learning_rate = 1e-3;
  double lr_decay_factor = 0.2;
  std::size_t lr_decay_period_epochs = 15;
  double weight_decay = 1e-4;
  double crop_factor = 5.0;           // crop side = factor·sqrt(w·h)
  double jitter_fraction = 0.1;       // centre jitter, fraction of box size
  double search_jitter_fraction = 0.1;
  double brightness_low = 0.8;
  double brightness_high = 1.2;
  double flip_probability = 0.5;
  double max_depth_mm = 10000.0;
  std::size_t max_frame_gap = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// lr = base·factor^floor(epoch / period).
double lr_at(const TrainConfig& config, std::size_t epoch);

struct Augmentation {
  double shift_x = 0.0;  // crop-centre offset in pixels
  double shift_y = 0.0;
  bool flip = false;
  double brightness = 1.0;
};

struct PatchPair {
  Tensor rgb;    // 3×S×S in [0,1]
  Tensor depth;  // 3×S×S, depth/max_depth clamped to [0,1], replicated
  BBox box;      // target in patch pixels
  synth::CropTransform transform;
};

/// Crops an RGB-D frame around `box` (centre shifted by the augmentation),
/// resizes to `patch_size`, then applies flip and brightness.
PatchPair make_patch(const synth::RgbImage& rgb, const synth::DepthImage& depth, const BBox& box,
                     const Augmentation& aug, double crop_factor, std::size_t patch_size, double max_depth_mm);

/// Random augmentation for one crop: shift within ±fraction of the box size,
/// optional flip, brightness factor.
Augmentation sample_augmentation(const BBox& box, double jitter_fraction, const TrainConfig& config, SplitMix64& rng);

/// Template and search crops from two frames of one sequence. Both target
/// frames must be visible. The flip decision is shared by the pair.
model::PairInputs make_training_pair(const synth::Sequence& seq, std::size_t template_frame,
                                     std::size_t search_frame, const TrainConfig& config, std::size_t patch_size,
                                     std::uint64_t seed);

struct EpochLog {
  std::size_t epoch = 0;
  double total = 0.0;  // iteration-averaged λ·L_cls + L_bbox
  double cls = 0.0;
  double bbox = 0.0;
  double lr = 0.0;
};

std::string format_log_line(const EpochLog& e);

/// Trains every parameter of `model` on random pairs from `dataset`. Throws
/// NumericError naming epoch, pair and term values on a non-finite loss.
std::vector<EpochLog> train(model::TrackerModel& model, const std::vector<synth::Sequence>& dataset,
                            const TrainConfig& config,
                            const std::function<void(const EpochLog&)>& on_epoch = {});

/// Writes the checkpoint and the "epoch,L_total,L_cls,L_bbox,lr" log.
void save_training(const model::TrackerModel& model, const std::vector<EpochLog>& log,
                   const std::filesystem::path& checkpoint, const std::filesystem::path& log_path);

struct TrackerConfig {
  std::size_t init_samples = 15;
  std::size_t memory_capacity = 30;
  double confidence_gate = 0.5;
  double crop_factor = 5.0;
  double jitter_fraction = 0.1;
  double brightness_low = 0.8;
  double brightness_high = 1.2;
  double max_depth_mm = 10000.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MemorySample {
  Tensor features;  // classification features, C_cls×h×w
  Tensor labels;    // h×w
};

struct TrackerState {
  BBox current_box;
  Tensor filter;
  std::vector<MemorySample> memory;
  std::size_t initial_count = 0;  // leading samples never evicted
  double last_confidence = 0.0;
  std::size_t frame_width = 0;
  std::size_t frame_height = 0;
  TrackerConfig config;
};

/// Builds init_samples augmented samples (the first unaugmented), learns the
/// filter over them.
TrackerState init_tracker(const synth::RgbImage& rgb, const synth::DepthImage& depth, const BBox& init_box,
                          const model::TrackerModel& model, const TrackerConfig& config);

struct StepResult {
  BBox box;
  double confidence = 0.0;  // peak classification score
};

/// Localizes the target in a new frame. Above the gate the sample joins the
/// memory and the filter takes one refinement step.
StepResult track_step(TrackerState& state, const synth::RgbImage& rgb, const synth::DepthImage& depth,
                      const model::TrackerModel& model);

struct TrackOutput {
  std::vector<BBox> boxes;
  std::vector<double> confidences;
};

/// Initializes on frame 0 with the groundtruth box and steps through the rest.
/// Frame 0 reports the init box with confidence 1.
TrackOutput track_sequence(const synth::Sequence& seq, const model::TrackerModel& model,
                           const TrackerConfig& config);

/// Mean overlap over frames where the target is visible.
double mean_overlap(const synth::Sequence& seq, const TrackOutput& out);

}  // namespace dmt::pipeline
