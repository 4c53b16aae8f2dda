#include "dmt/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dmt/evalkit/evalkit.hpp"
#include "dmt/numcore/autograd.hpp"
#include "dmt/numcore/errors.hpp"

namespace dmt::pipeline {

AdamW::AdamW(std::vector<Tensor> params, double weight_decay, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) throw ValueError("AdamW: every parameter must be a trainable leaf");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].mutable_data();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      const double adam = (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon_);
      theta[j] -= lr * (adam + weight_decay_ * theta[j]);
    }
  }
}

void AdamW::zero_grad() { zero_grads(params_); }

void TrainConfig::validate() const {
  if (epochs == 0 || pairs_per_epoch == 0) throw ValueError("train: epochs and pairs_per_epoch must be positive");
  if (!(learning_rate > 0.0)) throw ValueError("train: learning_rate must be positive");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw ValueError("train: lr_decay_factor must lie in (0,1)");
  if (lr_decay_period_epochs == 0) throw ValueError("train: lr_decay_period_epochs must be positive");
  if (!(weight_decay >= 0.0)) throw ValueError("train: weight_decay must be non-negative");
  if (!(crop_factor > 0.0) || !(max_depth_mm > 0.0)) throw ValueError("train: crop_factor and max_depth_mm must be positive");
  if (jitter_fraction < 0.0 || search_jitter_fraction < 0.0) throw ValueError("train: jitter must be non-negative");
  if (!(brightness_low > 0.0 && brightness_low <= brightness_high)) throw ValueError("train: bad brightness range");
  if (flip_probability < 0.0 || flip_probability > 1.0) throw ValueError("train: flip_probability must lie in [0,1]");
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate *
         std::pow(config.lr_decay_factor, static_cast<double>(epoch / config.lr_decay_period_epochs));
}

PatchPair make_patch(const synth::RgbImage& rgb, const synth::DepthImage& depth, const BBox& box,
                     const Augmentation& aug, double crop_factor, std::size_t patch_size, double max_depth_mm) {
  if (!box.present()) throw ValueError("make_patch: target box must be present with positive size");
  const BBox centre{box.x + aug.shift_x, box.y + aug.shift_y, box.w, box.h};
  const auto c = synth::crop(rgb, centre, crop_factor, patch_size);
  const auto d = synth::crop(depth, centre, crop_factor, patch_size);
  const std::size_t s = patch_size, plane = s * s;

  std::vector<double> rgb_v(3 * plane), depth_v(3 * plane);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t v = 0; v < s; ++v) {
      for (std::size_t u = 0; u < s; ++u) {
        const std::size_t src = v * s + (aug.flip ? s - 1 - u : u);
        const std::size_t dst = ch * plane + v * s + u;
        rgb_v[dst] = std::clamp(c.data[ch * plane + src] / 255.0 * aug.brightness, 0.0, 1.0);
        depth_v[dst] = std::clamp(d.data[src] / max_depth_mm, 0.0, 1.0);
      }
    }
  }
  PatchPair out;
  out.rgb = Tensor::from({3, s, s}, std::move(rgb_v));
  out.depth = Tensor::from({3, s, s}, std::move(depth_v));
  out.transform = c.transform;
  out.box = c.transform.to_patch(box);
  if (aug.flip) out.box.x = static_cast<double>(s) - out.box.x - out.box.w;
  return out;
}

Augmentation sample_augmentation(const BBox& box, double jitter_fraction, const TrainConfig& config,
                                 SplitMix64& rng) {
  Augmentation a;
  a.shift_x = rng.uniform(-1.0, 1.0) * jitter_fraction * box.w;
  a.shift_y = rng.uniform(-1.0, 1.0) * jitter_fraction * box.h;
  a.flip = rng.coin(config.flip_probability);
  a.brightness = rng.uniform(config.brightness_low, config.brightness_high);
  return a;
}

model::PairInputs make_training_pair(const synth::Sequence& seq, std::size_t template_frame,
                                     std::size_t search_frame, const TrainConfig& config, std::size_t patch_size,
                                     std::uint64_t seed) {
  for (std::size_t f : {template_frame, search_frame}) {
    if (f >= seq.length()) throw ValueError("make_training_pair: frame " + std::to_string(f) + " out of range");
    if (!seq.visible[f]) throw ValueError("make_training_pair: target absent in frame " + std::to_string(f));
  }
  SplitMix64 rng(seed);
  const BBox& tb = seq.boxes[template_frame];
  const BBox& sb = seq.boxes[search_frame];
  Augmentation ta = sample_augmentation(tb, config.jitter_fraction, config, rng);
  Augmentation sa = sample_augmentation(sb, config.search_jitter_fraction, config, rng);
  sa.flip = ta.flip;
  const auto t = make_patch(seq.rgb[template_frame], seq.depth[template_frame], tb, ta, config.crop_factor,
                            patch_size, config.max_depth_mm);
  const auto s = make_patch(seq.rgb[search_frame], seq.depth[search_frame], sb, sa, config.crop_factor, patch_size,
                            config.max_depth_mm);
  return {t.rgb, t.depth, t.box, s.rgb, s.depth, s.box};
}

std::string format_log_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g", e.epoch, e.total, e.cls, e.bbox, e.lr);
  return buf;
}

namespace {

struct FramePick {
  std::size_t sequence, template_frame, search_frame;
};

FramePick pick_frames(const std::vector<synth::Sequence>& dataset, const TrainConfig& config, SplitMix64& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::size_t si = rng.below(dataset.size());
    const auto& seq = dataset[si];
    std::vector<std::size_t> visible;
    for (std::size_t t = 0; t < seq.length(); ++t)
      if (seq.visible[t]) visible.push_back(t);
    if (visible.empty()) continue;
    const std::size_t t = visible[rng.below(visible.size())];
    std::vector<std::size_t> near;
    for (std::size_t s : visible) {
      const std::size_t gap = s > t ? s - t : t - s;
      if (gap <= config.max_frame_gap) near.push_back(s);
    }
    return {si, t, near[rng.below(near.size())]};
  }
  throw ValueError("train: dataset has no visible target frames");
}

}  // namespace

std::vector<EpochLog> train(model::TrackerModel& model, const std::vector<synth::Sequence>& dataset,
                            const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ValueError("train: empty dataset");
  const std::size_t patch = model.config().backbone.input_size;
  AdamW opt(model.parameters().tensors(), config.weight_decay);
  SplitMix64 root(config.seed);
  std::vector<EpochLog> log;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    SplitMix64 rng = root.fork(epoch);
    const double lr = lr_at(config, epoch);
    double total = 0.0, cls = 0.0, bbox = 0.0;
    for (std::size_t p = 0; p < config.pairs_per_epoch; ++p) {
      const auto pick = pick_frames(dataset, config, rng);
      const auto pair = make_training_pair(dataset[pick.sequence], pick.template_frame, pick.search_frame, config,
                                           patch, rng.next());
      const auto where = [&] {
        char buf[160];
        std::snprintf(buf, sizeof buf, "train: non-finite loss at epoch %zu, pair %zu (sequence %zu, frames %zu/%zu)",
                      epoch, p, pick.sequence, pick.template_frame, pick.search_frame);
        return std::string(buf);
      };
      model::PairLoss loss;
      try {
        loss = model::pair_loss(model, pair);
      } catch (const NumericError& e) {
        throw NumericError(where() + ": " + e.what());
      }
      const double lt = loss.total.item(), lc = loss.cls_final.item(), lb = loss.bbox.item();
      if (!std::isfinite(lt) || !std::isfinite(lc) || !std::isfinite(lb) || !std::isfinite(loss.cls_averaged)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, ": L_total=%g L_cls=%g L_bbox=%g", lt, lc, lb);
        throw NumericError(where() + buf);
      }
      backward(loss.total);
      opt.step(lr);
      opt.zero_grad();
      total += loss.total_averaged;
      cls += loss.cls_averaged;
      bbox += lb;
    }
    const double n = static_cast<double>(config.pairs_per_epoch);
    log.push_back({epoch, total / n, cls / n, bbox / n, lr});
    if (on_epoch) on_epoch(log.back());
  }
  return log;
}

void save_training(const model::TrackerModel& model, const std::vector<EpochLog>& log,
                   const std::filesystem::path& checkpoint, const std::filesystem::path& log_path) {
  save_checkpoint(checkpoint, model.parameters());
  std::ofstream out(log_path, std::ios::binary);
  if (!out) throw IoError("cannot open " + log_path.string() + " for writing");
  out << "epoch,L_total,L_cls,L_bbox,lr\n";
  for (const auto& e : log) out << format_log_line(e) << '\n';
  if (!out) throw IoError("failed writing " + log_path.string());
}

void TrackerConfig::validate() const {
  if (init_samples == 0) throw ValueError("tracker: init_samples must be positive");
  if (memory_capacity < init_samples) throw ValueError("tracker: memory_capacity must hold the initial samples");
  if (!(crop_factor > 0.0) || !(max_depth_mm > 0.0)) throw ValueError("tracker: crop_factor and max_depth_mm must be positive");
  if (!std::isfinite(confidence_gate)) throw ValueError("tracker: confidence_gate must be finite");
}

namespace {

MemorySample make_sample(const model::TrackerModel& model, const PatchPair& patch) {
  const auto& cfg = model.config();
  const Tensor fused = model.fused_features(patch.rgb, patch.depth);
  const Tensor feats = model::classification_features(fused, model.head(), cfg.filter);
  const Tensor labels = model::gaussian_labels(patch.box, fused.dim(1), fused.dim(2), model.stride(), cfg.labels);
  return {feats, labels};
}

void learn_from_memory(TrackerState& state, const model::TrackerModel& model, std::size_t iterations,
                       const Tensor& init) {
  std::vector<Tensor> feats, labels;
  for (const auto& s : state.memory) {
    feats.push_back(s.features);
    labels.push_back(s.labels);
  }
  auto cfg = model.config().filter;
  cfg.iterations = iterations;
  state.filter = model::learn_filter(feats, labels, cfg, init).filter;
}

}  // namespace

TrackerState init_tracker(const synth::RgbImage& rgb, const synth::DepthImage& depth, const BBox& init_box,
                          const model::TrackerModel& model, const TrackerConfig& config) {
  config.validate();
  if (!init_box.present()) throw ValueError("init_tracker: init box must have positive finite size");
  NoGradGuard no_grad;
  TrackerState state;
  state.config = config;
  state.frame_width = rgb.width;
  state.frame_height = rgb.height;
  state.current_box = clamp_box(init_box, static_cast<double>(rgb.width), static_cast<double>(rgb.height));
  const std::size_t patch = model.config().backbone.input_size;

  TrainConfig aug_cfg;
  aug_cfg.brightness_low = config.brightness_low;
  aug_cfg.brightness_high = config.brightness_high;
  SplitMix64 rng(config.seed);
  for (std::size_t i = 0; i < config.init_samples; ++i) {
    const Augmentation aug =
        i == 0 ? Augmentation{} : sample_augmentation(state.current_box, config.jitter_fraction, aug_cfg, rng);
    const auto p = make_patch(rgb, depth, state.current_box, aug, config.crop_factor, patch, config.max_depth_mm);
    state.memory.push_back(make_sample(model, p));
  }
  state.initial_count = state.memory.size();
  learn_from_memory(state, model, model.config().filter.iterations, Tensor{});
  state.last_confidence = 1.0;
  return state;
}

StepResult track_step(TrackerState& state, const synth::RgbImage& rgb, const synth::DepthImage& depth,
                      const model::TrackerModel& model) {
  NoGradGuard no_grad;
  const auto& cfg = model.config();
  const std::size_t patch = cfg.backbone.input_size;
  const auto p = make_patch(rgb, depth, state.current_box, Augmentation{}, state.config.crop_factor, patch,
                            state.config.max_depth_mm);
  auto [i0, d0] = extract(p.rgb, p.depth, model.backbone(), cfg.backbone);
  const Tensor fused = model.search_fuse(i0, d0);
  const Tensor feats = model::classification_features(fused, model.head(), cfg.filter);
  const Tensor scores = model::classify(state.filter, feats);
  const auto peak = model::find_peak(scores);

  const double s = static_cast<double>(patch);
  const BBox in_patch = model::regress_bbox(fused, peak, model.stride(), p.box, model.head(), s, s);
  const BBox box = clamp_box(p.transform.to_frame(in_patch), static_cast<double>(rgb.width),
                             static_cast<double>(rgb.height));
  state.current_box = box;
  state.last_confidence = peak.value;

  if (peak.value > state.config.confidence_gate) {
    const Tensor labels = model::gaussian_labels(in_patch, fused.dim(1), fused.dim(2), model.stride(), cfg.labels);
    state.memory.push_back({feats, labels});
    if (state.memory.size() > state.config.memory_capacity) {
      state.memory.erase(state.memory.begin() + static_cast<long>(state.initial_count));
    }
    learn_from_memory(state, model, 1, state.filter);
  }
  return {box, peak.value};
}

TrackOutput track_sequence(const synth::Sequence& seq, const model::TrackerModel& model,
                           const TrackerConfig& config) {
  if (seq.length() == 0) throw ValueError("track_sequence: empty sequence");
  if (!seq.visible[0]) throw ValueError("track_sequence: target must be visible in the first frame");
  TrackOutput out;
  auto state = init_tracker(seq.rgb[0], seq.depth[0], seq.boxes[0], model, config);
  out.boxes.push_back(state.current_box);
  out.confidences.push_back(1.0);
  for (std::size_t t = 1; t < seq.length(); ++t) {
    const auto r = track_step(state, seq.rgb[t], seq.depth[t], model);
    out.boxes.push_back(r.box);
    out.confidences.push_back(r.confidence);
  }
  return out;
}

double mean_overlap(const synth::Sequence& seq, const TrackOutput& out) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (!seq.visible[t]) continue;
    sum += eval::iou(out.boxes[t], seq.boxes[t]);
    ++n;
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace dmt::pipeline
