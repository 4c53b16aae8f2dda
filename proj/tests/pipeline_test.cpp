#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <unistd.h>

#include "dmt/model/model.hpp"
#include "dmt/numcore/autograd.hpp"
#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/ops.hpp"
#include "dmt/pipeline/pipeline.hpp"

using namespace dmt;
using namespace dmt::pipeline;

namespace {

synth::Sequence scene(std::size_t length, double vx = 1.5, std::uint64_t seed = 5) {
  synth::SceneSpec spec;
  spec.length = length;
  spec.target.vx = vx;
  spec.target.vy = 0.5;
  spec.background = synth::Background::Clutter;
  return synth::generate(spec, seed);
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dmt_pipeline_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool same(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && a.to_vector() == b.to_vector(); }

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(lr_at(cfg, 0) == 1e-3);
  CHECK(lr_at(cfg, 14) == 1e-3);
  CHECK(lr_at(cfg, 15) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(lr_at(cfg, 29) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(lr_at(cfg, 30) == doctest::Approx(4e-5).epsilon(1e-15));
}

TEST_CASE("AdamW: decoupled decay and first step") {
  auto p = Tensor::from({3}, {0.5, -2.0, 0.0}).set_requires_grad(true);
  AdamW opt({p}, 1e-4);
  opt.step(1e-3);
  // No gradient: only the decay term moves θ.
  CHECK(p[0] == 0.5 - 1e-3 * (0.0 + 1e-4 * 0.5));
  CHECK(p[1] == -2.0 - 1e-3 * (0.0 + 1e-4 * -2.0));
  CHECK(p[2] == 0.0);

  auto q = Tensor::from({2}, {1.0, 1.0}).set_requires_grad(true);
  AdamW opt2({q}, 0.0);
  backward(sum(mul(q, Tensor::from({2}, {3.0, -0.25}))));
  opt2.step(0.1);
  // Bias-corrected first step is lr·g/(|g|+ε).
  CHECK(q[0] == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(1.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-14));
  CHECK(opt2.steps() == 1);
  CHECK_THROWS_AS(AdamW({Tensor::from({1}, {1.0})}), ValueError);
}

TEST_CASE("make_patch: centring, flip, brightness, depth") {
  const auto seq = scene(1);
  const BBox box = seq.boxes[0];
  REQUIRE(box.w == 20.0);
  const auto p = make_patch(seq.rgb[0], seq.depth[0], box, Augmentation{}, 5.0, 96, 10000.0);
  CHECK(p.rgb.shape() == Shape{3, 96, 96});
  CHECK(p.box.w == doctest::Approx(19.2).epsilon(1e-12));
  CHECK(p.box.h == doctest::Approx(19.2).epsilon(1e-12));
  CHECK(p.box.x + p.box.w / 2 == doctest::Approx(48.0).epsilon(1e-12));
  CHECK(p.box.y + p.box.h / 2 == doctest::Approx(48.0).epsilon(1e-12));

  const auto c = synth::crop(seq.rgb[0], box, 5.0, 96);
  const auto d = synth::crop(seq.depth[0], box, 5.0, 96);
  for (std::size_t i = 0; i < 3 * 96 * 96; ++i) CHECK_EQ(p.rgb[i], c.data[i] / 255.0);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < 96 * 96; ++i) CHECK_EQ(p.depth[ch * 96 * 96 + i], std::min(1.0, d.data[i] / 10000.0));

  Augmentation flip;
  flip.flip = true;
  const auto f = make_patch(seq.rgb[0], seq.depth[0], box, flip, 5.0, 96, 10000.0);
  CHECK(f.box.x == doctest::Approx(96.0 - p.box.x - p.box.w).epsilon(1e-12));
  CHECK(f.box.y == p.box.y);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t v = 0; v < 96; v += 7)
      for (std::size_t u = 0; u < 96; ++u) {
        CHECK_EQ(f.rgb[(ch * 96 + v) * 96 + u], p.rgb[(ch * 96 + v) * 96 + 95 - u]);
        CHECK_EQ(f.depth[(ch * 96 + v) * 96 + u], p.depth[(ch * 96 + v) * 96 + 95 - u]);
      }

  Augmentation bright;
  bright.brightness = 3.0;
  const auto b = make_patch(seq.rgb[0], seq.depth[0], box, bright, 5.0, 96, 10000.0);
  for (std::size_t i = 0; i < b.rgb.numel(); ++i) {
    CHECK(b.rgb[i] <= 1.0);
    CHECK(b.rgb[i] == std::min(1.0, c.data[i] / 255.0 * 3.0));
  }
  CHECK(same(b.depth, p.depth));

  const auto shallow = make_patch(seq.rgb[0], seq.depth[0], box, Augmentation{}, 5.0, 96, 1000.0);
  for (std::size_t i = 0; i < 96 * 96; ++i) CHECK(shallow.depth[i] == std::min(1.0, d.data[i] / 1000.0));

  CHECK_THROWS_AS(make_patch(seq.rgb[0], seq.depth[0], BBox::absent(), Augmentation{}, 5.0, 96, 1e4), ValueError);
}

TEST_CASE("training pair shares the flip") {
  const auto seq = scene(4);
  TrainConfig cfg;
  cfg.jitter_fraction = 0.0;
  cfg.search_jitter_fraction = 0.0;
  cfg.brightness_low = cfg.brightness_high = 1.0;
  std::size_t flipped = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto pair = make_training_pair(seq, 2, 2, cfg, 48, s);
    CHECK(same(pair.template_rgb, pair.search_rgb));
    CHECK(same(pair.template_depth, pair.search_depth));
    CHECK(pair.template_box == pair.search_box);
    const auto plain = make_patch(seq.rgb[2], seq.depth[2], seq.boxes[2], Augmentation{}, 5.0, 48, 1e4);
    if (!same(pair.template_rgb, plain.rgb)) ++flipped;
  }
  CHECK(flipped > 5);
  CHECK(flipped < 35);

  auto dark = scene(3, 0.0);
  dark.visible[1] = false;
  CHECK_THROWS_AS(make_training_pair(dark, 0, 1, cfg, 48, 1), ValueError);
  CHECK_THROWS_AS(make_training_pair(dark, 0, 3, cfg, 48, 1), ValueError);
}

TEST_CASE("training: determinism and checkpoint round trip") {
  const std::vector<synth::Sequence> data = {scene(6, 1.0, 1), scene(6, -1.0, 2)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.pairs_per_epoch = 2;
  cfg.seed = 13;
  model::TrackerModel a(model::ModelConfig::desk(), 4), b(model::ModelConfig::desk(), 4);
  std::size_t calls = 0;
  const auto la = train(a, data, cfg, [&](const EpochLog&) { ++calls; });
  const auto lb = train(b, data, cfg);
  CHECK(calls == 2);
  REQUIRE(la.size() == 2);
  CHECK(la[1].lr == 1e-3);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(format_log_line(la[e]) == format_log_line(lb[e]));
    CHECK(std::isfinite(la[e].total));
    CHECK(la[e].total == doctest::Approx(0.01 * la[e].cls + la[e].bbox).epsilon(1e-12));
  }
  const auto pa = a.parameters().tensors(), pb = b.parameters().tensors();
  const auto fresh = model::TrackerModel(model::ModelConfig::desk(), 4).parameters().tensors();
  bool moved = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(same(pa[i], pb[i]));
    moved = moved || !same(pa[i], fresh[i]);
  }
  CHECK(moved);

  const auto dir = scratch("ckpt");
  save_training(a, la, dir / "checkpoint.dmf", dir / "train_log.csv");
  model::TrackerModel c(model::ModelConfig::desk(), 99);
  auto params = c.parameters();
  load_checkpoint(dir / "checkpoint.dmf", params);
  const auto pc = c.parameters().tensors();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same(pa[i], pc[i]));
  std::filesystem::remove_all(dir);

  TrainConfig bad = cfg;
  bad.lr_decay_factor = 1.0;
  CHECK_THROWS_AS(train(a, data, bad), ValueError);
  CHECK_THROWS_AS(train(a, {}, cfg), ValueError);
}

TEST_CASE("tracker: initial samples, gate, memory bound, box bounds") {
  const auto seq = scene(8, 4.0);
  model::TrackerModel m(model::ModelConfig::desk(), 11);
  TrackerConfig cfg;
  const auto state = init_tracker(seq.rgb[0], seq.depth[0], seq.boxes[0], m, cfg);
  CHECK(state.memory.size() == 15);
  CHECK(state.initial_count == 15);
  CHECK(state.current_box == seq.boxes[0]);
  {
    NoGradGuard guard;
    const auto p = make_patch(seq.rgb[0], seq.depth[0], seq.boxes[0], Augmentation{}, 5.0, 96, 1e4);
    const Tensor fused = m.fused_features(p.rgb, p.depth);
    CHECK(same(state.memory[0].features, model::classification_features(fused, m.head(), m.config().filter)));
    CHECK(same(state.memory[0].labels,
               model::gaussian_labels(p.box, fused.dim(1), fused.dim(2), m.stride(), m.config().labels)));
    CHECK(!same(state.memory[1].features, state.memory[0].features));
  }

  SUBCASE("below the gate nothing is learned") {
    auto s = state;
    s.config.confidence_gate = 1e9;
    const auto r = track_step(s, seq.rgb[1], seq.depth[1], m);
    CHECK(s.memory.size() == 15);
    CHECK(same(s.filter, state.filter));
    CHECK(s.last_confidence == r.confidence);
    CHECK(s.current_box == r.box);
  }

  SUBCASE("memory stays bounded and keeps the initial samples") {
    auto s = state;
    s.config.confidence_gate = -1e9;
    s.config.memory_capacity = 17;
    for (std::size_t t = 1; t < seq.length(); ++t) {
      const auto r = track_step(s, seq.rgb[t], seq.depth[t], m);
      CHECK(s.memory.size() == std::min<std::size_t>(15 + t, 17));
      CHECK(r.box.x >= 0.0);
      CHECK(r.box.y >= 0.0);
      CHECK(r.box.w > 0.0);
      CHECK(r.box.h > 0.0);
      CHECK(r.box.x + r.box.w <= 160.0);
      CHECK(r.box.y + r.box.h <= 120.0);
    }
    CHECK(!same(s.filter, state.filter));
    for (std::size_t i = 0; i < 15; ++i) CHECK(same(s.memory[i].features, state.memory[i].features));
  }

  TrackerConfig bad;
  bad.memory_capacity = 10;
  CHECK_THROWS_AS(init_tracker(seq.rgb[0], seq.depth[0], seq.boxes[0], m, bad), ValueError);
}

TEST_CASE("track_sequence: one frame and whole sequences") {
  model::TrackerModel m(model::ModelConfig::desk(), 11);
  const auto one = scene(1);
  const auto out = track_sequence(one, m, TrackerConfig{});
  REQUIRE(out.boxes.size() == 1);
  CHECK(out.boxes[0] == one.boxes[0]);
  CHECK(out.confidences[0] == 1.0);
  CHECK(mean_overlap(one, out) == 1.0);

  const auto seq = scene(5, 6.0, 3);
  TrackerConfig cfg;
  cfg.init_samples = 3;
  const auto a = track_sequence(seq, m, cfg);
  const auto b = track_sequence(seq, m, cfg);
  CHECK(a.boxes.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(a.boxes[t] == b.boxes[t]);
    CHECK(a.confidences[t] == b.confidences[t]);
    CHECK(a.boxes[t].w > 0.0);
    CHECK(a.boxes[t].x + a.boxes[t].w <= 160.0);
  }

  auto hidden = scene(2);
  hidden.visible[0] = false;
  CHECK_THROWS_AS(track_sequence(hidden, m, cfg), ValueError);
}
