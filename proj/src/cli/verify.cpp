#include "dmt/cli/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dmt/attention/attention.hpp"
#include "dmt/cli/config.hpp"
#include "dmt/evalkit/evalkit.hpp"
#include "dmt/evalkit/oracle.hpp"
#include "dmt/fusion/fusion.hpp"
#include "dmt/model/model.hpp"
#include "dmt/numcore/gradcheck.hpp"
#include "dmt/numcore/ops.hpp"

#ifndef DMT_FIXTURE_DIR
#define DMT_FIXTURE_DIR "fixtures"
#endif

namespace dmt::cli {

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// sum(x ⊙ R) with a fixed random R.
Tensor probe(const Tensor& x, std::uint64_t seed) {
  SplitMix64 rng(seed);
  return sum(mul(x, random_tensor(x.shape(), rng)));
}

// Blocky texture with a bright rectangle and a little per-pixel noise, so
// that ReLU pre-activations do not coincide across whole blocks.
Tensor structured_image(std::size_t side, const BBox& target, SplitMix64& rng) {
  const std::size_t cells = side / 8;
  std::vector<double> block(cells * cells * 3);
  for (auto& v : block) v = rng.uniform(0.0, 1.0);
  std::vector<double> img(3 * side * side);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const bool inside = x >= target.x && x < target.x + target.w && y >= target.y && y < target.y + target.h;
        const double base = inside ? 1.5 : block[(c * cells + y / 8) * cells + x / 8];
        img[(c * side + y) * side + x] = base + rng.uniform(-0.05, 0.05);
      }
  return Tensor::from({3, side, side}, std::move(img));
}

void randomize(Tensor& t, SplitMix64& rng, double lo, double hi) {
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
}

void sharpen_attention(fusion::CMIMParams& params, double factor) {
  for (auto& layer : params.layers) {
    for (auto* group : {&layer.mha.w_q, &layer.mha.w_k}) {
      for (auto& w : *group)
        for (auto& v : w.mutable_data()) v *= factor;
    }
  }
}

CheckLine run_check(const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> params,
                    std::size_t coords, std::uint64_t seed, double epsilon = 1e-5) {
  GradCheckOptions opts;
  opts.max_coords_per_param = coords;
  opts.epsilon = epsilon;
  opts.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = finite_diff_check(f, params, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[200];
  std::snprintf(buf, sizeof buf, "max rel error %.3e over %zu coords (%.1fs); worst: tensor %zu[%zu] %.6e vs %.6e",
                res.max_rel_error, res.coords_checked, secs, res.worst_param, res.worst_index, res.worst_analytic,
                res.worst_numeric);
  return {name, res.max_rel_error < kGradTolerance, buf};
}

// ReLU and hinge kinks: a smaller step makes crossing one unlikely.
constexpr double kKinkEpsilon = 1e-6;

std::vector<Tensor> with_inputs(const ParamSet& set, std::initializer_list<Tensor> inputs) {
  auto out = set.tensors();
  for (const auto& t : inputs) out.push_back(t);
  return out;
}

}  // namespace

std::vector<CheckLine> verify_gradcheck() {
  std::vector<CheckLine> lines;
  const auto desk = model::ModelConfig::desk();
  const std::size_t c = desk.backbone.out_channels();
  const std::size_t hw = desk.backbone.feature_size();
  SplitMix64 rng(4242);

  {
    const auto& cfg = desk.cmim.attention;
    auto p = attention::CMAParams::init(cfg, rng);
    for (auto* group : {&p.mha.w_q, &p.mha.w_k}) {
      for (auto& w : *group)
        for (auto& v : w.mutable_data()) v *= 4.0;
    }
    Tensor d = random_tensor({hw * hw, cfg.d_model}, rng).set_requires_grad(true);
    Tensor i = random_tensor({hw * hw, cfg.d_model}, rng).set_requires_grad(true);
    const Tensor pe = attention::pos_encoding_2d(hw, hw, cfg.d_model);
    ParamSet set;
    p.collect(set, "attention.cma");
    lines.push_back(run_check(
        "gradcheck.attention", [&] { return probe(attention::cma_block(d, i, p, cfg, pe, pe), 11); },
        with_inputs(set, {d, i}), 12, 1));
  }
  {
    auto p = fusion::CMIMParams::init(desk.cmim, rng);
    sharpen_attention(p, 4.0);
    Tensor i0 = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    Tensor d0 = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    ParamSet set;
    p.collect(set, "fusion.cmim");
    lines.push_back(run_check(
        "gradcheck.cmim", [&] { return probe(fusion::cmim(i0, d0, p, desk.cmim), 12); },
        with_inputs(set, {i0, d0}), 8, 2));
  }
  {
    auto p = fusion::SPMParams::init(c);
    randomize(p.v, rng, 0.5, 1.5);
    randomize(p.alpha, rng, 0.2, 0.8);
    randomize(p.beta, rng, 0.2, 0.8);
    Tensor f0 = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    Tensor i0 = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    Tensor d0 = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    ParamSet set;
    p.collect(set, "fusion.spm");
    lines.push_back(run_check(
        "gradcheck.spm", [&] { return probe(fusion::spm(f0, i0, d0, p), 13); }, with_inputs(set, {f0, i0, d0}), 64,
        3));
  }
  {
    auto p = model::BackboneParams::init(desk.backbone, rng);
    const std::size_t side = desk.backbone.input_size;
    const BBox box{36, 40, 24, 20};
    Tensor rgb = structured_image(side, box, rng), depth = structured_image(side, box, rng);
    ParamSet set;
    p.collect(set, "model.backbone", desk.backbone);
    lines.push_back(run_check(
        "gradcheck.backbone",
        [&] {
          auto [i0, d0] = model::extract(rgb, depth, p, desk.backbone);
          return add(probe(i0, 14), probe(d0, 15));
        },
        set.tensors(), 12, 4, kKinkEpsilon));
  }
  {
    auto head = model::HeadParams::init(c, desk.cls_channels, rng);
    randomize(head.reg_w, rng, -0.05, 0.05);
    Tensor fused = random_tensor({c, hw, hw}, rng).set_requires_grad(true);
    const double stride = static_cast<double>(desk.backbone.downsample());
    const Tensor labels =
        model::gaussian_labels(BBox{40, 36, 20, 24}, hw, hw, stride, desk.labels);
    ParamSet set;
    head.collect(set, "model.head");
    lines.push_back(run_check(
        "gradcheck.heads",
        [&] {
          Tensor feats = model::classification_features(fused, head, desk.filter);
          std::vector<Tensor> fs = {feats}, ls = {labels};
          auto learned = model::learn_filter(fs, ls, desk.filter);
          Tensor scores = model::classify(learned.filter, feats);
          Tensor box = model::regress_box(fused, 6, 5, stride, 20.0, 24.0, head);
          return add(probe(scores, 16), probe(box, 17));
        },
        with_inputs(set, {fused}), 16, 5, kKinkEpsilon));
  }
  {
    model::TrackerModel m(desk, 9);
    randomize(m.head().reg_w, rng, -0.05, 0.05);
    randomize(m.template_fusion()->spm_params().v, rng, 0.5, 1.5);
    sharpen_attention(m.template_fusion()->cmim_params(), 4.0);
    for (auto& v : m.template_fusion()->cmim_params().expand_w.mutable_data()) v *= 4.0;
    const std::size_t side = desk.backbone.input_size;
    const BBox tb{38, 38, 20, 20}, sb{42, 35, 22, 18};
    model::PairInputs pair{structured_image(side, tb, rng), structured_image(side, tb, rng), tb,
                           structured_image(side, sb, rng), structured_image(side, sb, rng), sb};
    lines.push_back(run_check(
        "gradcheck.loss_total", [&] { return model::pair_loss(m, pair).total; }, m.parameters().tensors(), 3, 6));
  }
  return lines;
}

std::vector<CheckLine> verify_metrics(std::size_t instances, std::size_t frames, std::uint64_t seed) {
  std::vector<CheckLine> lines;
  const auto rep = eval::oracle::check_equivalence(instances, frames, seed);
  {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu instances, %zu mismatches, max |AUC - mean overlap| %.6f", rep.instances,
                  rep.mismatches, rep.max_auc_gap);
    std::string detail = buf;
    if (!rep.first_failure.empty()) detail += "; first: " + rep.first_failure;
    lines.push_back({"metrics.brute_force_equivalence", rep.passed(), detail});
  }
  {
    SplitMix64 rng(seed + 1);
    std::vector<double> overlaps(50);
    for (auto& s : overlaps) s = rng.uniform();
    double mean = 0.0;
    for (double s : overlaps) mean += s / 50.0;
    const double gap = std::abs(eval::success_auc(overlaps).summary - mean);
    char buf[120];
    std::snprintf(buf, sizeof buf, "|AUC - mean overlap| = %.6f on 50 random overlaps", gap);
    lines.push_back({"metrics.auc_mean_identity", gap <= 0.01, buf});
  }
  {
    std::vector<BBox> gt;
    std::vector<bool> visible;
    eval::PredictionTrace trace;
    for (std::size_t t = 0; t < 12; ++t) {
      const bool vis = t % 5 != 3;
      visible.push_back(vis);
      if (vis) {
        gt.push_back({10.0 + t, 20.0, 15.0, 12.5});
        trace.push_back({gt.back(), 1.0});
      } else {
        gt.push_back({std::nan(""), std::nan(""), std::nan(""), std::nan("")});
        trace.push_back({});
      }
    }
    const auto r = eval::pr_re_f(trace, gt, visible);
    bool ok = true;
    for (double f : r.f.values) ok = ok && f == 1.0;
    lines.push_back({"metrics.perfect_trace", ok, ok ? "F = 1 at every threshold" : "F below 1 somewhere"});
  }
  return lines;
}

std::vector<PublishedRow> read_published_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PublishedRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#' || line.rfind("benchmark,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 6) throw IoError(where + ": expected benchmark,method,type,pr,re,f");
    PublishedRow r{f[0], f[1], f[2], 0.0, 0.0, 0.0, lineno};
    try {
      std::size_t used = 0;
      for (auto [field, dst] : {std::pair{3, &r.precision}, std::pair{4, &r.recall}, std::pair{5, &r.f}}) {
        *dst = std::stod(f[field], &used);
        if (used != f[field].size()) throw std::invalid_argument(f[field]);
      }
    } catch (const std::exception&) {
      throw IoError(where + ": bad number in '" + line + "'");
    }
    rows.push_back(r);
  }
  if (rows.empty()) throw IoError(path.string() + ": no rows");
  return rows;
}

std::vector<CheckLine> verify_tables(const std::filesystem::path& path) {
  std::vector<CheckLine> lines;
  for (const auto& row : read_published_table(path)) {
    const double f = eval::f_score(row.precision, row.recall);
    const double gap = std::abs(f - row.f);
    char buf[160];
    std::snprintf(buf, sizeof buf, "Pr %.3f Re %.3f printed F %.3f recomputed %.4f (gap %.4f)", row.precision,
                  row.recall, row.f, f, gap);
    lines.push_back({"tables." + row.benchmark + "." + row.method, gap <= kTableTolerance + 1e-12, buf});
  }
  return lines;
}

std::filesystem::path fixture_dir() { return DMT_FIXTURE_DIR; }

}  // namespace dmt::cli
