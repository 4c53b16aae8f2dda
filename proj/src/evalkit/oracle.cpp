#include "dmt/evalkit/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace dmt::eval::oracle {

Instance random_instance(SplitMix64& rng, std::size_t frames) {
  Instance inst;
  for (std::size_t t = 0; t < frames; ++t) {
    const bool vis = !rng.coin(0.2);
    const BBox g{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(2, 20), rng.uniform(2, 20)};
    inst.visible.push_back(vis);
    inst.gt.push_back(vis ? g : BBox::absent());

    Prediction p;
    p.confidence = static_cast<double>(rng.below(101)) / 100.0;
    switch (rng.below(4)) {
      case 0: break;  // no prediction
      case 1: p.box = g; break;
      case 2: p.box = BBox{g.x + rng.uniform(-4, 4), g.y + rng.uniform(-4, 4), g.w * rng.uniform(0.7, 1.3), g.h}; break;
      default: p.box = BBox{g.x + 200, g.y, g.w, g.h}; break;
    }
    if (!p.box) p.confidence = 0.0;
    inst.trace.push_back(p);
  }
  return inst;
}

double brute_iou(const BBox& a, const BBox& b) {
  if (!(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0) || std::isnan(a.x) || std::isnan(b.x)) return 0.0;
  const double ax1 = a.x, ay1 = a.y, ax2 = a.x + a.w, ay2 = a.y + a.h;
  const double bx1 = b.x, by1 = b.y, bx2 = b.x + b.w, by2 = b.y + b.h;
  const double left = ax1 > bx1 ? ax1 : bx1;
  const double right = ax2 < bx2 ? ax2 : bx2;
  const double top = ay1 > by1 ? ay1 : by1;
  const double bottom = ay2 < by2 ? ay2 : by2;
  if (!(right > left) || !(bottom > top)) return 0.0;
  const double inter = (right - left) * (bottom - top);
  return inter / (a.w * a.h + b.w * b.h - inter);
}

void brute_pr_re(const Instance& inst, std::vector<double>& pr, std::vector<double>& re) {
  pr.assign(101, 0.0);
  re.assign(101, 0.0);
  for (int k = 0; k <= 100; ++k) {
    const double tau = k / 100.0;
    double num_p = 0.0, num_g = 0.0;
    int count_p = 0, count_g = 0;
    for (std::size_t t = 0; t < inst.gt.size(); ++t) {
      const bool predicted = inst.trace[t].box.has_value() && inst.trace[t].confidence >= tau;
      const double omega = predicted && inst.visible[t] ? brute_iou(*inst.trace[t].box, inst.gt[t]) : 0.0;
      if (predicted) {
        ++count_p;
        num_p += omega;
      }
      if (inst.visible[t]) {
        ++count_g;
        num_g += omega;
      }
    }
    pr[k] = count_p == 0 ? 0.0 : num_p / count_p;
    re[k] = count_g == 0 ? 0.0 : num_g / count_g;
  }
}

std::vector<double> brute_success(const std::vector<double>& overlaps) {
  std::vector<double> curve(101);
  for (int k = 0; k <= 100; ++k) {
    int hits = 0;
    for (double s : overlaps)
      if (s > k / 100.0) ++hits;
    curve[k] = static_cast<double>(hits) / static_cast<double>(overlaps.size());
  }
  return curve;
}

EquivalenceReport check_equivalence(std::size_t count, std::size_t frames, std::uint64_t seed) {
  EquivalenceReport rep;
  SplitMix64 root(seed);
  auto fail = [&](std::size_t i, const std::string& what) {
    if (rep.mismatches++ == 0) rep.first_failure = "instance " + std::to_string(i) + ": " + what;
  };
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 rng = root.fork(i);
    const Instance inst = random_instance(rng, frames);
    ++rep.instances;

    const auto fast = pr_re_f(inst.trace, inst.gt, inst.visible);
    std::vector<double> pr, re;
    brute_pr_re(inst, pr, re);
    for (std::size_t k = 0; k < 101; ++k) {
      if (fast.precision.values[k] != pr[k]) fail(i, "precision differs at tau index " + std::to_string(k));
      if (fast.recall.values[k] != re[k]) fail(i, "recall differs at tau index " + std::to_string(k));
      const double f = pr[k] + re[k] > 0 ? 2 * pr[k] * re[k] / (pr[k] + re[k]) : 0.0;
      if (fast.f.values[k] != f) fail(i, "F differs at tau index " + std::to_string(k));
    }

    std::vector<double> overlaps;
    for (std::size_t t = 0; t < frames; ++t) {
      const BBox p = inst.trace[t].box ? *inst.trace[t].box : BBox::absent();
      const double s = iou(p, inst.gt[t]);
      if (s != brute_iou(p, inst.gt[t])) fail(i, "iou differs at frame " + std::to_string(t));
      overlaps.push_back(s);
    }
    const auto curve = success_auc(overlaps);
    const auto brute = brute_success(overlaps);
    double sum = 0.0, mean = 0.0;
    for (std::size_t k = 0; k < 101; ++k) {
      if (curve.values[k] != brute[k]) fail(i, "success curve differs at threshold index " + std::to_string(k));
      sum += brute[k];
    }
    if (curve.summary != sum / 101.0) fail(i, "AUC differs");
    for (double s : overlaps) mean += s;
    mean /= static_cast<double>(overlaps.size());
    rep.max_auc_gap = std::max(rep.max_auc_gap, std::abs(curve.summary - mean));
  }
  return rep;
}

}  // namespace dmt::eval::oracle
