#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmt/evalkit/evalkit.hpp"
#include "dmt/numcore/rng.hpp"

namespace dmt::eval::oracle {

/// A random micro-instance: groundtruth with some absent frames and a trace
/// mixing exact, jittered, disjoint and missing predictions. Confidences sit
/// on the 0.01 grid so that the sweep hits ties.
struct Instance {
  std::vector<BBox> gt;
  std::vector<bool> visible;
  PredictionTrace trace;
};

Instance random_instance(SplitMix64& rng, std::size_t frames);

/// Brute-force re-implementations: one outer loop over thresholds, one inner
/// loop over frames, boxes handled as corner coordinates.
double brute_iou(const BBox& a, const BBox& b);
void brute_pr_re(const Instance& inst, std::vector<double>& pr, std::vector<double>& re);
std::vector<double> brute_success(const std::vector<double>& overlaps);

struct EquivalenceReport {
  std::size_t instances = 0;
  std::size_t mismatches = 0;
  double max_auc_gap = 0.0;  // |AUC − mean overlap|
  std::string first_failure;
  bool passed() const { return mismatches == 0 && max_auc_gap <= 1.0 / 101.0 + 1e-12; }
};

/// Compares pr_re_f and success_auc bit-exactly against the brute-force
/// versions on `count` random instances.
EquivalenceReport check_equivalence(std::size_t count, std::size_t frames, std::uint64_t seed);

}  // namespace dmt::eval::oracle
