#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmt/numcore/bbox.hpp"

namespace dmt::eval {

struct Prediction {
  std::optional<BBox> box;  // nullopt: tracker reports the target absent
  double confidence = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

using PredictionTrace = std::vector<Prediction>;

struct MetricCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double summary = 0.0;
};

/// The 101 thresholds k/100, k = 0..100.
std::vector<double> sweep_thresholds();

/// Intersection over union with exact rectangle arithmetic; 0 for degenerate
/// or disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Curve value at θ = fraction of overlaps strictly above θ; summary is the
/// mean of the sampled values (the AUC).
MetricCurve success_auc(const std::vector<double>& overlaps);

/// F = 2·Pr·Re/(Pr+Re), 0 when Pr+Re = 0.
double f_score(double precision, double recall);

struct LongTermResult {
  MetricCurve precision;
  MetricCurve recall;
  MetricCurve f;  // summary = peak F
  double peak_f = 0.0;
  double peak_tau = 0.0;  // lowest τ attaining the peak
  double peak_precision = 0.0;
  double peak_recall = 0.0;
};

/// Long-term precision/recall/F over the confidence sweep. A prediction
/// survives threshold τ when its confidence is ≥ τ. Predictions on frames
/// where the target is absent count toward N_p with overlap 0. Pr = 0 when no
/// prediction survives; Re = 0 when no frame is visible.
LongTermResult pr_re_f(const PredictionTrace& trace, const std::vector<BBox>& gt, const std::vector<bool>& visible);

/// Dataset-level curves: Pr(τ) and Re(τ) averaged over sequences, F from the
/// averages, peak taken over the sweep.
LongTermResult aggregate(const std::vector<LongTermResult>& per_sequence);

struct SequenceScore {
  std::string name;
  std::vector<std::string> tags;
  double value = 0.0;
};

struct AttributeRow {
  std::string tag;
  double mean = 0.0;
  std::size_t count = 0;
};

/// Groups scores by tag and averages them; rows sorted by tag, tags with no
/// sequences omitted. Throws ValueError for a tag outside the vocabulary.
std::vector<AttributeRow> attribute_report(const std::vector<SequenceScore>& scores,
                                           const std::vector<std::string>& vocabulary);

/// Per-line "x,y,w,h,conf" or "absent".
void write_trace(const PredictionTrace& trace, const std::filesystem::path& path);
PredictionTrace read_trace(const std::filesystem::path& path);

/// "tau,pr,re,f" per line, with a header.
void write_curves(const LongTermResult& r, const std::filesystem::path& path);

struct MetricLine {
  std::string metric;
  std::string tag;
  double value = 0.0;
};

/// Machine-readable "metric,tag,value" lines.
std::string report_lines(const std::vector<MetricLine>& lines);

/// Plain text table of attribute rows.
std::string format_table(const std::string& metric, const std::vector<AttributeRow>& rows);

}  // namespace dmt::eval
