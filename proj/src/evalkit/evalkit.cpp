#include "dmt/evalkit/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dmt/numcore/errors.hpp"

namespace dmt::eval {

namespace {

constexpr std::size_t kSweep = 101;

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<double> sweep_thresholds() {
  std::vector<double> t(kSweep);
  for (std::size_t k = 0; k < kSweep; ++k) t[k] = static_cast<double>(k) / 100.0;
  return t;
}

double iou(const BBox& a, const BBox& b) {
  if (!a.present() || !b.present()) return 0.0;
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

MetricCurve success_auc(const std::vector<double>& overlaps) {
  if (overlaps.empty()) throw ValueError("success_auc: empty overlap list");
  MetricCurve c;
  c.thresholds = sweep_thresholds();
  c.values.resize(kSweep);
  double total = 0.0;
  for (std::size_t k = 0; k < kSweep; ++k) {
    std::size_t above = 0;
    for (double s : overlaps) above += s > c.thresholds[k];
    c.values[k] = static_cast<double>(above) / static_cast<double>(overlaps.size());
    total += c.values[k];
  }
  c.summary = total / static_cast<double>(kSweep);
  return c;
}

double f_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

namespace {

void finish(LongTermResult& r) {
  r.f.values.resize(kSweep);
  for (std::size_t k = 0; k < kSweep; ++k) {
    r.f.values[k] = f_score(r.precision.values[k], r.recall.values[k]);
    if (k == 0 || r.f.values[k] > r.peak_f) {
      r.peak_f = r.f.values[k];
      r.peak_tau = r.f.thresholds[k];
      r.peak_precision = r.precision.values[k];
      r.peak_recall = r.recall.values[k];
    }
  }
  r.f.summary = r.peak_f;
  r.precision.summary = r.peak_precision;
  r.recall.summary = r.peak_recall;
}

}  // namespace

LongTermResult pr_re_f(const PredictionTrace& trace, const std::vector<BBox>& gt, const std::vector<bool>& visible) {
  if (trace.size() != gt.size() || gt.size() != visible.size()) {
    throw ValueError("pr_re_f: trace has " + std::to_string(trace.size()) + " frames, groundtruth " +
                     std::to_string(gt.size()) + ", visibility " + std::to_string(visible.size()));
  }
  const std::size_t n = trace.size();
  std::vector<double> omega(n, 0.0);
  std::size_t n_g = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (visible[t]) ++n_g;
    if (trace[t].box && visible[t]) omega[t] = iou(*trace[t].box, gt[t]);
  }

  LongTermResult r;
  r.precision.thresholds = r.recall.thresholds = r.f.thresholds = sweep_thresholds();
  r.precision.values.resize(kSweep);
  r.recall.values.resize(kSweep);
  r.f.values.resize(kSweep);
  for (std::size_t k = 0; k < kSweep; ++k) {
    const double tau = r.f.thresholds[k];
    std::size_t n_p = 0;
    double sum_p = 0.0, sum_g = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (!trace[t].box || trace[t].confidence < tau) continue;
      ++n_p;
      sum_p += omega[t];
      if (visible[t]) sum_g += omega[t];
    }
    const double pr = n_p > 0 ? sum_p / static_cast<double>(n_p) : 0.0;
    const double re = n_g > 0 ? sum_g / static_cast<double>(n_g) : 0.0;
    r.precision.values[k] = pr;
    r.recall.values[k] = re;
  }
  finish(r);
  return r;
}

LongTermResult aggregate(const std::vector<LongTermResult>& per_sequence) {
  if (per_sequence.empty()) throw ValueError("aggregate: no sequences");
  LongTermResult r;
  r.precision.thresholds = r.recall.thresholds = r.f.thresholds = sweep_thresholds();
  r.precision.values.assign(kSweep, 0.0);
  r.recall.values.assign(kSweep, 0.0);
  const double n = static_cast<double>(per_sequence.size());
  for (const auto& s : per_sequence) {
    for (std::size_t k = 0; k < kSweep; ++k) {
      r.precision.values[k] += s.precision.values[k] / n;
      r.recall.values[k] += s.recall.values[k] / n;
    }
  }
  finish(r);
  return r;
}

std::vector<AttributeRow> attribute_report(const std::vector<SequenceScore>& scores,
                                           const std::vector<std::string>& vocabulary) {
  std::map<std::string, std::pair<double, std::size_t>> groups;
  for (const auto& s : scores) {
    for (const auto& tag : s.tags) {
      if (std::find(vocabulary.begin(), vocabulary.end(), tag) == vocabulary.end()) {
        throw ValueError("attribute_report: sequence '" + s.name + "' has unknown tag '" + tag + "'");
      }
      auto& g = groups[tag];
      g.first += s.value;
      g.second += 1;
    }
  }
  std::vector<AttributeRow> rows;
  for (const auto& [tag, g] : groups) rows.push_back({tag, g.first / static_cast<double>(g.second), g.second});
  return rows;
}

void write_trace(const PredictionTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& p : trace) {
    if (!p.box) {
      out << "absent\n";
      continue;
    }
    out << shortest(p.box->x) << ',' << shortest(p.box->y) << ',' << shortest(p.box->w) << ','
        << shortest(p.box->h) << ',' << shortest(p.confidence) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

PredictionTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  PredictionTrace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "absent") {
      trace.push_back({});
      continue;
    }
    std::vector<double> v;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      double x = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
      v.push_back(x);
    }
    if (v.size() != 5) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected x,y,w,h,conf or absent");
    }
    if (v[4] < 0.0 || v[4] > 1.0) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": confidence outside [0,1]");
    }
    trace.push_back({BBox{v[0], v[1], v[2], v[3]}, v[4]});
  }
  return trace;
}

void write_curves(const LongTermResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "tau,pr,re,f\n";
  for (std::size_t k = 0; k < r.f.thresholds.size(); ++k) {
    out << fmt(r.f.thresholds[k], 2) << ',' << fmt(r.precision.values[k]) << ',' << fmt(r.recall.values[k]) << ','
        << fmt(r.f.values[k]) << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::string report_lines(const std::vector<MetricLine>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.metric + "," + l.tag + "," + fmt(l.value) + "\n";
  return out;
}

std::string format_table(const std::string& metric, const std::vector<AttributeRow>& rows) {
  std::string out = "tag    " + metric + "     n\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6s %-9s %zu\n", r.tag.c_str(), fmt(r.mean, 3).c_str(), r.count);
    out += buf;
  }
  return out;
}

}  // namespace dmt::eval
