#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dmt/numcore/errors.hpp"
#include "dmt/synthdata/synthdata.hpp"

namespace fs = std::filesystem;

namespace dmt::synth {

namespace {

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08zu.png", index + 1);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

double parse_double(const std::string& token, const fs::path& file, std::size_t line) {
  if (token == "nan") return std::nan("");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw IoError(file.string() + ":" + std::to_string(line) + ": bad number '" + token + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& token, const fs::path& file, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw IoError(file.string() + ":" + std::to_string(line) + ": bad integer '" + token + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_sequence(const Sequence& seq, const fs::path& dir) {
  const std::size_t n = seq.length();
  if (seq.depth.size() != n || seq.boxes.size() != n || seq.visible.size() != n) {
    throw ValueError("write_sequence: per-frame lists differ in length");
  }
  std::error_code ec;
  fs::create_directories(dir / "color", ec);
  fs::create_directories(dir / "depth", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string gt;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& rgb = seq.rgb[t];
    cv::Mat bgr(static_cast<int>(rgb.height), static_cast<int>(rgb.width), CV_8UC3);
    for (std::size_t p = 0; p < rgb.width * rgb.height; ++p) {
      bgr.data[3 * p] = rgb.pixels[3 * p + 2];
      bgr.data[3 * p + 1] = rgb.pixels[3 * p + 1];
      bgr.data[3 * p + 2] = rgb.pixels[3 * p];
    }
    const auto color_path = dir / "color" / frame_name(t);
    if (!cv::imwrite(color_path.string(), bgr)) throw IoError("failed writing " + color_path.string());

    const auto& d = seq.depth[t];
    cv::Mat depth(static_cast<int>(d.height), static_cast<int>(d.width), CV_16UC1,
                  const_cast<std::uint16_t*>(d.pixels.data()));
    const auto depth_path = dir / "depth" / frame_name(t);
    if (!cv::imwrite(depth_path.string(), depth)) throw IoError("failed writing " + depth_path.string());

    const auto& b = seq.boxes[t];
    gt += format_double(b.x) + "," + format_double(b.y) + "," + format_double(b.w) + "," + format_double(b.h) + "\n";
  }
  write_text(dir / "groundtruth.txt", gt);
  std::string tags;
  for (const auto& tag : seq.tags) tags += tag + "\n";
  write_text(dir / "attributes.txt", tags);
  write_text(dir / "meta.txt", "width=" + std::to_string(seq.width) + "\nheight=" + std::to_string(seq.height) +
                                   "\nlength=" + std::to_string(n) + "\nseed=" + std::to_string(seq.seed) + "\n");
}

Annotations read_annotations(const fs::path& dir) {
  Annotations ann;
  const auto gt_path = dir / "groundtruth.txt";
  const auto gt = read_lines(gt_path);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].empty() && i + 1 == gt.size()) break;
    std::vector<double> v;
    std::stringstream ss(gt[i]);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(parse_double(tok, gt_path, i + 1));
    if (v.size() != 4) throw IoError(gt_path.string() + ":" + std::to_string(i + 1) + ": expected 4 values");
    BBox b{v[0], v[1], v[2], v[3]};
    ann.boxes.push_back(b);
    ann.visible.push_back(!std::isnan(b.x));
  }
  const auto attr_path = dir / "attributes.txt";
  if (fs::exists(attr_path)) {
    for (const auto& line : read_lines(attr_path)) {
      if (!line.empty()) ann.tags.push_back(line);
    }
  }
  return ann;
}

Sequence read_sequence(const fs::path& dir) {
  Sequence seq;
  const auto meta_path = dir / "meta.txt";
  std::size_t length = 0;
  bool has_w = false, has_h = false, has_len = false;
  const auto meta = read_lines(meta_path);
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (meta[i].empty()) continue;
    const auto eq = meta[i].find('=');
    if (eq == std::string::npos) throw IoError(meta_path.string() + ":" + std::to_string(i + 1) + ": expected key=value");
    const std::string key = meta[i].substr(0, eq), value = meta[i].substr(eq + 1);
    const auto v = parse_uint(value, meta_path, i + 1);
    if (key == "width") { seq.width = v; has_w = true; }
    else if (key == "height") { seq.height = v; has_h = true; }
    else if (key == "length") { length = v; has_len = true; }
    else if (key == "seed") seq.seed = v;
    else throw IoError(meta_path.string() + ":" + std::to_string(i + 1) + ": unknown key '" + key + "'");
  }
  if (!has_w || !has_h || !has_len) throw IoError(meta_path.string() + ": width, height and length are required");

  auto ann = read_annotations(dir);
  if (ann.boxes.size() != length) {
    throw IoError((dir / "groundtruth.txt").string() + ": expected " + std::to_string(length) + " lines, found " +
                  std::to_string(ann.boxes.size()));
  }
  seq.boxes = std::move(ann.boxes);
  seq.visible = std::move(ann.visible);
  seq.tags = std::move(ann.tags);

  for (std::size_t t = 0; t < length; ++t) {
    const auto color_path = dir / "color" / frame_name(t);
    if (!fs::exists(color_path)) throw IoError("frame " + std::to_string(t) + ": missing color file " + color_path.string());
    cv::Mat bgr = cv::imread(color_path.string(), cv::IMREAD_COLOR);
    if (bgr.empty() || bgr.type() != CV_8UC3 || static_cast<std::size_t>(bgr.cols) != seq.width ||
        static_cast<std::size_t>(bgr.rows) != seq.height) {
      throw IoError("frame " + std::to_string(t) + ": unreadable or mis-sized color file " + color_path.string());
    }
    RgbImage rgb{seq.width, seq.height, std::vector<std::uint8_t>(3 * seq.width * seq.height)};
    for (int y = 0; y < bgr.rows; ++y) {
      const auto* row = bgr.ptr<std::uint8_t>(y);
      for (int x = 0; x < bgr.cols; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * seq.width + static_cast<std::size_t>(x);
        rgb.pixels[3 * p] = row[3 * x + 2];
        rgb.pixels[3 * p + 1] = row[3 * x + 1];
        rgb.pixels[3 * p + 2] = row[3 * x];
      }
    }
    seq.rgb.push_back(std::move(rgb));

    const auto depth_path = dir / "depth" / frame_name(t);
    if (!fs::exists(depth_path)) throw IoError("frame " + std::to_string(t) + ": missing depth file " + depth_path.string());
    cv::Mat dm = cv::imread(depth_path.string(), cv::IMREAD_UNCHANGED);
    if (dm.empty() || dm.type() != CV_16UC1 || static_cast<std::size_t>(dm.cols) != seq.width ||
        static_cast<std::size_t>(dm.rows) != seq.height) {
      throw IoError("frame " + std::to_string(t) + ": unreadable or mis-sized depth file " + depth_path.string());
    }
    DepthImage depth{seq.width, seq.height, std::vector<std::uint16_t>(seq.width * seq.height)};
    for (int y = 0; y < dm.rows; ++y) {
      const auto* row = dm.ptr<std::uint16_t>(y);
      std::copy(row, row + dm.cols, depth.pixels.begin() + static_cast<long>(y) * dm.cols);
    }
    seq.depth.push_back(std::move(depth));
  }
  return seq;
}

}  // namespace dmt::synth
