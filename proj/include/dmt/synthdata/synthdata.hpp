#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmt/numcore/bbox.hpp"

namespace dmt::synth {

struct RgbImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

struct DepthImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> pixels;  // millimetres, row-major

  friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

enum class ShapeKind { Disk, Rectangle };
enum class Background { Plain, Clutter };

struct Color {
  double r = 0.0, g = 0.0, b = 0.0;  // 0..255
  friend bool operator==(const Color&, const Color&) = default;
};

struct ObjectSpec {
  ShapeKind shape = ShapeKind::Disk;
  Color color{220, 60, 40};
  double width = 20.0;   // disk diameter uses width
  double height = 20.0;
  double x = 80.0;       // initial centre
  double y = 60.0;
  double vx = 0.0;       // pixels per frame
  double vy = 0.0;
  /// Every `turn_period` frames the velocity turns by a seeded angle in [-90°, 90°]; 0 disables.
  std::size_t turn_period = 0;
  /// Reflect off the frame border instead of leaving the frame.
  bool bounce = true;
  double depth_mm = 2000.0;
  double depth_velocity = 0.0;  // mm per frame

  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct OccluderSpec {
  ObjectSpec object;
  std::size_t frame_begin = 0;  // visible in [begin, end)
  std::size_t frame_end = 0;

  friend bool operator==(const OccluderSpec&, const OccluderSpec&) = default;
};

/// Attribute vocabulary.
inline const std::vector<std::string>& known_tags() {
  static const std::vector<std::string> tags = {"BC", "DS", "SO", "FM", "PO", "DC"};
  return tags;
}

struct SceneSpec {
  std::size_t width = 160;
  std::size_t height = 120;
  std::size_t length = 60;
  ObjectSpec target;
  std::vector<ObjectSpec> distractors;
  std::vector<OccluderSpec> occluders;
  double illumination = 1.0;
  Background background = Background::Plain;
  Color background_color{90, 100, 110};
  double background_depth_mm = 5000.0;
  std::vector<std::string> tags;

  /// Throws ValueError naming the violated rule.
  void validate() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Sequence {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint64_t seed = 0;
  std::vector<RgbImage> rgb;
  std::vector<DepthImage> depth;
  std::vector<BBox> boxes;     // absent boxes are NaN
  std::vector<bool> visible;
  std::vector<std::string> tags;

  std::size_t length() const { return rgb.size(); }
  friend bool operator==(const Sequence& a, const Sequence& b);
};

/// Renders the scene with a z-buffer (smaller depth wins). The target is
/// invisible when more than 90% of its in-frame silhouette is covered or no
/// part of it is in frame; visible boxes are the pixel bounds of the in-frame
/// silhouette.
Sequence generate(const SceneSpec& spec, std::uint64_t seed);

/// Maps frame coordinates to patch coordinates: p = (f - origin)·scale.
struct CropTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double scale = 1.0;

  double to_patch_x(double x) const { return (x - origin_x) * scale; }
  double to_patch_y(double y) const { return (y - origin_y) * scale; }
  double to_frame_x(double u) const { return u / scale + origin_x; }
  double to_frame_y(double v) const { return v / scale + origin_y; }
  BBox to_patch(const BBox& b) const { return {to_patch_x(b.x), to_patch_y(b.y), b.w * scale, b.h * scale}; }
  BBox to_frame(const BBox& b) const { return {to_frame_x(b.x), to_frame_y(b.y), b.w / scale, b.h / scale}; }
};

struct Patch {
  std::size_t channels = 0;
  std::size_t size = 0;
  std::vector<double> data;  // planar channels×size×size, source units
  CropTransform transform;
};

/// Square crop of side factor·sqrt(w·h) centred on the box, edge padded,
/// bilinearly resampled to out_size×out_size at pixel centres.
Patch crop(const RgbImage& frame, const BBox& box, double factor, std::size_t out_size);
Patch crop(const DepthImage& frame, const BBox& box, double factor, std::size_t out_size);

/// color/%08d.png, depth/%08d.png (1-based), groundtruth.txt, attributes.txt, meta.txt.
void write_sequence(const Sequence& seq, const std::filesystem::path& dir);
Sequence read_sequence(const std::filesystem::path& dir);

/// Groundtruth and tags only, without touching the image files.
struct Annotations {
  std::vector<BBox> boxes;
  std::vector<bool> visible;
  std::vector<std::string> tags;
};
Annotations read_annotations(const std::filesystem::path& dir);

/// Shortest round-trip decimal for a double, "nan" for NaN.
std::string format_double(double v);

enum class SuiteKind {
  Easy,             // plain background, one slow target
  Training,         // mixed attributes
  DistractorDark,   // clutter, similar distractors, low light
  Absence,          // target leaves the frame
};

/// Seeded scene specs for a named suite.
std::vector<SceneSpec> make_suite(SuiteKind kind, std::size_t count, std::uint64_t seed);
/// Renders make_suite(kind, count, seed); sequence i uses sequence_seed(seed, i).
std::vector<Sequence> generate_suite(SuiteKind kind, std::size_t count, std::uint64_t seed);
std::uint64_t sequence_seed(std::uint64_t seed, std::size_t index);
std::string suite_name(SuiteKind kind);
SuiteKind parse_suite(const std::string& name);

}  // namespace dmt::synth
