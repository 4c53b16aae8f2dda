#include <algorithm>
#include <cmath>
#include <numbers>

#include "dmt/numcore/errors.hpp"
#include "dmt/numcore/rng.hpp"
#include "dmt/synthdata/synthdata.hpp"

namespace dmt::synth {

namespace {

constexpr double kMinDepth = 300.0;
constexpr double kMaxDepth = 65000.0;

bool has_tag(const SceneSpec& s, const std::string& tag) {
  return std::find(s.tags.begin(), s.tags.end(), tag) != s.tags.end();
}

void validate_object(const ObjectSpec& o, const std::string& what) {
  if (!(o.width > 0.0) || !(o.height > 0.0)) throw ValueError(what + ": sizes must be positive");
  if (!(o.depth_mm >= kMinDepth && o.depth_mm <= kMaxDepth)) {
    throw ValueError(what + ": depth_mm must lie in [300, 65000]");
  }
  for (double v : {o.x, o.y, o.vx, o.vy, o.depth_velocity}) {
    if (!std::isfinite(v)) throw ValueError(what + ": non-finite motion parameter");
  }
}

struct ObjectState {
  double x, y, depth;
};

// Per-frame centre and depth of one object, simulated from frame 0.
std::vector<ObjectState> simulate(const ObjectSpec& o, std::size_t length, double width, double height,
                                  SplitMix64 rng) {
  std::vector<ObjectState> out;
  out.reserve(length);
  double x = o.x, y = o.y, vx = o.vx, vy = o.vy;
  const double hw = 0.5 * o.width, hh = 0.5 * (o.shape == ShapeKind::Disk ? o.width : o.height);
  for (std::size_t t = 0; t < length; ++t) {
    const double depth = std::clamp(o.depth_mm + o.depth_velocity * static_cast<double>(t), kMinDepth, kMaxDepth);
    out.push_back({x, y, depth});
    if (o.turn_period > 0 && (t + 1) % o.turn_period == 0) {
      const double a = rng.uniform(-0.5, 0.5) * std::numbers::pi;
      const double c = std::cos(a), s = std::sin(a);
      const double nvx = c * vx - s * vy, nvy = s * vx + c * vy;
      vx = nvx;
      vy = nvy;
    }
    x += vx;
    y += vy;
    if (o.bounce) {
      if (x < hw) { x = 2 * hw - x; vx = std::abs(vx); }
      if (x > width - hw) { x = 2 * (width - hw) - x; vx = -std::abs(vx); }
      if (y < hh) { y = 2 * hh - y; vy = std::abs(vy); }
      if (y > height - hh) { y = 2 * (height - hh) - y; vy = -std::abs(vy); }
    }
  }
  return out;
}

bool covers(const ObjectSpec& o, const ObjectState& s, double px, double py) {
  const double dx = px - s.x, dy = py - s.y;
  if (o.shape == ShapeKind::Disk) {
    const double r = 0.5 * o.width;
    return dx * dx + dy * dy <= r * r;
  }
  return dx >= -0.5 * o.width && dx < 0.5 * o.width && dy >= -0.5 * o.height && dy < 0.5 * o.height;
}

struct PixelSpan {
  long x0, x1, y0, y1;  // inclusive-exclusive, clipped to frame
};

PixelSpan bounds(const ObjectSpec& o, const ObjectState& s, std::size_t w, std::size_t h) {
  const double hw = 0.5 * o.width + 1.0, hh = 0.5 * (o.shape == ShapeKind::Disk ? o.width : o.height) + 1.0;
  auto clip = [](double v, std::size_t hi) {
    return static_cast<long>(std::clamp(v, 0.0, static_cast<double>(hi)));
  };
  return {clip(std::floor(s.x - hw), w), clip(std::ceil(s.x + hw), w), clip(std::floor(s.y - hh), h),
          clip(std::ceil(s.y + hh), h)};
}

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

struct Blob {
  double x, y, w, h, depth;
  Color color;
};

}  // namespace

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw ValueError("scene: frame must be at least 8×8");
  if (length == 0) throw ValueError("scene: length must be positive");
  if (!(illumination >= 0.0 && illumination <= 1.0)) throw ValueError("scene: illumination must lie in [0, 1]");
  if (!(background_depth_mm >= kMinDepth && background_depth_mm <= kMaxDepth)) {
    throw ValueError("scene: background_depth_mm must lie in [300, 65000]");
  }
  validate_object(target, "scene: target");
  for (std::size_t i = 0; i < distractors.size(); ++i) validate_object(distractors[i], "scene: distractor " + std::to_string(i));
  for (std::size_t i = 0; i < occluders.size(); ++i) {
    validate_object(occluders[i].object, "scene: occluder " + std::to_string(i));
    if (occluders[i].frame_begin >= occluders[i].frame_end) {
      throw ValueError("scene: occluder " + std::to_string(i) + " has an empty time window");
    }
  }
  for (const auto& t : tags) {
    if (std::find(known_tags().begin(), known_tags().end(), t) == known_tags().end()) {
      throw ValueError("scene: unknown attribute tag '" + t + "'");
    }
  }
  if (has_tag(*this, "BC") && background != Background::Clutter) throw ValueError("scene: tag BC requires a clutter background");
  if (has_tag(*this, "DS") && !(illumination < 0.5)) throw ValueError("scene: tag DS requires illumination below 0.5");
  if (has_tag(*this, "SO") && distractors.empty()) throw ValueError("scene: tag SO requires a distractor");
  if (has_tag(*this, "PO") && occluders.empty()) throw ValueError("scene: tag PO requires an occluder");
  if (has_tag(*this, "DC") && target.depth_velocity == 0.0) throw ValueError("scene: tag DC requires depth_velocity");
  if (has_tag(*this, "FM") && std::hypot(target.vx, target.vy) < 4.0) {
    throw ValueError("scene: tag FM requires target speed of at least 4 px/frame");
  }
}

bool operator==(const Sequence& a, const Sequence& b) {
  if (a.width != b.width || a.height != b.height || a.seed != b.seed || a.rgb != b.rgb || a.depth != b.depth ||
      a.visible != b.visible || a.tags != b.tags || a.boxes.size() != b.boxes.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    const auto& p = a.boxes[i];
    const auto& q = b.boxes[i];
    auto same = [](double u, double v) { return (std::isnan(u) && std::isnan(v)) || u == v; };
    if (!same(p.x, q.x) || !same(p.y, q.y) || !same(p.w, q.w) || !same(p.h, q.h)) return false;
  }
  return true;
}

Sequence generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t w = spec.width, h = spec.height, n = w * h;
  SplitMix64 root(seed);
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);

  auto target = simulate(spec.target, spec.length, fw, fh, root.fork(1));
  std::vector<std::vector<ObjectState>> distractors, occluders;
  for (std::size_t i = 0; i < spec.distractors.size(); ++i) {
    distractors.push_back(simulate(spec.distractors[i], spec.length, fw, fh, root.fork(100 + i)));
  }
  for (std::size_t i = 0; i < spec.occluders.size(); ++i) {
    occluders.push_back(simulate(spec.occluders[i].object, spec.length, fw, fh, root.fork(200 + i)));
  }

  // Static background layer.
  std::vector<double> bg_rgb(3 * n), bg_depth(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double row = static_cast<double>(p / w) / fh;
    bg_rgb[3 * p] = spec.background_color.r;
    bg_rgb[3 * p + 1] = spec.background_color.g;
    bg_rgb[3 * p + 2] = spec.background_color.b;
    bg_depth[p] = spec.background_depth_mm * (1.0 - 0.2 * row);
  }
  if (spec.background == Background::Clutter) {
    SplitMix64 rng = root.fork(2);
    const std::size_t count = 12 + (w * h) / 600;
    for (std::size_t i = 0; i < count; ++i) {
      Blob b{rng.uniform(0, fw), rng.uniform(0, fh), rng.uniform(6, 30), rng.uniform(6, 30),
             spec.background_depth_mm * rng.uniform(0.6, 0.95),
             {rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)}};
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double dx = x + 0.5 - b.x, dy = y + 0.5 - b.y;
          if (std::abs(dx) >= 0.5 * b.w || std::abs(dy) >= 0.5 * b.h) continue;
          const std::size_t p = y * w + x;
          bg_rgb[3 * p] = b.color.r;
          bg_rgb[3 * p + 1] = b.color.g;
          bg_rgb[3 * p + 2] = b.color.b;
          bg_depth[p] = b.depth;
        }
      }
    }
  }

  Sequence seq;
  seq.width = w;
  seq.height = h;
  seq.seed = seed;
  seq.tags = spec.tags;
  std::vector<double> zbuf(n), color(3 * n);
  std::vector<int> owner(n);
  for (std::size_t t = 0; t < spec.length; ++t) {
    zbuf = bg_depth;
    color = bg_rgb;
    std::fill(owner.begin(), owner.end(), -1);
    // Object 0 is the target; a strictly nearer object replaces it.
    auto draw = [&](const ObjectSpec& o, const ObjectState& s, int id) {
      auto span = bounds(o, s, w, h);
      for (long y = span.y0; y < span.y1; ++y) {
        for (long x = span.x0; x < span.x1; ++x) {
          if (!covers(o, s, x + 0.5, y + 0.5)) continue;
          const std::size_t p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
          if (s.depth < zbuf[p] || (id == 0 && s.depth <= zbuf[p])) {
            zbuf[p] = s.depth;
            color[3 * p] = o.color.r;
            color[3 * p + 1] = o.color.g;
            color[3 * p + 2] = o.color.b;
            owner[p] = id;
          }
        }
      }
    };
    draw(spec.target, target[t], 0);
    for (std::size_t i = 0; i < spec.distractors.size(); ++i) draw(spec.distractors[i], distractors[i][t], 1);
    for (std::size_t i = 0; i < spec.occluders.size(); ++i) {
      const auto& occ = spec.occluders[i];
      if (t >= occ.frame_begin && t < occ.frame_end) draw(occ.object, occluders[i][t], 2);
    }

    // Silhouette statistics of the target alone.
    std::size_t silhouette = 0, seen = 0;
    long x_min = static_cast<long>(w), x_max = -1, y_min = static_cast<long>(h), y_max = -1;
    auto span = bounds(spec.target, target[t], w, h);
    for (long y = span.y0; y < span.y1; ++y) {
      for (long x = span.x0; x < span.x1; ++x) {
        if (!covers(spec.target, target[t], x + 0.5, y + 0.5)) continue;
        ++silhouette;
        if (owner[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] == 0) ++seen;
        x_min = std::min(x_min, x);
        x_max = std::max(x_max, x);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    }
    const bool visible =
        silhouette > 0 && 1.0 - static_cast<double>(seen) / static_cast<double>(silhouette) <= 0.9;
    seq.visible.push_back(visible);
    seq.boxes.push_back(visible ? BBox{static_cast<double>(x_min), static_cast<double>(y_min),
                                       static_cast<double>(x_max - x_min + 1), static_cast<double>(y_max - y_min + 1)}
                                : BBox::absent());

    RgbImage rgb{w, h, std::vector<std::uint8_t>(3 * n)};
    DepthImage depth{w, h, std::vector<std::uint16_t>(n)};
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t c = 0; c < 3; ++c) rgb.pixels[3 * p + c] = to_u8(color[3 * p + c] * spec.illumination);
      depth.pixels[p] = static_cast<std::uint16_t>(std::lround(zbuf[p]));
    }
    seq.rgb.push_back(std::move(rgb));
    seq.depth.push_back(std::move(depth));
  }
  return seq;
}

namespace {

Color random_color(SplitMix64& rng) {
  // Saturated: one strong channel, others varied.
  Color c{rng.uniform(30, 120), rng.uniform(30, 120), rng.uniform(30, 120)};
  switch (rng.below(3)) {
    case 0: c.r = rng.uniform(190, 250); break;
    case 1: c.g = rng.uniform(190, 250); break;
    default: c.b = rng.uniform(190, 250); break;
  }
  return c;
}

Color near_color(const Color& c, SplitMix64& rng) {
  auto j = [&](double v) { return std::clamp(v + rng.uniform(-20, 20), 0.0, 255.0); };
  return {j(c.r), j(c.g), j(c.b)};
}

ObjectSpec random_target(const SceneSpec& s, SplitMix64& rng, double speed_lo, double speed_hi) {
  ObjectSpec o;
  o.shape = rng.coin() ? ShapeKind::Disk : ShapeKind::Rectangle;
  o.color = random_color(rng);
  o.width = rng.uniform(16, 26);
  o.height = o.shape == ShapeKind::Disk ? o.width : o.width * rng.uniform(0.7, 1.3);
  o.x = s.width * 0.5 + rng.uniform(-25, 25);
  o.y = s.height * 0.5 + rng.uniform(-15, 15);
  const double a = rng.uniform(0, 2 * std::numbers::pi), v = rng.uniform(speed_lo, speed_hi);
  o.vx = v * std::cos(a);
  o.vy = v * std::sin(a);
  o.turn_period = 20;
  o.depth_mm = std::round(rng.uniform(1500, 3000));
  return o;
}

SceneSpec easy_scene(SplitMix64& rng) {
  SceneSpec s;
  s.background_color = {rng.uniform(60, 130), rng.uniform(60, 130), rng.uniform(60, 130)};
  s.target = random_target(s, rng, 0.5, 1.5);
  return s;
}

ObjectSpec distractor_like(const SceneSpec& s, SplitMix64& rng) {
  ObjectSpec d = s.target;
  d.color = near_color(s.target.color, rng);
  d.x = rng.uniform(15, s.width - 15.0);
  d.y = rng.uniform(15, s.height - 15.0);
  const double a = rng.uniform(0, 2 * std::numbers::pi), v = rng.uniform(0.3, 1.2);
  d.vx = v * std::cos(a);
  d.vy = v * std::sin(a);
  d.depth_mm = std::round(s.target.depth_mm + rng.uniform(600, 1500) * (rng.coin() ? 1.0 : -0.6));
  return d;
}

SceneSpec distractor_dark_scene(SplitMix64& rng) {
  SceneSpec s = easy_scene(rng);
  s.background = Background::Clutter;
  s.illumination = rng.uniform(0.3, 0.45);
  for (int i = 0; i < 2; ++i) s.distractors.push_back(distractor_like(s, rng));
  s.tags = {"BC", "DS", "SO"};
  return s;
}

SceneSpec training_scene(SplitMix64& rng) {
  SceneSpec s = easy_scene(rng);
  const auto kind = rng.below(6);
  if (kind == 1) {
    s.background = Background::Clutter;
    s.tags.push_back("BC");
  } else if (kind == 2) {
    s.illumination = rng.uniform(0.3, 0.45);
    s.tags.push_back("DS");
  } else if (kind == 3) {
    s.distractors.push_back(distractor_like(s, rng));
    s.tags.push_back("SO");
  } else if (kind == 4) {
    s.target.depth_velocity = std::round(rng.uniform(15, 30)) * (rng.coin() ? 1.0 : -1.0);
    s.tags.push_back("DC");
  } else if (kind == 5) {
    OccluderSpec occ;
    occ.object.shape = ShapeKind::Rectangle;
    occ.object.color = {rng.uniform(20, 60), rng.uniform(20, 60), rng.uniform(20, 60)};
    occ.object.width = 14;
    occ.object.height = 40;
    occ.object.x = s.target.x;
    occ.object.y = s.target.y;
    occ.object.vx = rng.uniform(-1.0, 1.0);
    occ.object.depth_mm = s.target.depth_mm - 500;
    occ.frame_begin = 20 + rng.below(15);
    occ.frame_end = occ.frame_begin + 6 + rng.below(8);
    s.occluders.push_back(occ);
    s.tags.push_back("PO");
  }
  return s;
}

SceneSpec absence_scene(SplitMix64& rng) {
  SceneSpec s = easy_scene(rng);
  s.target.turn_period = 0;
  s.target.bounce = false;
  s.target.x = s.width * 0.5;
  s.target.y = s.height * 0.5;
  // Heads right and leaves the frame around the middle of the sequence.
  s.target.vx = 3.0;
  s.target.vy = rng.uniform(-0.3, 0.3);
  s.length = 50;
  return s;
}

}  // namespace

std::vector<SceneSpec> make_suite(SuiteKind kind, std::size_t count, std::uint64_t seed) {
  std::vector<SceneSpec> out;
  SplitMix64 root(seed);
  for (std::size_t i = 0; i < count; ++i) {
    SplitMix64 rng = root.fork(i);
    switch (kind) {
      case SuiteKind::Easy: out.push_back(easy_scene(rng)); break;
      case SuiteKind::Training: out.push_back(training_scene(rng)); break;
      case SuiteKind::DistractorDark: out.push_back(distractor_dark_scene(rng)); break;
      case SuiteKind::Absence: out.push_back(absence_scene(rng)); break;
    }
    out.back().validate();
  }
  return out;
}

std::uint64_t sequence_seed(std::uint64_t seed, std::size_t index) {
  return SplitMix64(seed).fork(0x5e9000 + index).next();
}

std::vector<Sequence> generate_suite(SuiteKind kind, std::size_t count, std::uint64_t seed) {
  const auto specs = make_suite(kind, count, seed);
  std::vector<Sequence> out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) out.push_back(generate(specs[i], sequence_seed(seed, i)));
  return out;
}

std::string suite_name(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::Easy: return "easy";
    case SuiteKind::Training: return "training";
    case SuiteKind::DistractorDark: return "distractor-dark";
    case SuiteKind::Absence: return "absence";
  }
  return "easy";
}

SuiteKind parse_suite(const std::string& name) {
  for (auto k : {SuiteKind::Easy, SuiteKind::Training, SuiteKind::DistractorDark, SuiteKind::Absence}) {
    if (suite_name(k) == name) return k;
  }
  throw ValueError("unknown suite '" + name + "' (expected easy, training, distractor-dark, absence)");
}

}  // namespace dmt::synth
