#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "dmt/numcore/errors.hpp"
#include "dmt/synthdata/synthdata.hpp"

using namespace dmt;
using namespace dmt::synth;
namespace fs = std::filesystem;

namespace {

SceneSpec static_disk() {
  SceneSpec s;
  s.width = 64;
  s.height = 48;
  s.length = 8;
  s.target.x = 30;
  s.target.y = 20;
  s.target.width = s.target.height = 12;
  return s;
}

double rgb_mean(const Sequence& seq) {
  double sum = 0.0, n = 0.0;
  for (const auto& f : seq.rgb) {
    for (auto p : f.pixels) sum += p;
    n += static_cast<double>(f.pixels.size());
  }
  return sum / n;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dmt_synth_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("static disk keeps an identical box") {
  const auto seq = generate(static_disk(), 3);
  REQUIRE(seq.length() == 8);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    CHECK(seq.visible[t]);
    CHECK(seq.boxes[t] == seq.boxes[0]);
  }
  // Pixel centres within radius 6 of (30,20): columns 24..35, rows 14..25.
  CHECK(seq.boxes[0] == BBox{24, 14, 12, 12});
}

TEST_CASE("occluder window controls visibility exactly") {
  SceneSpec s = static_disk();
  s.length = 20;
  OccluderSpec occ;
  occ.object.shape = ShapeKind::Rectangle;
  occ.object.width = occ.object.height = 20;
  occ.object.x = 30;
  occ.object.y = 20;
  occ.object.depth_mm = 1000;
  occ.frame_begin = 10;
  occ.frame_end = 15;
  s.occluders.push_back(occ);
  s.tags = {"PO"};
  const auto seq = generate(s, 1);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const bool hidden = t >= 10 && t < 15;
    CHECK(seq.visible[t] == !hidden);
    CHECK(std::isnan(seq.boxes[t].x) == hidden);
  }
}

TEST_CASE("partial occlusion below the threshold keeps the full box") {
  SceneSpec s = static_disk();
  OccluderSpec occ;
  occ.object.shape = ShapeKind::Rectangle;
  occ.object.width = 6;
  occ.object.height = 30;
  occ.object.x = 27;
  occ.object.y = 20;
  occ.object.depth_mm = 1000;
  occ.frame_end = 8;
  s.occluders.push_back(occ);
  const auto seq = generate(s, 1);
  CHECK(seq.visible[0]);
  CHECK(seq.boxes[0] == BBox{24, 14, 12, 12});
}

TEST_CASE("occluder behind the target does not hide it") {
  SceneSpec s = static_disk();
  OccluderSpec occ;
  occ.object.shape = ShapeKind::Rectangle;
  occ.object.width = occ.object.height = 30;
  occ.object.x = 30;
  occ.object.y = 20;
  occ.object.depth_mm = 3000;
  occ.frame_end = 8;
  s.occluders.push_back(occ);
  const auto seq = generate(s, 1);
  for (bool v : seq.visible) CHECK(v);
}

TEST_CASE("dark variant dims colour but leaves depth untouched") {
  SceneSpec bright = make_suite(SuiteKind::Easy, 1, 5)[0];
  SceneSpec dark = bright;
  dark.illumination = 0.1;
  const auto a = generate(bright, 9);
  const auto b = generate(dark, 9);
  CHECK(rgb_mean(b) < 0.15 * rgb_mean(a));
  CHECK(a.depth == b.depth);
  for (std::size_t t = 0; t < a.length(); ++t) CHECK(a.boxes[t] == b.boxes[t]);
}

TEST_CASE("generation is deterministic per seed") {
  for (auto kind : {SuiteKind::Training, SuiteKind::DistractorDark}) {
    const auto spec = make_suite(kind, 1, 11)[0];
    CHECK(generate(spec, 4) == generate(spec, 4));
  }
  const auto s1 = make_suite(SuiteKind::Training, 6, 3);
  const auto s2 = make_suite(SuiteKind::Training, 6, 3);
  CHECK(s1 == s2);
  CHECK_FALSE(s1 == make_suite(SuiteKind::Training, 6, 4));
}

TEST_CASE("visible boxes lie in frame and depth matches the target") {
  for (auto kind : {SuiteKind::Easy, SuiteKind::Training, SuiteKind::DistractorDark, SuiteKind::Absence}) {
    for (const auto& spec : make_suite(kind, 4, 21)) {
      const auto seq = generate(spec, 2);
      REQUIRE(seq.depth.size() == seq.length());
      REQUIRE(seq.boxes.size() == seq.length());
      REQUIRE(seq.visible.size() == seq.length());
      for (std::size_t t = 0; t < seq.length(); ++t) {
        if (!seq.visible[t]) continue;
        const auto& b = seq.boxes[t];
        CHECK(b.w >= 1);
        CHECK(b.h >= 1);
        CHECK(b.x >= 0);
        CHECK(b.y >= 0);
        CHECK(b.x + b.w <= seq.width);
        CHECK(b.y + b.h <= seq.height);
      }
    }
  }
  // Unoccluded target pixels carry its depth.
  SceneSpec s = static_disk();
  s.target.depth_mm = 1234;
  const auto seq = generate(s, 0);
  const auto& b = seq.boxes[0];
  const auto& d = seq.depth[0];
  CHECK(d.pixels[static_cast<std::size_t>(b.cy()) * d.width + static_cast<std::size_t>(b.cx())] == 1234);
  std::size_t count = 0;
  for (auto v : d.pixels) count += v == 1234;
  CHECK(count > 100);
}

TEST_CASE("absence suite target leaves the frame") {
  for (const auto& spec : make_suite(SuiteKind::Absence, 3, 8)) {
    const auto seq = generate(spec, 1);
    CHECK(seq.visible.front());
    CHECK_FALSE(seq.visible.back());
  }
}

TEST_CASE("spec validation") {
  SceneSpec s = static_disk();
  s.tags = {"PO"};
  CHECK_THROWS_AS(s.validate(), ValueError);
  s.tags = {"XX"};
  CHECK_THROWS_AS(s.validate(), ValueError);
  s.tags = {"BC"};
  CHECK_THROWS_AS(s.validate(), ValueError);
  s.background = Background::Clutter;
  CHECK_NOTHROW(s.validate());
  s.tags = {"DS"};
  CHECK_THROWS_AS(s.validate(), ValueError);
  s.tags = {"FM"};
  CHECK_THROWS_AS(s.validate(), ValueError);
  s.target.vx = 5;
  CHECK_NOTHROW(s.validate());
  s.tags.clear();
  s.target.width = 0;
  CHECK_THROWS_AS(generate(s, 0), ValueError);
  CHECK(parse_suite("distractor-dark") == SuiteKind::DistractorDark);
  CHECK_THROWS_AS(parse_suite("hard"), ValueError);
}

TEST_CASE("crop at native scale is the identity on interior pixels") {
  RgbImage img{40, 30, std::vector<std::uint8_t>(40 * 30 * 3)};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 37) % 251);
  const BBox box{10, 8, 8, 8};  // centre (14,12), side 2·8 = 16
  const auto p = crop(img, box, 2.0, 16);
  CHECK(p.transform.scale == doctest::Approx(1.0));
  CHECK(p.transform.origin_x == 6.0);
  CHECK(p.transform.origin_y == 4.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t v = 0; v < 16; ++v)
      for (std::size_t u = 0; u < 16; ++u) {
        const double want = img.pixels[((4 + v) * 40 + (6 + u)) * 3 + c];
        CHECK(p.data[(c * 16 + v) * 16 + u] == want);
      }
}

TEST_CASE("crop transform round trip") {
  const BBox box{33.3, 17.8, 12.4, 9.1};
  DepthImage img{64, 48, std::vector<std::uint16_t>(64 * 48, 7)};
  for (std::size_t out : {31u, 64u, 127u}) {
    const auto p = crop(img, box, 5.0, out);
    // Centre quantized to the patch grid, then mapped back.
    const double u = std::round(p.transform.to_patch_x(box.cx()));
    const double v = std::round(p.transform.to_patch_y(box.cy()));
    const double side = 5.0 * std::sqrt(box.w * box.h);
    CHECK(std::abs(p.transform.to_frame_x(u) - box.cx()) < 0.51 * std::max(1.0, side / out));
    CHECK(std::abs(p.transform.to_frame_y(v) - box.cy()) < 0.51 * std::max(1.0, side / out));
    const auto back = p.transform.to_frame(p.transform.to_patch(box));
    CHECK(back.x == doctest::Approx(box.x));
    CHECK(back.w == doctest::Approx(box.w));
  }
}

TEST_CASE("crop pads with the nearest edge value") {
  DepthImage img{10, 10, std::vector<std::uint16_t>(100)};
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 10; ++x) img.pixels[y * 10 + x] = static_cast<std::uint16_t>(100 * y + x);
  const auto p = crop(img, BBox{0, 0, 2, 2}, 4.0, 8);  // side 8, origin (-3,-3)
  CHECK(p.data[0] == 0.0);                 // corner region
  CHECK(p.data[1 * 8 + 0] == 0.0);
  CHECK(p.data[0 * 8 + 5] == 2.0);        // top padding repeats row 0 at x = 2
  CHECK(p.data[6 * 8 + 0] == 300.0);      // left padding repeats column 0 at y = 3
  CHECK_THROWS_AS(crop(img, BBox{0, 0, 0, 2}, 4.0, 8), ValueError);
}

TEST_CASE("sequence round trip through files") {
  SceneSpec s = make_suite(SuiteKind::DistractorDark, 1, 2)[0];
  s.length = 3;
  OccluderSpec occ;
  occ.object.shape = ShapeKind::Rectangle;
  occ.object.width = occ.object.height = 60;
  occ.object.x = s.target.x;
  occ.object.y = s.target.y;
  occ.object.depth_mm = 500;
  occ.frame_begin = 1;
  occ.frame_end = 2;
  s.occluders.push_back(occ);
  s.tags.push_back("PO");
  const auto seq = generate(s, 77);
  REQUIRE_FALSE(seq.visible[1]);

  const auto dir = scratch("roundtrip");
  write_sequence(seq, dir);
  CHECK(read_sequence(dir) == seq);

  std::ifstream gt(dir / "groundtruth.txt");
  std::string line;
  std::getline(gt, line);
  std::getline(gt, line);
  CHECK(line == "nan,nan,nan,nan");

  fs::remove(dir / "depth" / "00000002.png");
  try {
    read_sequence(dir);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("malformed groundtruth names file and line") {
  const auto dir = scratch("malformed");
  write_sequence(generate(static_disk(), 0), dir);
  {
    std::ofstream gt(dir / "groundtruth.txt");
    for (int i = 0; i < 8; ++i) gt << (i == 4 ? "1,2,x,4\n" : "1,2,3,4\n");
  }
  try {
    read_sequence(dir);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("groundtruth.txt:5") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(12.0) == "12");
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(std::nan("")) == "nan");
  const double x = 1.0 / 3.0;
  CHECK(std::stod(format_double(x)) == x);
}
