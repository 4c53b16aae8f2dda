#include <algorithm>
#include <cmath>

#include "dmt/numcore/errors.hpp"
#include "dmt/synthdata/synthdata.hpp"

namespace dmt::synth {

namespace {

template <typename Pixel>
Patch crop_impl(const std::vector<Pixel>& pixels, std::size_t width, std::size_t height, std::size_t channels,
                const BBox& box, double factor, std::size_t out_size) {
  if (!(box.w > 0.0) || !(box.h > 0.0) || !std::isfinite(box.x) || !std::isfinite(box.y)) {
    throw ValueError("crop: box must have positive finite area");
  }
  if (!(factor > 0.0)) throw ValueError("crop: factor must be positive");
  if (out_size == 0) throw ValueError("crop: out_size must be positive");
  if (width == 0 || height == 0) throw ValueError("crop: empty frame");

  const double side = factor * std::sqrt(box.w * box.h);
  Patch p;
  p.channels = channels;
  p.size = out_size;
  p.transform.scale = static_cast<double>(out_size) / side;
  p.transform.origin_x = box.cx() - 0.5 * side;
  p.transform.origin_y = box.cy() - 0.5 * side;
  p.data.resize(channels * out_size * out_size);

  const long wmax = static_cast<long>(width) - 1, hmax = static_cast<long>(height) - 1;
  auto at = [&](long x, long y, std::size_t c) {
    x = std::clamp(x, 0L, wmax);
    y = std::clamp(y, 0L, hmax);
    return static_cast<double>(pixels[(static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * channels + c]);
  };
  for (std::size_t v = 0; v < out_size; ++v) {
    // Pixel centres in continuous coordinates, converted to index space.
    const double fy = p.transform.to_frame_y(v + 0.5) - 0.5;
    const long y0 = static_cast<long>(std::floor(fy));
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t u = 0; u < out_size; ++u) {
      const double fx = p.transform.to_frame_x(u + 0.5) - 0.5;
      const long x0 = static_cast<long>(std::floor(fx));
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < channels; ++c) {
        const double top = (1.0 - tx) * at(x0, y0, c) + tx * at(x0 + 1, y0, c);
        const double bottom = (1.0 - tx) * at(x0, y0 + 1, c) + tx * at(x0 + 1, y0 + 1, c);
        p.data[(c * out_size + v) * out_size + u] = (1.0 - ty) * top + ty * bottom;
      }
    }
  }
  return p;
}

}  // namespace

Patch crop(const RgbImage& frame, const BBox& box, double factor, std::size_t out_size) {
  return crop_impl(frame.pixels, frame.width, frame.height, 3, box, factor, out_size);
}

Patch crop(const DepthImage& frame, const BBox& box, double factor, std::size_t out_size) {
  return crop_impl(frame.pixels, frame.width, frame.height, 1, box, factor, out_size);
}

}  // namespace dmt::synth
