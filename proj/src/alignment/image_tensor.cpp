#include "mvpr/image_tensor.hpp"

#include <algorithm>

#include "mvpr/error.hpp"

namespace mvpr {

namespace {

// weights[o] lists (source index, overlap) for output cell o when mapping
// `src` cells onto `dst` cells of equal total extent.
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src,
                                                                      std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> w(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t o = 0; o < dst; ++o) {
    const double lo = o * scale, hi = (o + 1) * scale;
    for (auto s = static_cast<std::size_t>(lo); s < src && static_cast<double>(s) < hi; ++s) {
      const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      if (overlap > 0.0) w[o].emplace_back(s, overlap / scale);
    }
  }
  return w;
}

}  // namespace

void image_to_tensor(const RgbImage& image, std::size_t h, std::size_t w, double* dst) {
  if (image.width == 0 || image.height == 0 || h == 0 || w == 0) {
    throw RejectedInput("image_to_tensor: empty image or target");
  }
  const auto wy = area_weights(static_cast<std::size_t>(image.height), h);
  const auto wx = area_weights(static_cast<std::size_t>(image.width), w);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& [sy, fy] : wy[y]) {
          for (const auto& [sx, fx] : wx[x]) {
            acc += fy * fx * image.pixels[(sy * static_cast<std::size_t>(image.width) + sx) * 3 + c];
          }
        }
        dst[(c * h + y) * w + x] = acc / 255.0;
      }
    }
  }
}

ImageBatch images_to_batch(const std::vector<RgbImage>& images, std::size_t h, std::size_t w) {
  ImageBatch batch(images.size(), 3, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) image_to_tensor(images[i], h, w, batch.sample(i));
  return batch;
}

}  // namespace mvpr
