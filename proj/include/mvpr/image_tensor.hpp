#pragma once

#include <vector>

#include "mvpr/image.hpp"
#include "mvpr/tensor.hpp"

namespace mvpr {

// Area-weighted resample of an RGB image to c x h x w (c = 3) with values in
// [0, 1], written into `dst`.
void image_to_tensor(const RgbImage& image, std::size_t h, std::size_t w, double* dst);

ImageBatch images_to_batch(const std::vector<RgbImage>& images, std::size_t h, std::size_t w);

}  // namespace mvpr
