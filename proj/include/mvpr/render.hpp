#pragma once

#include <cstdint>
#include <vector>

#include "mvpr/image.hpp"
#include "mvpr/mesh.hpp"

namespace mvpr {

struct RenderedImage : RgbImage {
  CameraPose pose;
  double fov = 0.0;  // horizontal, radians
};

inline constexpr Rgb kSkyColor{135, 206, 235};
inline constexpr Rgb kDefaultFaceColor{200, 200, 200};
inline constexpr double kAmbient = 0.2;

// Unit light direction used for flat Lambert shading.
Vec3 light_direction();

// Primary-ray direction through the center of pixel (px, py).
Vec3 pixel_ray_direction(const CameraFrame& frame, int px, int py, int width, int height,
                         double fov);

// Pinhole render with flat Lambert shading; rows are processed in parallel.
// Output is bit-identical to render_view_serial.
RenderedImage render_view(const Bvh& bvh, const CameraPose& pose, int width, int height,
                          double fov);
RenderedImage render_view(const TriangleMesh& mesh, const CameraPose& pose, int width, int height,
                          double fov);

// Single-threaded reference kept for testing and benchmarking.
RenderedImage render_view_serial(const Bvh& bvh, const CameraPose& pose, int width, int height,
                                 double fov);

}  // namespace mvpr
