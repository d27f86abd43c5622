#include "mvpr/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mvpr/error.hpp"

namespace mvpr {

Vec3 light_direction() { return normalized({0.3, 0.3, 0.9}); }

Vec3 pixel_ray_direction(const CameraFrame& frame, int px, int py, int width, int height,
                         double fov) {
  const double half = std::tan(0.5 * fov);
  const double sx = (2.0 * (px + 0.5) / width - 1.0) * half;
  const double sy = (1.0 - 2.0 * (py + 0.5) / height) * half * height / width;
  return normalized(frame.forward + sx * frame.right + sy * frame.up);
}

namespace {

void check_args(int width, int height, double fov) {
  if (width < 1 || height < 1) throw RejectedInput("render size must be at least 1x1");
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw RejectedInput("fov must lie in (0, pi)");
}

std::uint8_t shade_channel(std::uint8_t base, double intensity) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(base * intensity), 0L, 255L));
}

void shade_pixel(const Bvh& bvh, const CameraFrame& frame, Vec3 light, int px, int py,
                 int width, int height, double fov, Vec3 origin, std::uint8_t* out) {
  const Ray ray(origin, pixel_ray_direction(frame, px, py, width, height, fov));
  const auto hit = bvh.raycast(ray);
  if (!hit) {
    out[0] = kSkyColor.r;
    out[1] = kSkyColor.g;
    out[2] = kSkyColor.b;
    return;
  }
  const auto& colors = bvh.mesh().face_colors();
  const Rgb base = colors.empty() ? kDefaultFaceColor : colors[hit->triangle_id];
  const double lambert = std::max(0.0, dot(hit->normal, light));
  const double intensity = kAmbient + (1.0 - kAmbient) * lambert;
  out[0] = shade_channel(base.r, intensity);
  out[1] = shade_channel(base.g, intensity);
  out[2] = shade_channel(base.b, intensity);
}

RenderedImage blank(const CameraPose& pose, int width, int height, double fov) {
  RenderedImage img;
  img.width = width;
  img.height = height;
  img.pose = pose;
  img.fov = fov;
  img.pixels.resize(3 * static_cast<std::size_t>(width) * height);
  return img;
}

}  // namespace

RenderedImage render_view(const Bvh& bvh, const CameraPose& pose, int width, int height,
                          double fov) {
  check_args(width, height, fov);
  RenderedImage img = blank(pose, width, height, fov);
  const CameraFrame frame = camera_frame(pose);
  const Vec3 light = light_direction();
  std::uint8_t* data = img.pixels.data();
#pragma omp parallel for schedule(static)
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      shade_pixel(bvh, frame, light, px, py, width, height, fov, pose.position,
                  data + 3 * (static_cast<std::size_t>(py) * width + px));
    }
  }
  return img;
}

RenderedImage render_view(const TriangleMesh& mesh, const CameraPose& pose, int width, int height,
                          double fov) {
  return render_view(Bvh(mesh), pose, width, height, fov);
}

RenderedImage render_view_serial(const Bvh& bvh, const CameraPose& pose, int width, int height,
                                 double fov) {
  check_args(width, height, fov);
  RenderedImage img = blank(pose, width, height, fov);
  const CameraFrame frame = camera_frame(pose);
  const Vec3 light = light_direction();
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      shade_pixel(bvh, frame, light, px, py, width, height, fov, pose.position,
                  img.pixels.data() + 3 * (static_cast<std::size_t>(py) * width + px));
    }
  }
  return img;
}

}  // namespace mvpr
