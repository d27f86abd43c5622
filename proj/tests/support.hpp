#pragma once

// Shared fixtures and generators for the test binaries.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "mvpr/mesh.hpp"

namespace mvpr::testing {

inline constexpr double kPi = std::numbers::pi;
inline double deg(double d) { return d * kPi / 180.0; }

inline Vec3 random_point(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  const double x = u(rng), y = u(rng), z = u(rng);
  return {x, y, z};
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v{n(rng), n(rng), n(rng)};
    if (norm(v) > 1e-6) return normalized(v);
  }
}

// Soup of small random triangles inside [0, extent]^3.
inline TriangleMesh random_mesh(std::mt19937_64& rng, int triangles, double extent = 10.0,
                                bool colored = true) {
  std::vector<Vec3> v;
  std::vector<Triangle> t;
  std::vector<Rgb> c;
  std::uniform_int_distribution<int> byte(0, 255);
  while (static_cast<int>(t.size()) < triangles) {
    const Vec3 center = random_point(rng, 0.0, extent);
    const Vec3 a = center + random_point(rng, -1.0, 1.0);
    const Vec3 b = center + random_point(rng, -1.0, 1.0);
    const Vec3 d = center + random_point(rng, -1.0, 1.0);
    if (triangle_area(a, b, d) < 1e-3) continue;
    const auto base = static_cast<std::uint32_t>(v.size());
    v.insert(v.end(), {a, b, d});
    t.push_back({base, base + 1, base + 2});
    c.push_back({static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                 static_cast<std::uint8_t>(byte(rng))});
  }
  if (!colored) c.clear();
  return TriangleMesh(std::move(v), std::move(t), std::move(c));
}

// Square [-half, half]^2 lying in the plane z = z0 + slope_y * y + slope_x * x.
inline TriangleMesh plane_mesh(double half, double z0, double slope_x = 0.0, double slope_y = 0.0,
                               Rgb color = {120, 120, 120}) {
  auto z = [&](double x, double y) { return z0 + slope_x * x + slope_y * y; };
  std::vector<Vec3> v{{-half, -half, z(-half, -half)},
                      {half, -half, z(half, -half)},
                      {half, half, z(half, half)},
                      {-half, half, z(-half, half)}};
  return TriangleMesh(std::move(v), {{0, 1, 2}, {0, 2, 3}}, {color, color});
}

struct OracleHit {
  double t;
  double min_bary;  // smallest barycentric coordinate, negative when outside
};

// Independent reference: intersect the supporting plane, then test the
// barycentric coordinates of the plane point.
inline std::optional<OracleHit> plane_oracle(Vec3 o, Vec3 d, Vec3 a, Vec3 b, Vec3 c) {
  const Vec3 n = cross(b - a, c - a);
  const double denom = dot(n, d);
  if (std::abs(denom) <= 1e-12 * norm(n)) return std::nullopt;
  const double t = dot(n, a - o) / denom;
  const Vec3 p = o + t * d;
  const Vec3 e1 = b - a, e2 = c - a, ep = p - a;
  const double d00 = dot(e1, e1), d01 = dot(e1, e2), d11 = dot(e2, e2);
  const double d20 = dot(ep, e1), d21 = dot(ep, e2);
  const double den = d00 * d11 - d01 * d01;
  const double v = (d11 * d20 - d01 * d21) / den;
  const double w = (d00 * d21 - d01 * d20) / den;
  const double u = 1.0 - v - w;
  return OracleHit{t, std::min({u, v, w})};
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mvpr_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mvpr::testing
