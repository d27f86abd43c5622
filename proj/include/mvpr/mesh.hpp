#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mvpr/geo.hpp"
#include "mvpr/vec.hpp"

namespace mvpr {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(Rgb, Rgb) = default;
};

using Triangle = std::array<std::uint32_t, 3>;

inline constexpr double kMinTriangleArea = 1e-12;  // m^2

double triangle_area(Vec3 v0, Vec3 v1, Vec3 v2);

// Indexed triangle soup in a local ENU frame (meters) anchored at geo_anchor.
// Construction validates every invariant; the object is immutable afterwards.
class TriangleMesh {
 public:
  TriangleMesh() = default;
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
               std::vector<Rgb> face_colors = {}, GeoPoint geo_anchor = {});

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  // Empty when the mesh carries no colors; otherwise one entry per triangle.
  const std::vector<Rgb>& face_colors() const { return face_colors_; }
  GeoPoint geo_anchor() const { return geo_anchor_; }
  LocalProjection projection() const { return LocalProjection(geo_anchor_); }

  std::size_t triangle_count() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  std::array<Vec3, 3> corners(std::size_t tri) const {
    const auto& t = triangles_[tri];
    return {vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]};
  }

  // Axis-aligned bounds over all vertices; zero box for an empty mesh.
  Vec3 bounds_min() const { return lo_; }
  Vec3 bounds_max() const { return hi_; }

  friend bool operator==(const TriangleMesh&, const TriangleMesh&) = default;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Rgb> face_colors_;
  GeoPoint geo_anchor_{};
  Vec3 lo_{};
  Vec3 hi_{};
};

class Ray {
 public:
  // Direction must already be unit length (within 1e-9).
  Ray(Vec3 origin, Vec3 direction);

  Vec3 origin() const { return origin_; }
  Vec3 direction() const { return direction_; }
  Vec3 at(double t) const { return origin_ + t * direction_; }

 private:
  Vec3 origin_;
  Vec3 direction_;
};

struct RayHit {
  double t = 0.0;
  Vec3 point;
  Vec3 normal;  // unit, normal . direction <= 0
  std::uint32_t triangle_id = 0;
};

inline constexpr double kMinHitDistance = 1e-9;

// Moller-Trumbore with inclusive edges. Hits closer than kMinHitDistance are
// ignored. Throws RejectedInput for a degenerate triangle.
std::optional<RayHit> ray_triangle_intersect(const Ray& ray, Vec3 v0, Vec3 v1, Vec3 v2,
                                             std::uint32_t triangle_id = 0);

// Ordering used to pick among candidate hits: smaller t wins, then lower id.
// Shared edges are therefore attributed to the lower-numbered triangle.
inline bool closer(const RayHit& a, const RayHit& b) {
  return a.t < b.t || (a.t == b.t && a.triangle_id < b.triangle_id);
}

// Reference nearest-hit search over every triangle.
std::optional<RayHit> raycast_exhaustive(const TriangleMesh& mesh, const Ray& ray);

// Bounding-volume hierarchy over a mesh. Holds a reference to the mesh, which
// must outlive it. Results are identical to raycast_exhaustive.
class Bvh {
 public:
  explicit Bvh(const TriangleMesh& mesh);

  std::optional<RayHit> raycast(const Ray& ray) const;
  const TriangleMesh& mesh() const { return *mesh_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Vec3 lo;
    Vec3 hi;
    std::uint32_t first = 0;  // leaf: start in order_; inner: left child index
    std::uint32_t count = 0;  // leaf: triangle count; inner: 0
    std::uint32_t right = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::span<const Vec3> centroids,
                      std::span<const Vec3> tri_lo, std::span<const Vec3> tri_hi);

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

// Convenience wrapper that builds a temporary hierarchy.
std::optional<RayHit> raycast(const TriangleMesh& mesh, const Ray& ray);

struct GroundEstimate {
  Vec3 ground_point;
  Vec3 normal;  // unit, normal.z > 0
};

inline constexpr double kGroundTraceClearance = 10.0;  // m above the mesh top

// Vertical downward trace from above the mesh at local (x, y). The first
// (highest) intersection is the ground. Throws OutsideFootprint on a miss.
GroundEstimate estimate_ground(const Bvh& bvh, Vec2 xy);
GroundEstimate estimate_ground(const TriangleMesh& mesh, Vec2 xy);

struct CameraPose {
  Vec3 position;      // local ENU, meters
  double yaw = 0.0;   // 0 = north, clockwise positive, [0, 2pi)
  double pitch = 0.0; // positive looks up
  double roll = 0.0;
  GeoPoint geo;       // position projected back through the mesh anchor
};

inline constexpr double kDefaultCameraHeight = 2.5;

double normalize_angle(double radians);  // into [0, 2pi)

CameraPose make_camera_pose(const GroundEstimate& ground, double heading,
                            double camera_height = kDefaultCameraHeight,
                            const LocalProjection& projection = {});

// Camera frame derived from a pose: forward, right and up unit vectors.
struct CameraFrame {
  Vec3 forward;
  Vec3 right;
  Vec3 up;
};

CameraFrame camera_frame(const CameraPose& pose);

}  // namespace mvpr
