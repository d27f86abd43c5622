#include "mvpr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mvpr/error.hpp"

namespace mvpr {

double triangle_area(Vec3 v0, Vec3 v1, Vec3 v2) { return 0.5 * norm(cross(v1 - v0, v2 - v0)); }

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                           std::vector<Rgb> face_colors, GeoPoint geo_anchor)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      face_colors_(std::move(face_colors)),
      geo_anchor_(geo_anchor) {
  if (!is_valid(geo_anchor_)) {
    throw RejectedInput("mesh geo anchor out of range");
  }
  if (!face_colors_.empty() && face_colors_.size() != triangles_.size()) {
    throw RejectedInput("face color count " + std::to_string(face_colors_.size()) +
                        " does not match triangle count " + std::to_string(triangles_.size()));
  }
  for (std::size_t i = 0; i < triangles_.size(); ++i) {
    for (auto idx : triangles_[i]) {
      if (idx >= vertices_.size()) {
        throw RejectedInput("triangle " + std::to_string(i) + " references vertex " +
                            std::to_string(idx) + " of " + std::to_string(vertices_.size()));
      }
    }
    const auto [a, b, c] = corners(i);
    if (!(triangle_area(a, b, c) > kMinTriangleArea)) {
      throw RejectedInput("triangle " + std::to_string(i) + " is degenerate");
    }
  }
  if (!vertices_.empty()) {
    lo_ = hi_ = vertices_.front();
    for (const auto& v : vertices_) {
      for (int k = 0; k < 3; ++k) {
        lo_[k] = std::min(lo_[k], v[k]);
        hi_[k] = std::max(hi_[k], v[k]);
      }
    }
  }
}

Ray::Ray(Vec3 origin, Vec3 direction) : origin_(origin), direction_(direction) {
  if (std::abs(norm(direction) - 1.0) > 1e-9) {
    throw RejectedInput("ray direction is not unit length");
  }
}

std::optional<RayHit> ray_triangle_intersect(const Ray& ray, Vec3 v0, Vec3 v1, Vec3 v2,
                                             std::uint32_t triangle_id) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 n = cross(e1, e2);
  const double n_len = norm(n);
  if (!(0.5 * n_len > kMinTriangleArea)) {
    throw RejectedInput("degenerate triangle");
  }
  const Vec3 d = ray.direction();
  const Vec3 p = cross(d, e2);
  const double det = dot(e1, p);
  // |det| / |n| is the cosine between the ray and the plane normal.
  if (std::abs(det) <= 1e-12 * n_len) {
    return std::nullopt;
  }
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin() - v0;
  const double u = dot(s, p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(d, q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = dot(e2, q) * inv;
  if (!(t >= kMinHitDistance)) return std::nullopt;

  RayHit hit;
  hit.t = t;
  hit.point = ray.at(t);
  hit.normal = (1.0 / n_len) * n;
  if (dot(hit.normal, d) > 0.0) hit.normal = -hit.normal;
  hit.triangle_id = triangle_id;
  return hit;
}

std::optional<RayHit> raycast_exhaustive(const TriangleMesh& mesh, const Ray& ray) {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < mesh.triangle_count(); ++i) {
    const auto [a, b, c] = mesh.corners(i);
    auto hit = ray_triangle_intersect(ray, a, b, c, static_cast<std::uint32_t>(i));
    if (hit && (!best || closer(*hit, *best))) best = hit;
  }
  return best;
}

namespace {

constexpr std::uint32_t kLeafSize = 4;

// Box padding keeps hits that land exactly on a box face inside the slab test.
double padding_for(Vec3 lo, Vec3 hi) {
  double m = 1.0;
  for (int k = 0; k < 3; ++k) m = std::max({m, std::abs(lo[k]), std::abs(hi[k])});
  return 1e-9 * m;
}

// Returns the entry distance of the ray into the box, or +inf on a miss.
double slab_entry(const Ray& ray, Vec3 lo, Vec3 hi, double t_max) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const Vec3 o = ray.origin();
  const Vec3 d = ray.direction();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < lo[k] || o[k] > hi[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double inv = 1.0 / d[k];
    double t0 = (lo[k] - o[k]) * inv;
    double t1 = (hi[k] - o[k]) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_far < kMinHitDistance || t_near > t_max) {
    return std::numeric_limits<double>::infinity();
  }
  return t_near;
}

}  // namespace

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
  const auto n = static_cast<std::uint32_t>(mesh.triangle_count());
  if (n == 0) return;
  std::vector<Vec3> centroids(n), tri_lo(n), tri_hi(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto [a, b, c] = mesh.corners(i);
    centroids[i] = (1.0 / 3.0) * (a + b + c);
    for (int k = 0; k < 3; ++k) {
      tri_lo[i][k] = std::min({a[k], b[k], c[k]});
      tri_hi[i][k] = std::max({a[k], b[k], c[k]});
    }
  }
  order_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) order_[i] = i;
  nodes_.reserve(2 * (n / kLeafSize + 1));
  build(0, n, centroids, tri_lo, tri_hi);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::span<const Vec3> centroids,
                         std::span<const Vec3> tri_lo, std::span<const Vec3> tri_hi) {
  Node node;
  node.lo = tri_lo[order_[begin]];
  node.hi = tri_hi[order_[begin]];
  Vec3 c_lo = centroids[order_[begin]];
  Vec3 c_hi = c_lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    const auto t = order_[i];
    for (int k = 0; k < 3; ++k) {
      node.lo[k] = std::min(node.lo[k], tri_lo[t][k]);
      node.hi[k] = std::max(node.hi[k], tri_hi[t][k]);
      c_lo[k] = std::min(c_lo[k], centroids[t][k]);
      c_hi[k] = std::max(c_hi[k], centroids[t][k]);
    }
  }
  const double pad = padding_for(node.lo, node.hi);
  for (int k = 0; k < 3; ++k) {
    node.lo[k] -= pad;
    node.hi[k] += pad;
  }

  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }

  int axis = 0;
  for (int k = 1; k < 3; ++k) {
    if (c_hi[k] - c_lo[k] > c_hi[axis] - c_lo[axis]) axis = k;
  }
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const auto left = build(begin, mid, centroids, tri_lo, tri_hi);
  const auto right = build(mid, end, centroids, tri_lo, tri_hi);
  nodes_[index].first = left;
  nodes_[index].right = right;
  nodes_[index].count = 0;
  return index;
}

std::optional<RayHit> Bvh::raycast(const Ray& ray) const {
  std::optional<RayHit> best;
  if (nodes_.empty()) return best;
  double best_t = std::numeric_limits<double>::infinity();

  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Strict comparison inside slab_entry: boxes entered at exactly best_t are
    // still visited so equal-t ties resolve by triangle id as in the scan.
    if (slab_entry(ray, node.lo, node.hi, best_t) == std::numeric_limits<double>::infinity()) {
      continue;
    }
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const auto tri = order_[i];
        const auto [a, b, c] = mesh_->corners(tri);
        auto hit = ray_triangle_intersect(ray, a, b, c, tri);
        if (hit && (!best || closer(*hit, *best))) {
          best = hit;
          best_t = hit->t;
        }
      }
    } else {
      stack[top++] = node.right;
      stack[top++] = node.first;
    }
  }
  return best;
}

std::optional<RayHit> raycast(const TriangleMesh& mesh, const Ray& ray) {
  return Bvh(mesh).raycast(ray);
}

GroundEstimate estimate_ground(const Bvh& bvh, Vec2 xy) {
  const auto& mesh = bvh.mesh();
  if (mesh.empty()) throw RejectedInput("ground estimation on an empty mesh");
  const Ray down({xy.x, xy.y, mesh.bounds_max().z + kGroundTraceClearance}, {0.0, 0.0, -1.0});
  const auto hit = bvh.raycast(down);
  if (!hit) {
    throw OutsideFootprint("no mesh below (" + std::to_string(xy.x) + ", " +
                           std::to_string(xy.y) + ")");
  }
  return {hit->point, hit->normal};
}

GroundEstimate estimate_ground(const TriangleMesh& mesh, Vec2 xy) {
  return estimate_ground(Bvh(mesh), xy);
}

double normalize_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians, two_pi);
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a = 0.0;
  return a;
}

CameraPose make_camera_pose(const GroundEstimate& ground, double heading, double camera_height,
                            const LocalProjection& projection) {
  CameraPose pose;
  pose.position = ground.ground_point + Vec3{0.0, 0.0, camera_height};
  pose.yaw = normalize_angle(heading);
  const Vec3 forward{std::sin(pose.yaw), std::cos(pose.yaw), 0.0};
  const Vec3 right{std::cos(pose.yaw), -std::sin(pose.yaw), 0.0};
  const Vec3 n = ground.normal;
  pose.pitch = -std::atan2(dot(n, forward), n.z);
  pose.roll = std::atan2(dot(n, right), n.z);
  pose.geo = projection.to_geo({pose.position.x, pose.position.y});
  return pose;
}

CameraFrame camera_frame(const CameraPose& pose) {
  const Vec3 f0{std::sin(pose.yaw), std::cos(pose.yaw), 0.0};
  const Vec3 r0{std::cos(pose.yaw), -std::sin(pose.yaw), 0.0};
  const Vec3 u0{0.0, 0.0, 1.0};
  const double cp = std::cos(pose.pitch), sp = std::sin(pose.pitch);
  const Vec3 f1 = cp * f0 + sp * u0;
  const Vec3 u1 = cp * u0 - sp * f0;
  const double cr = std::cos(pose.roll), sr = std::sin(pose.roll);
  return {f1, cr * r0 - sr * u1, cr * u1 + sr * r0};
}

}  // namespace mvpr
