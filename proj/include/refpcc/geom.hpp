#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace refpcc {

/// A 3D point in meters. Coordinates are widened to 64-bit on ingestion so
/// threshold comparisons stay stable on kilometer-scale coordinates; file
/// formats keep their native 32-bit width.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline bool is_finite(const Point3& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Exact IEEE evaluation of (ax-bx)^2 + (ay-by)^2 + (az-bz)^2.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Point3& a, const Point3& b) {
  return std::sqrt(squared_distance(a, b));
}

/// Capture pose: position in meters, unit quaternion, timestamp in
/// microseconds since epoch.
struct Pose {
  Point3 position;
  double qx = 0.0;
  double qy = 0.0;
  double qz = 0.0;
  double qw = 1.0;
  std::int64_t timestamp_us = 0;

  static Pose identity() { return Pose{}; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Quaternion norm must be within this of 1.
inline constexpr double kQuaternionNormTolerance = 1e-6;

inline bool has_unit_quaternion(const Pose& p) {
  const double n = std::sqrt(p.qx * p.qx + p.qy * p.qy + p.qz * p.qz + p.qw * p.qw);
  return std::abs(n - 1.0) <= kQuaternionNormTolerance;
}

/// An ordered sequence of points with an identifier and capture pose.
/// Point order is significant: index i refers to the same point for the
/// lifetime of the cloud — indices are the currency of the codec.
struct PointCloud {
  std::uint32_t id = 0;
  Pose pose;
  std::vector<Point3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Axis-aligned bounding box. The empty box is a designated sentinel
/// (min > max componentwise), never a garbage box.
struct Aabb {
  Point3 min{std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity(),
             std::numeric_limits<double>::infinity()};
  Point3 max{-std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity()};

  static Aabb empty() { return Aabb{}; }

  bool is_empty() const { return min.x > max.x; }

  void extend(const Point3& p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    min.z = std::min(min.z, p.z);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
    max.z = std::max(max.z, p.z);
  }

  bool contains(const Point3& p) const {
    return !is_empty() && p.x >= min.x && p.x <= max.x && p.y >= min.y &&
           p.y <= max.y && p.z >= min.z && p.z <= max.z;
  }

  Point3 extent() const {
    if (is_empty()) return {0.0, 0.0, 0.0};
    return {max.x - min.x, max.y - min.y, max.z - min.z};
  }

  double diagonal() const {
    const Point3 e = extent();
    return std::sqrt(e.x * e.x + e.y * e.y + e.z * e.z);
  }

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

inline Aabb bounding_box(std::span<const Point3> points) {
  Aabb box;
  for (const Point3& p : points) box.extend(p);
  return box;
}

inline Aabb bounding_box(const PointCloud& cloud) {
  return bounding_box(std::span<const Point3>(cloud.points));
}

}  // namespace refpcc
