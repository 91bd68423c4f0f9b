#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "refpcc/geom.hpp"

namespace refpcc {

/// Integer lattice coordinates of a voxel:
/// key(p) = floor((p - origin)/edge) componentwise, computed identically
/// everywhere (grid build and candidate lookup share this function).
struct VoxelKey {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  std::int64_t iz = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
};

VoxelKey voxel_key_of(const Point3& p, const Point3& origin, double edge);

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept;
};

/// Flat hash of occupied voxels over an immutable point set. Point indices
/// are stored grouped by voxel in one contiguous array (ascending within
/// each voxel, so the group's first entry is the lowest index).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;

  double edge() const { return edge_; }
  const Point3& origin() const { return origin_; }
  std::size_t point_count() const { return indices_.size(); }
  std::size_t occupied_voxel_count() const { return keys_.size(); }

  bool occupied(const VoxelKey& key) const { return lookup_.count(key) != 0; }

  /// Indices in the voxel, ascending; empty span if the voxel is unoccupied.
  std::span<const std::uint32_t> voxel(const VoxelKey& key) const;

  /// Occupied voxels by dense voxel id (iteration order of the build).
  const std::vector<VoxelKey>& keys() const { return keys_; }
  std::span<const std::uint32_t> voxel_by_id(std::uint32_t voxel_id) const;

  friend OccupancyGrid grid_build(std::span<const Point3> points, double edge,
                                  const Point3& origin);

 private:
  double edge_ = 0.0;
  Point3 origin_;
  std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> lookup_;  // -> voxel id
  std::vector<VoxelKey> keys_;
  std::vector<std::uint32_t> offsets_;  // per voxel id; size keys_+1
  std::vector<std::uint32_t> indices_;  // point indices grouped by voxel
};

/// Throws ParameterError if edge <= 0.
OccupancyGrid grid_build(std::span<const Point3> points, double edge,
                         const Point3& origin);
OccupancyGrid grid_build(const PointCloud& cloud, double edge,
                         const Point3& origin);

/// Coarse screening pass: sorted indices of query points whose voxel is not
/// occupied in `other`. Every index NOT returned shares a voxel with an
/// `other` point, so with edge <= d/sqrt(3) it has a neighbor within d.
/// Throws ParameterError if the grids disagree on edge or origin.
std::vector<std::uint32_t> grid_candidates(const OccupancyGrid& query_grid,
                                           const OccupancyGrid& other_grid);

/// Exact nearest-neighbor tree over an immutable point sequence.
/// Build is deterministic: median split on the widest axis, ties to the
/// lower point index. Queries return the exact minimizer of the squared
/// distance, ties broken by lowest index.
class KdTree {
 public:
  struct Neighbor {
    std::uint32_t index = 0;
    double squared_dist = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Point3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Point3>& points() const { return points_; }

  /// Nullopt only for an empty tree.
  std::optional<Neighbor> nearest(const Point3& query) const;

  /// Exact nearest neighbor among points with squared distance <= limit_d2;
  /// nullopt when none qualifies. Equal to nearest() whenever that result is
  /// within the limit (same lowest-index tie-breaking), but prunes the
  /// search at the limit, which is far cheaper for isolated query points.
  std::optional<Neighbor> nearest_within(const Point3& query,
                                         double limit_d2) const;

  /// The k nearest neighbors, sorted by (squared distance, index).
  /// Returns fewer when the tree holds fewer than k points.
  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const;

 private:
  void build(std::uint32_t lo, std::uint32_t hi);

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;  // permutation; node at mid of [lo,hi)
  std::vector<std::uint8_t> axis_;    // split axis per order_ position
};

KdTree kdtree_build(const PointCloud& cloud);

inline std::optional<KdTree::Neighbor> kdtree_nearest(const KdTree& tree,
                                                      const Point3& q) {
  return tree.nearest(q);
}

}  // namespace refpcc
