#include "refpcc/diff.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "refpcc/error.hpp"

namespace refpcc {

DiffResult brute_diff(const PointCloud& query, const PointCloud& other, double d) {
  if (d < 0.0 || !std::isfinite(d))
    throw ParameterError("brute_diff: threshold must be finite and >= 0");
  const double d2 = d * d;
  DiffResult result;
  for (std::uint32_t i = 0; i < query.points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_j = 0;
    for (std::uint32_t j = 0; j < other.points.size(); ++j) {
      const double dist2 = squared_distance(query.points[i], other.points[j]);
      if (dist2 < best) {  // first occurrence wins ties: lowest index
        best = dist2;
        best_j = j;
      }
    }
    if (best <= d2)
      result.common.emplace_back(i, best_j);
    else
      result.exclusive.push_back(i);
  }
  return result;
}

double coarse_edge_for(double d) {
  // Keep 3*edge^2 strictly below d^2 so same-voxel co-occupancy proves
  // distance <= d even after floating-point rounding of d/sqrt(3).
  return d / std::sqrt(3.0) * (1.0 - 1e-9);
}

Point3 shared_grid_origin(const PointCloud& a, const PointCloud& b) {
  Aabb box = bounding_box(a);
  for (const Point3& p : b.points) box.extend(p);
  if (box.is_empty()) return {0.0, 0.0, 0.0};
  return {std::floor(box.min.x), std::floor(box.min.y), std::floor(box.min.z)};
}

namespace {

struct CoarsePass {
  OccupancyGrid query_grid;
  OccupancyGrid other_grid;
  std::vector<std::uint32_t> candidates;  // sorted query indices
};

CoarsePass run_coarse(const PointCloud& query, const PointCloud& other, double d) {
  const double edge = coarse_edge_for(d);
  const Point3 origin = shared_grid_origin(query, other);
  CoarsePass pass;
  pass.query_grid = grid_build(query, edge, origin);
  pass.other_grid = grid_build(other, edge, origin);
  pass.candidates = grid_candidates(pass.query_grid, pass.other_grid);
  return pass;
}

// Common witness for a non-candidate query point: lowest index sharing its
// voxel in the other grid.
std::uint32_t same_voxel_witness(const CoarsePass& pass, const Point3& p) {
  const VoxelKey key = voxel_key_of(p, pass.other_grid.origin(), pass.other_grid.edge());
  return pass.other_grid.voxel(key).front();
}

void require_positive(double d, const char* who) {
  if (!(d > 0.0) || !std::isfinite(d))
    throw ParameterError(std::string(who) + ": threshold must be finite and > 0");
}

}  // namespace

DiffResult hybrid_diff(const PointCloud& query, const PointCloud& other, double d) {
  require_positive(d, "hybrid_diff");
  DiffResult result;
  if (query.points.empty()) return result;

  const CoarsePass pass = run_coarse(query, other, d);
  const double d2 = d * d;
  result.common.reserve(query.points.size() - pass.candidates.size());

  // Resolve only the screened candidates through the exact tree.
  KdTree tree;
  if (!pass.candidates.empty()) tree = KdTree(other.points);
  std::vector<std::optional<KdTree::Neighbor>> resolved(pass.candidates.size());
  for (std::size_t c = 0; c < pass.candidates.size(); ++c)
    resolved[c] = tree.nearest(query.points[pass.candidates[c]]);

  std::size_t c = 0;
  for (std::uint32_t i = 0; i < query.points.size(); ++i) {
    if (c < pass.candidates.size() && pass.candidates[c] == i) {
      const auto& nn = resolved[c++];
      if (nn && nn->squared_dist <= d2)
        result.common.emplace_back(i, nn->index);
      else
        result.exclusive.push_back(i);
    } else {
      result.common.emplace_back(i, same_voxel_witness(pass, query.points[i]));
    }
  }
  return result;
}

DiffResult fine_diff(const PointCloud& query, const PointCloud& other, double d) {
  require_positive(d, "fine_diff");
  DiffResult result;
  if (query.points.empty()) return result;
  const KdTree tree(other.points);
  const double d2 = d * d;
  result.common.reserve(query.points.size());
  for (std::uint32_t i = 0; i < query.points.size(); ++i) {
    const auto nn = tree.nearest(query.points[i]);
    if (nn && nn->squared_dist <= d2)
      result.common.emplace_back(i, nn->index);
    else
      result.exclusive.push_back(i);
  }
  return result;
}

DiffResult coarse_diff(const PointCloud& query, const PointCloud& other, double d) {
  require_positive(d, "coarse_diff");
  DiffResult result;
  if (query.points.empty()) return result;
  const CoarsePass pass = run_coarse(query, other, d);
  result.common.reserve(query.points.size() - pass.candidates.size());
  std::size_t c = 0;
  for (std::uint32_t i = 0; i < query.points.size(); ++i) {
    if (c < pass.candidates.size() && pass.candidates[c] == i) {
      ++c;
      result.exclusive.push_back(i);
    } else {
      result.common.emplace_back(i, same_voxel_witness(pass, query.points[i]));
    }
  }
  return result;
}

std::pair<DiffResult, DiffResult> two_way_diff(const PointCloud& source,
                                               const PointCloud& reference,
                                               double d) {
  return {hybrid_diff(source, reference, d), hybrid_diff(reference, source, d)};
}

MapDiffResult map_diff(std::span<const Point3> source_exclusive,
                       const KdTree& map_index, double d) {
  require_positive(d, "map_diff");
  const double d2 = d * d;
  MapDiffResult out;
  for (const Point3& p : source_exclusive) {
    if (const auto nn = map_index.nearest_within(p, d2))
      out.map_common.push_back(nn->index);
    else
      out.still_exclusive.push_back(p);
  }
  std::sort(out.map_common.begin(), out.map_common.end());
  out.map_common.erase(std::unique(out.map_common.begin(), out.map_common.end()),
                       out.map_common.end());
  return out;
}

CascadedDiff cascaded_diff(const PointCloud& source, const PointCloud* reference,
                           const PointCloud* map_points, const KdTree* map_index,
                           double d, CascadeTimings* timings) {
  using Clock = std::chrono::steady_clock;
  auto elapsed_us = [](Clock::time_point since) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - since)
            .count());
  };

  CascadedDiff cd;
  cd.source_id = source.id;
  cd.source_pose = source.pose;
  cd.threshold = d;
  if (source.points.empty()) return cd;  // empty source -> empty representation

  std::vector<Point3> exclusive_pts;
  const auto t_ref = Clock::now();
  if (reference) {
    auto diff = (d > 0.0) ? two_way_diff(source, *reference, d)
                          : std::pair{brute_diff(source, *reference, d),
                                      brute_diff(*reference, source, d)};
    cd.ref_id = reference->id;
    cd.ref_exclusive = std::move(diff.second.exclusive);
    exclusive_pts.reserve(diff.first.exclusive.size());
    for (std::uint32_t i : diff.first.exclusive)
      exclusive_pts.push_back(source.points[i]);
  } else {
    exclusive_pts = source.points;
  }
  if (timings) timings->ref_diff_us = elapsed_us(t_ref);

  const auto t_map = Clock::now();
  if (map_points && map_index && d > 0.0) {
    MapDiffResult md = map_diff(exclusive_pts, *map_index, d);
    cd.map_id = map_points->id;
    cd.map_common = std::move(md.map_common);
    cd.source_exclusive = std::move(md.still_exclusive);
  } else if (map_points && map_index) {
    // d = 0: exact-coincidence map matching through the same path.
    cd.map_id = map_points->id;
    for (const Point3& p : exclusive_pts) {
      if (const auto nn = map_index->nearest_within(p, 0.0))
        cd.map_common.push_back(nn->index);
      else
        cd.source_exclusive.push_back(p);
    }
    std::sort(cd.map_common.begin(), cd.map_common.end());
    cd.map_common.erase(std::unique(cd.map_common.begin(), cd.map_common.end()),
                        cd.map_common.end());
  } else {
    cd.source_exclusive = std::move(exclusive_pts);
  }
  if (timings) timings->map_diff_us = elapsed_us(t_map);
  return cd;
}

PointCloud reconstruct(const CascadedDiff& cd, const PointCloud* reference,
                       const PointCloud* map_points) {
  PointCloud out;
  out.id = cd.source_id;
  out.pose = cd.source_pose;

  if (cd.ref_id) {
    if (!reference)
      throw MismatchError("reconstruct: reference cloud required but absent");
    if (reference->id != *cd.ref_id)
      throw MismatchError("reconstruct: reference id mismatch (want " +
                          std::to_string(*cd.ref_id) + ", have " +
                          std::to_string(reference->id) + ")");
    const auto& skip = cd.ref_exclusive;
    for (std::uint32_t idx : skip)
      if (idx >= reference->points.size())
        throw CorruptionError("reconstruct: reference index out of range");
    std::size_t s = 0;
    out.points.reserve(reference->points.size() - skip.size());
    for (std::uint32_t i = 0; i < reference->points.size(); ++i) {
      if (s < skip.size() && skip[s] == i) {
        ++s;
        continue;
      }
      out.points.push_back(reference->points[i]);
    }
  } else if (!cd.ref_exclusive.empty()) {
    throw CorruptionError("reconstruct: reference indices without a reference");
  }

  if (cd.map_id) {
    if (!map_points)
      throw MismatchError("reconstruct: map required but absent");
    if (map_points->id != *cd.map_id)
      throw MismatchError("reconstruct: map id mismatch");
    for (std::uint32_t idx : cd.map_common) {
      if (idx >= map_points->points.size())
        throw CorruptionError("reconstruct: map index out of range");
      out.points.push_back(map_points->points[idx]);
    }
  } else if (!cd.map_common.empty()) {
    throw CorruptionError("reconstruct: map indices without a map");
  }

  out.points.insert(out.points.end(), cd.source_exclusive.begin(),
                    cd.source_exclusive.end());
  return out;
}

}  // namespace refpcc
