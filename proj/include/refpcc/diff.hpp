#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "refpcc/geom.hpp"
#include "refpcc/spatial.hpp"

namespace refpcc {

/// Partition of a query cloud's indices against another cloud at threshold d:
/// `exclusive` holds indices whose nearest other-cloud neighbor is farther
/// than d; `common` pairs each remaining query index with a witness index in
/// the other cloud at distance <= d. Both lists sorted by query index;
/// together they cover {0..|query|-1} exactly once.
struct DiffResult {
  std::vector<std::uint32_t> exclusive;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> common;
};

/// Direct O(|query|*|other|) evaluation; the testing oracle. A point is
/// common iff its exact nearest neighbor (lowest index on ties) lies within
/// d — squared distances compared against d^2, boundary counts as common.
/// d = 0 means bitwise-coincident points only. Throws ParameterError for
/// negative d.
DiffResult brute_diff(const PointCloud& query, const PointCloud& other, double d);

/// Coarse voxel screening (edge derived from d so that sharing a voxel
/// proves distance <= d) followed by exact KD-tree resolution of the
/// screened candidates only. Produces the same exclusive set as brute_diff;
/// common witnesses may differ. Throws ParameterError unless d > 0.
DiffResult hybrid_diff(const PointCloud& query, const PointCloud& other, double d);

/// Pure point-based variant: every query point resolved through the KD-tree.
/// Same result contract as hybrid_diff; exists for the diff-variant benchmark.
DiffResult fine_diff(const PointCloud& query, const PointCloud& other, double d);

/// Pure region-based variant for the benchmark: voxel occupancy only, no
/// refinement. Candidates are (over-)counted as exclusive, so the exclusive
/// set is a superset of the true one; commons are same-voxel witnesses.
DiffResult coarse_diff(const PointCloud& query, const PointCloud& other, double d);

/// Voxel edge used by the coarse pass for threshold d (slightly under
/// d/sqrt(3) so the voxel diagonal stays <= d after rounding).
double coarse_edge_for(double d);

/// Shared grid origin for a cloud pair: componentwise floor of the union
/// bounding-box minimum.
Point3 shared_grid_origin(const PointCloud& a, const PointCloud& b);

/// first = hybrid_diff(source, reference, d); second = hybrid_diff(reference,
/// source, d).
std::pair<DiffResult, DiffResult> two_way_diff(const PointCloud& source,
                                               const PointCloud& reference,
                                               double d);

struct MapDiffResult {
  std::vector<Point3> still_exclusive;      // input order preserved
  std::vector<std::uint32_t> map_common;    // sorted, deduplicated
};

/// One-way diff of already-exclusive source points against the prebuilt map
/// index. Points with a map neighbor within d contribute that neighbor's
/// index (deduplicated); the rest pass through verbatim. No reverse diff
/// against the map is ever computed.
MapDiffResult map_diff(std::span<const Point3> source_exclusive,
                       const KdTree& map_index, double d);

/// The compact representation of one source cloud: its fully exclusive
/// points plus index references into the reference cloud and map.
struct CascadedDiff {
  std::uint32_t source_id = 0;
  Pose source_pose;  // in-memory only; not part of the wire format
  double threshold = 0.0;
  std::optional<std::uint32_t> ref_id;
  std::optional<std::uint32_t> map_id;
  std::vector<Point3> source_exclusive;        // P_(S-R-M), source order
  std::vector<std::uint32_t> ref_exclusive;    // indices into reference, ascending
  std::vector<std::uint32_t> map_common;       // indices into map, ascending
};

struct CascadeTimings {
  std::uint64_t ref_diff_us = 0;
  std::uint64_t map_diff_us = 0;
};

/// Runs the full cascade: two-way diff against `reference` (when present),
/// then the one-way map diff of the surviving exclusives (when a map is
/// present). Empty source short-circuits to an empty representation.
CascadedDiff cascaded_diff(const PointCloud& source, const PointCloud* reference,
                           const PointCloud* map_points, const KdTree* map_index,
                           double d, CascadeTimings* timings = nullptr);

/// Inverse composition: reference points not listed as ref-exclusive (in
/// reference order), then map points at map_common (in index order), then
/// the stored exclusive points. Output carries the source id and pose.
/// Throws MismatchError on a wrong reference/map id and CorruptionError on
/// out-of-range indices.
PointCloud reconstruct(const CascadedDiff& cd, const PointCloud* reference,
                       const PointCloud* map_points);

}  // namespace refpcc
