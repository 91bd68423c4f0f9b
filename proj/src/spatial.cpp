#include "refpcc/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "refpcc/error.hpp"

namespace refpcc {

VoxelKey voxel_key_of(const Point3& p, const Point3& origin, double edge) {
  return VoxelKey{
      static_cast<std::int64_t>(std::floor((p.x - origin.x) / edge)),
      static_cast<std::int64_t>(std::floor((p.y - origin.y) / edge)),
      static_cast<std::int64_t>(std::floor((p.z - origin.z) / edge)),
  };
}

std::size_t VoxelKeyHash::operator()(const VoxelKey& k) const noexcept {
  // splitmix64-style mixing of the three lattice coordinates
  auto mix = [](std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ULL;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    return v ^ (v >> 31);
  };
  std::uint64_t h = mix(static_cast<std::uint64_t>(k.ix));
  h = mix(h ^ static_cast<std::uint64_t>(k.iy));
  h = mix(h ^ static_cast<std::uint64_t>(k.iz));
  return static_cast<std::size_t>(h);
}

std::span<const std::uint32_t> OccupancyGrid::voxel(const VoxelKey& key) const {
  auto it = lookup_.find(key);
  if (it == lookup_.end()) return {};
  return voxel_by_id(it->second);
}

std::span<const std::uint32_t> OccupancyGrid::voxel_by_id(
    std::uint32_t voxel_id) const {
  return std::span<const std::uint32_t>(indices_.data() + offsets_[voxel_id],
                                        offsets_[voxel_id + 1] - offsets_[voxel_id]);
}

OccupancyGrid grid_build(std::span<const Point3> points, double edge,
                         const Point3& origin) {
  if (!(edge > 0.0)) throw ParameterError("grid_build: edge must be positive");
  if (points.size() > std::numeric_limits<std::uint32_t>::max())
    throw ParameterError("grid_build: too many points for 32-bit indexing");
  OccupancyGrid grid;
  grid.edge_ = edge;
  grid.origin_ = origin;
  grid.lookup_.reserve(points.size());

  // Pass 1: assign dense voxel ids and count occupancy.
  std::vector<std::uint32_t> voxel_of(points.size());
  std::vector<std::uint32_t> counts;
  for (std::uint32_t i = 0; i < points.size(); ++i) {
    const VoxelKey key = voxel_key_of(points[i], origin, edge);
    auto [it, inserted] =
        grid.lookup_.emplace(key, static_cast<std::uint32_t>(grid.keys_.size()));
    if (inserted) {
      grid.keys_.push_back(key);
      counts.push_back(0);
    }
    voxel_of[i] = it->second;
    ++counts[it->second];
  }

  // Pass 2: prefix sums, then scatter indices in point order so every
  // voxel's group stays ascending.
  grid.offsets_.assign(grid.keys_.size() + 1, 0);
  for (std::size_t v = 0; v < counts.size(); ++v)
    grid.offsets_[v + 1] = grid.offsets_[v] + counts[v];
  grid.indices_.resize(points.size());
  std::vector<std::uint32_t> cursor(grid.offsets_.begin(), grid.offsets_.end() - 1);
  for (std::uint32_t i = 0; i < points.size(); ++i)
    grid.indices_[cursor[voxel_of[i]]++] = i;
  return grid;
}

OccupancyGrid grid_build(const PointCloud& cloud, double edge,
                         const Point3& origin) {
  return grid_build(std::span<const Point3>(cloud.points), edge, origin);
}

std::vector<std::uint32_t> grid_candidates(const OccupancyGrid& query_grid,
                                           const OccupancyGrid& other_grid) {
  if (query_grid.edge() != other_grid.edge() ||
      !(query_grid.origin() == other_grid.origin()))
    throw ParameterError("grid_candidates: grids have mismatched edge/origin");
  std::vector<std::uint32_t> out;
  const auto& keys = query_grid.keys();
  for (std::uint32_t v = 0; v < keys.size(); ++v) {
    if (other_grid.occupied(keys[v])) continue;
    const auto group = query_grid.voxel_by_id(v);
    out.insert(out.end(), group.begin(), group.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

double coord(const Point3& p, unsigned axis) {
  switch (axis) {
    case 0: return p.x;
    case 1: return p.y;
    default: return p.z;
  }
}

}  // namespace

KdTree::KdTree(std::vector<Point3> points) : points_(std::move(points)) {
  if (points_.size() > std::numeric_limits<std::uint32_t>::max())
    throw ParameterError("KdTree: too many points for 32-bit indexing");
  order_.resize(points_.size());
  for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
  axis_.assign(points_.size(), 0);
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

void KdTree::build(std::uint32_t lo, std::uint32_t hi) {
  if (hi - lo <= 1) return;
  Aabb box;
  for (std::uint32_t i = lo; i < hi; ++i) box.extend(points_[order_[i]]);
  const Point3 e = box.extent();
  unsigned axis = 0;  // widest axis, ties to the lowest axis index
  if (e.y > coord(e, axis)) axis = 1;
  if (e.z > coord(e, axis)) axis = 2;

  const std::uint32_t mid = lo + (hi - lo) / 2;
  std::nth_element(order_.begin() + lo, order_.begin() + mid,
                   order_.begin() + hi,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = coord(points_[a], axis);
                     const double cb = coord(points_[b], axis);
                     if (ca != cb) return ca < cb;
                     return a < b;
                   });
  axis_[mid] = static_cast<std::uint8_t>(axis);
  build(lo, mid);
  build(mid + 1, hi);
}

namespace {

struct NearestState {
  double best_d2 = std::numeric_limits<double>::infinity();
  std::uint32_t best_idx = 0;
  bool found = false;
};

}  // namespace

std::optional<KdTree::Neighbor> KdTree::nearest(const Point3& query) const {
  if (points_.empty()) return std::nullopt;
  NearestState st;
  // Visits the near side first and descends into the far side whenever the
  // splitting plane could still hold an equal or better match (<=, so index
  // tie-breaking stays exact).
  auto visit = [&](auto&& self, std::uint32_t lo, std::uint32_t hi) -> void {
    if (lo >= hi) return;
    const std::uint32_t mid = lo + (hi - lo) / 2;
    const std::uint32_t idx = order_[mid];
    const double d2 = squared_distance(query, points_[idx]);
    if (!st.found || d2 < st.best_d2 ||
        (d2 == st.best_d2 && idx < st.best_idx)) {
      st.best_d2 = d2;
      st.best_idx = idx;
      st.found = true;
    }
    if (hi - lo == 1) return;
    const unsigned axis = axis_[mid];
    const double delta = coord(query, axis) - coord(points_[idx], axis);
    if (delta < 0.0) {
      self(self, lo, mid);
      if (delta * delta <= st.best_d2) self(self, mid + 1, hi);
    } else {
      self(self, mid + 1, hi);
      if (delta * delta <= st.best_d2) self(self, lo, mid);
    }
  };
  visit(visit, 0, static_cast<std::uint32_t>(points_.size()));
  return Neighbor{st.best_idx, st.best_d2};
}

std::optional<KdTree::Neighbor> KdTree::nearest_within(const Point3& query,
                                                       double limit_d2) const {
  if (points_.empty() || limit_d2 < 0.0) return std::nullopt;
  // Same search as nearest() but the radius starts at the limit, so subtrees
  // that cannot contain a qualifying point are pruned immediately. Whenever a
  // point within the limit exists, the result is exactly nearest().
  NearestState st;
  st.best_d2 = limit_d2;
  auto visit = [&](auto&& self, std::uint32_t lo, std::uint32_t hi) -> void {
    if (lo >= hi) return;
    const std::uint32_t mid = lo + (hi - lo) / 2;
    const std::uint32_t idx = order_[mid];
    const double d2 = squared_distance(query, points_[idx]);
    if (d2 < st.best_d2 || (d2 == st.best_d2 && (!st.found || idx < st.best_idx))) {
      st.best_d2 = d2;
      st.best_idx = idx;
      st.found = true;
    }
    if (hi - lo == 1) return;
    const unsigned axis = axis_[mid];
    const double delta = coord(query, axis) - coord(points_[idx], axis);
    if (delta < 0.0) {
      self(self, lo, mid);
      if (delta * delta <= st.best_d2) self(self, mid + 1, hi);
    } else {
      self(self, mid + 1, hi);
      if (delta * delta <= st.best_d2) self(self, lo, mid);
    }
  };
  visit(visit, 0, static_cast<std::uint32_t>(points_.size()));
  if (!st.found) return std::nullopt;
  return Neighbor{st.best_idx, st.best_d2};
}

std::vector<KdTree::Neighbor> KdTree::knn(const Point3& query,
                                          std::size_t k) const {
  std::vector<Neighbor> heap;  // max-heap on (d2, index)
  if (k == 0 || points_.empty()) return heap;
  auto worse = [](const Neighbor& a, const Neighbor& b) {
    if (a.squared_dist != b.squared_dist)
      return a.squared_dist < b.squared_dist;
    return a.index < b.index;
  };
  auto visit = [&](auto&& self, std::uint32_t lo, std::uint32_t hi) -> void {
    if (lo >= hi) return;
    const std::uint32_t mid = lo + (hi - lo) / 2;
    const std::uint32_t idx = order_[mid];
    const Neighbor cand{idx, squared_distance(query, points_[idx])};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), worse);
    } else if (worse(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), worse);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), worse);
    }
    if (hi - lo == 1) return;
    const unsigned axis = axis_[mid];
    const double delta = coord(query, axis) - coord(points_[idx], axis);
    auto need_far = [&] {
      return heap.size() < k || delta * delta <= heap.front().squared_dist;
    };
    if (delta < 0.0) {
      self(self, lo, mid);
      if (need_far()) self(self, mid + 1, hi);
    } else {
      self(self, mid + 1, hi);
      if (need_far()) self(self, lo, mid);
    }
  };
  visit(visit, 0, static_cast<std::uint32_t>(points_.size()));
  std::sort(heap.begin(), heap.end(), worse);
  return heap;
}

KdTree kdtree_build(const PointCloud& cloud) { return KdTree(cloud.points); }

}  // namespace refpcc
