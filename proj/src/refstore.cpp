#include "refpcc/refstore.hpp"

#include <bit>
#include <limits>
#include <unordered_map>

#include "refpcc/error.hpp"
#include "refpcc/io.hpp"

namespace refpcc {

namespace {

void check_entry(const ReferenceDataset& ds, std::uint32_t id, const Pose& pose) {
  if (ds.contains(id))
    throw ParameterError("duplicate reference cloud id " + std::to_string(id));
  if (!is_finite(pose.position))
    throw ParameterError("non-finite pose position for reference cloud " +
                         std::to_string(id));
}

}  // namespace

void ReferenceDataset::add(std::uint32_t id, const Pose& pose, PointCloud cloud) {
  check_entry(*this, id, pose);
  cloud.id = id;
  cloud.pose = pose;
  Slot slot;
  slot.entry = Entry{id, pose, {}};
  slot.cached = std::make_shared<const PointCloud>(std::move(cloud));
  entries_.push_back(slot.entry);
  slots_.push_back(std::move(slot));
}

void ReferenceDataset::add(std::uint32_t id, const Pose& pose,
                           std::filesystem::path file) {
  check_entry(*this, id, pose);
  Slot slot;
  slot.entry = Entry{id, pose, std::move(file)};
  entries_.push_back(slot.entry);
  slots_.push_back(std::move(slot));
}

bool ReferenceDataset::contains(std::uint32_t id) const {
  for (const Entry& e : entries_)
    if (e.id == id) return true;
  return false;
}

std::size_t ReferenceDataset::slot_of(std::uint32_t id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].id == id) return i;
  throw MismatchError("reference cloud id " + std::to_string(id) +
                      " not in dataset");
}

std::shared_ptr<const PointCloud> ReferenceDataset::cloud(std::uint32_t id) const {
  const std::size_t i = slot_of(id);
  {
    std::lock_guard<std::mutex> lock(*mutex_);
    if (slots_[i].cached) return slots_[i].cached;
  }
  // Load outside the lock; concurrent duplicate loads are permitted and
  // idempotent — the first insert wins.
  PointCloud loaded = read_cloud(slots_[i].entry.file);
  loaded.id = id;
  loaded.pose = slots_[i].entry.pose;
  auto fresh = std::make_shared<const PointCloud>(std::move(loaded));
  std::lock_guard<std::mutex> lock(*mutex_);
  if (!slots_[i].cached) slots_[i].cached = std::move(fresh);
  return slots_[i].cached;
}

std::uint32_t map_fingerprint(const PointCloud& cloud) {
  std::uint32_t h = 2166136261u;
  auto feed = [&](std::uint32_t word) {
    for (int b = 0; b < 4; ++b) {
      h ^= (word >> (8 * b)) & 0xFF;
      h *= 16777619u;
    }
  };
  feed(static_cast<std::uint32_t>(cloud.points.size()));
  for (const Point3& p : cloud.points) {
    feed(std::bit_cast<std::uint32_t>(static_cast<float>(p.x)));
    feed(std::bit_cast<std::uint32_t>(static_cast<float>(p.y)));
    feed(std::bit_cast<std::uint32_t>(static_cast<float>(p.z)));
  }
  return h;
}

MapCloud make_map(PointCloud cloud) {
  MapCloud map;
  map.id = map_fingerprint(cloud);
  map.tree = KdTree(cloud.points);
  map.cloud = std::move(cloud);
  map.cloud.id = map.id;
  map.cloud.pose = Pose::identity();
  return map;
}

MapCloud load_map(const std::filesystem::path& path) {
  return make_map(read_cloud(path));
}

ReferenceDataset load_dataset(const std::filesystem::path& manifest) {
  const auto records = read_trajectory(manifest);
  const auto base = manifest.parent_path();
  ReferenceDataset ds;
  for (const TrajectoryRecord& r : records) {
    if (r.relative_path.empty())
      throw IoError(manifest.string() + ": entry " + std::to_string(r.id) +
                    " has no cloud path");
    ds.add(r.id, r.pose, base / r.relative_path);
  }
  return ds;
}

std::optional<std::uint32_t> associate(const Pose& source_pose,
                                       const ReferenceDataset& dataset,
                                       double max_dist) {
  if (max_dist < 0.0) throw ParameterError("associate: max_dist must be >= 0");
  double best_d2 = std::numeric_limits<double>::infinity();
  std::optional<std::uint32_t> best;
  for (const auto& e : dataset.entries()) {
    const double d2 = squared_distance(source_pose.position, e.pose.position);
    if (d2 < best_d2 || (d2 == best_d2 && best && e.id < *best)) {
      best_d2 = d2;
      best = e.id;
    }
  }
  if (!best || best_d2 > max_dist * max_dist) return std::nullopt;
  return best;
}

}  // namespace refpcc
