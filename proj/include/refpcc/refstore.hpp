#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "refpcc/geom.hpp"
#include "refpcc/spatial.hpp"

namespace refpcc {

/// Pose-indexed collection of reference clouds. Clouds live either in memory
/// or behind a file path loaded lazily by id; the loaded cache is shared and
/// thread-safe (loads are idempotent).
class ReferenceDataset {
 public:
  struct Entry {
    std::uint32_t id = 0;
    Pose pose;
    std::filesystem::path file;  // empty for in-memory entries
  };

  ReferenceDataset() = default;
  ReferenceDataset(ReferenceDataset&&) = default;
  ReferenceDataset& operator=(ReferenceDataset&&) = default;

  /// Throws ParameterError on duplicate id or non-finite pose position.
  void add(std::uint32_t id, const Pose& pose, PointCloud cloud);
  void add(std::uint32_t id, const Pose& pose, std::filesystem::path file);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }
  bool contains(std::uint32_t id) const;

  /// Loads (if needed) and returns the cloud for `id`; the returned cloud
  /// carries the entry's id and pose. Throws MismatchError for unknown ids.
  std::shared_ptr<const PointCloud> cloud(std::uint32_t id) const;

 private:
  struct Slot {
    Entry entry;
    mutable std::shared_ptr<const PointCloud> cached;
  };
  std::size_t slot_of(std::uint32_t id) const;

  std::vector<Entry> entries_;
  std::vector<Slot> slots_;
  mutable std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
};

/// The shared static map: a point cloud with a prebuilt exact-NN index and a
/// content-fingerprint id computed identically by compressor and decompressor.
struct MapCloud {
  std::uint32_t id = 0;
  PointCloud cloud;
  KdTree tree;
};

/// Builds the tree and fingerprint for an in-memory map.
MapCloud make_map(PointCloud cloud);

/// 32-bit FNV-1a over the point data at 32-bit precision.
std::uint32_t map_fingerprint(const PointCloud& cloud);

/// Reads a map cloud file and prebuilds its index.
MapCloud load_map(const std::filesystem::path& path);

/// Loads a manifest (see io read_trajectory grammar); cloud paths are
/// resolved relative to the manifest's directory.
ReferenceDataset load_dataset(const std::filesystem::path& manifest);

/// Id of the entry whose pose position is nearest to `source_pose`
/// (Euclidean, ties to the lowest id); nullopt when the dataset is empty or
/// the minimum exceeds max_dist.
std::optional<std::uint32_t> associate(const Pose& source_pose,
                                       const ReferenceDataset& dataset,
                                       double max_dist);

}  // namespace refpcc
