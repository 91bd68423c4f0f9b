#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "refpcc/geom.hpp"

namespace refpcc {

enum class CloudFormat {
  PlyBinaryLE,  // binary little-endian PLY 1.0, float32 x/y/z (canonical)
  PcdBinary,    // PCD v0.7 binary, xyz float32
  Raw,          // internal raw: "RAW1" magic, u32 count, count * 3 float32 LE
};

/// Reads a point cloud from PLY (binary-LE or ASCII), PCD binary, or the
/// internal raw format, dispatching on file content. Points are returned in
/// file order (order is semantic: indices depend on it); non-geometry
/// attributes are ignored. Throws IoError for unknown formats, truncated
/// payloads, non-finite coordinates, or counts >= 2^32.
PointCloud read_cloud(const std::filesystem::path& path);

/// Inverse of read_cloud for the supported binary formats.
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                 CloudFormat format = CloudFormat::PlyBinaryLE);

/// One line of a trajectory/reference manifest:
/// id,timestamp_us,x,y,z,qx,qy,qz,qw,relative_path
struct TrajectoryRecord {
  std::uint32_t id = 0;
  Pose pose;
  std::string relative_path;
};

/// Parses a manifest. `#` comments and blank lines allowed; duplicate ids
/// and non-unit quaternions rejected. Errors carry line numbers.
std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path);

void write_trajectory(const std::filesystem::path& path,
                      std::span<const TrajectoryRecord> records);

}  // namespace refpcc
