#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refpcc/codec.hpp"
#include "refpcc/geom.hpp"

namespace refpcc {

/// Directed Chamfer distance: mean over p in P of the Euclidean distance to
/// its exact nearest neighbor in Q. Throws ParameterError when either cloud
/// is empty.
double chamfer(const PointCloud& P, const PointCloud& Q);

/// Arithmetic mean of the two directed values.
double chamfer_sym(const PointCloud& P, const PointCloud& Q);

/// PSNR values at or above this are reported as the cap (zero MSE included),
/// keeping reports finite and sortable.
inline constexpr double kPsnrCapDb = 200.0;

/// Default plane-fit neighborhood size.
inline constexpr int kNormalNeighborhood = 12;

/// Symmetric point-to-plane PSNR. Normals come from PCA plane fits over the
/// k nearest neighbors in the cloud being measured against; per-point errors
/// are displacements projected onto that normal; peak is the bounding-box
/// diagonal of `original`. Neighborhoods whose fit has rank < 2 fall back to
/// point-to-point distance. Returns nullopt when every neighborhood in both
/// directions is degenerate; throws ParameterError when either cloud has
/// fewer than k+1 points.
std::optional<double> psnr_point_to_plane(const PointCloud& original,
                                          const PointCloud& reconstructed,
                                          int k = kNormalNeighborhood);

/// Per-cloud quality and size record.
struct QualityReport {
  double chamfer_sym = 0.0;
  std::optional<double> psnr_p2plane;
  double compression_ratio = 0.0;
  std::uint64_t raw_bytes = 0;
  std::uint64_t compressed_bytes = 0;
  StageTimings timings;
};

/// Assembles the report; raw bytes are 12 * |source| (three float32 per
/// point), the same raw baseline the compression ratio is defined against.
QualityReport compression_report(const PointCloud& source,
                                 const CompressedContainer& container,
                                 const PointCloud& reconstructed,
                                 const StageTimings& timings);

/// Chamfer/PSNR-only variant for evaluating already-decompressed files when
/// the container is not at hand.
QualityReport quality_only_report(const PointCloud& source,
                                  const PointCloud& reconstructed);

using RecordFields = std::vector<std::pair<std::string, std::string>>;

RecordFields report_fields(const QualityReport& report);

/// Line-oriented machine-readable record: one key=value per line, blank line
/// terminated.
void write_record(std::ostream& out, const RecordFields& fields);

}  // namespace refpcc
