#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "refpcc/codec.hpp"
#include "refpcc/metrics.hpp"
#include "refpcc/scene.hpp"

namespace refpcc {

/// Runs fn(0..count-1) on a fixed-size worker pool. Items are independent;
/// results land wherever fn writes them, so output order is input order
/// regardless of completion order. Per-item exceptions are captured and
/// returned as (index, message) pairs instead of propagating.
std::vector<std::pair<std::size_t, std::string>> parallel_for(
    std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn);

struct BatchItem {
  std::vector<std::uint8_t> container_bytes;  // empty on failure
  std::string error;                          // empty on success
  StageTimings timings;
};

/// Compresses each source cloud against the shared dataset/map on `jobs`
/// workers. Output order matches input order and bytes are identical for any
/// job count.
std::vector<BatchItem> batch_compress(std::span<const PointCloud> sources,
                                      const ReferenceDataset* refs,
                                      const MapCloud* map, const CodecConfig& config,
                                      unsigned jobs);

/// One diff-variant measurement row (consecutive cloud pairs).
struct DiffVariantRow {
  std::size_t pair_index = 0;
  std::size_t query_points = 0;
  std::size_t other_points = 0;
  std::uint64_t fine_us = 0;
  std::uint64_t coarse_us = 0;
  std::uint64_t hybrid_us = 0;
  std::size_t fine_exclusive = 0;
  std::size_t coarse_exclusive = 0;
  std::size_t hybrid_exclusive = 0;
};

/// Runs the pure fine-grained, pure coarse-grained, and hybrid diffs on each
/// consecutive pair, recording wall time and exclusive counts. Throws
/// ParameterError with fewer than two clouds.
std::vector<DiffVariantRow> bench_diff_variants(std::span<const PointCloud> clouds,
                                                double d);

/// Same measurement over explicit (query, other) pairs — e.g. each source
/// cloud against its associated reference, the codec's actual diff workload.
std::vector<DiffVariantRow> bench_diff_variants(std::span<const PointCloud> queries,
                                                std::span<const PointCloud> others,
                                                double d);

/// One (configuration, cloud) outcome of a bench sweep.
struct BenchRecord {
  std::string axis;      // "d", "noise", "channels", ...
  double axis_value = 0.0;
  std::uint32_t cloud_id = 0;
  QualityReport report;
};

struct BenchAggregate {
  std::string axis;
  double axis_value = 0.0;
  double median_ratio = 0.0;
  double median_chamfer = 0.0;
  std::optional<double> median_psnr;
  double clouds_per_second = 0.0;  // compression throughput only
};

struct BenchResult {
  std::vector<BenchRecord> records;
  std::vector<BenchAggregate> aggregates;
};

double median(std::vector<double> values);

/// Compress + decompress + evaluate every source cloud of a generated scene
/// at one configuration; appends per-cloud records and one aggregate.
void bench_one_config(const GeneratedScene& scene, const CodecConfig& config,
                      const std::string& axis, double axis_value, unsigned jobs,
                      BenchResult& out);

}  // namespace refpcc
