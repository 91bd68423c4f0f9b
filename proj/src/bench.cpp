#include "refpcc/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "refpcc/diff.hpp"
#include "refpcc/error.hpp"

namespace refpcc {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_us(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - since)
          .count());
}

}  // namespace

std::vector<std::pair<std::size_t, std::string>> parallel_for(
    std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::string> errors(count);
  if (jobs == 0) jobs = 1;
  if (jobs == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    const unsigned n = std::min<std::size_t>(jobs, count);
    pool.reserve(n);
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<std::pair<std::size_t, std::string>> failures;
  for (std::size_t i = 0; i < count; ++i)
    if (!errors[i].empty()) failures.emplace_back(i, errors[i]);
  return failures;
}

std::vector<BatchItem> batch_compress(std::span<const PointCloud> sources,
                                      const ReferenceDataset* refs,
                                      const MapCloud* map, const CodecConfig& config,
                                      unsigned jobs) {
  std::vector<BatchItem> items(sources.size());
  parallel_for(sources.size(), jobs, [&](std::size_t i) {
    try {
      StageTimings t;
      const CompressedContainer c = compress(sources[i], refs, map, config, &t);
      items[i].container_bytes = serialize(c);
      items[i].timings = t;
    } catch (const std::exception& e) {
      items[i].error = e.what();
    }
  });
  return items;
}

namespace {

DiffVariantRow measure_pair(std::size_t index, const PointCloud& query,
                            const PointCloud& other, double d) {
  // Two timed runs per variant, keeping the minimum, so allocator and cache
  // state from whichever variant ran previously does not skew the ordering.
  auto timed = [&](auto&& diff_fn, std::size_t& exclusive_out) {
    std::uint64_t best = 0;
    for (int run = 0; run < 2; ++run) {
      const auto t0 = Clock::now();
      const DiffResult r = diff_fn(query, other, d);
      const std::uint64_t us = elapsed_us(t0);
      best = run == 0 ? us : std::min(best, us);
      exclusive_out = r.exclusive.size();
    }
    return best;
  };
  DiffVariantRow row;
  row.pair_index = index;
  row.query_points = query.points.size();
  row.other_points = other.points.size();
  row.fine_us = timed(fine_diff, row.fine_exclusive);
  row.coarse_us = timed(coarse_diff, row.coarse_exclusive);
  row.hybrid_us = timed(hybrid_diff, row.hybrid_exclusive);
  return row;
}

}  // namespace

std::vector<DiffVariantRow> bench_diff_variants(std::span<const PointCloud> clouds,
                                                double d) {
  if (clouds.size() < 2)
    throw ParameterError("bench_diff_variants: need at least two clouds");
  std::vector<DiffVariantRow> rows;
  for (std::size_t i = 0; i + 1 < clouds.size(); ++i)
    rows.push_back(measure_pair(i, clouds[i], clouds[i + 1], d));
  return rows;
}

std::vector<DiffVariantRow> bench_diff_variants(std::span<const PointCloud> queries,
                                                std::span<const PointCloud> others,
                                                double d) {
  if (queries.empty() || queries.size() != others.size())
    throw ParameterError("bench_diff_variants: need matching nonempty pair lists");
  std::vector<DiffVariantRow> rows;
  for (std::size_t i = 0; i < queries.size(); ++i)
    rows.push_back(measure_pair(i, queries[i], others[i], d));
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return (values[mid - 1] + values[mid]) / 2.0;
}

void bench_one_config(const GeneratedScene& scene, const CodecConfig& config,
                      const std::string& axis, double axis_value, unsigned jobs,
                      BenchResult& out) {
  ReferenceDataset refs;
  for (const PointCloud& c : scene.reference_clouds) refs.add(c.id, c.pose, c);

  const auto t_batch = Clock::now();
  const auto items =
      batch_compress(scene.source_clouds, &refs, &scene.map, config, jobs);
  const double batch_seconds =
      static_cast<double>(elapsed_us(t_batch)) / 1e6;

  std::vector<double> ratios, chamfers, psnrs;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].error.empty())
      throw Error("bench: compression failed for cloud " +
                  std::to_string(scene.source_clouds[i].id) + ": " +
                  items[i].error);
    const CompressedContainer c = parse_container(items[i].container_bytes);
    StageTimings t = items[i].timings;
    const PointCloud recon = decompress(c, &refs, &scene.map, &t);
    const QualityReport report =
        compression_report(scene.source_clouds[i], c, recon, t);
    ratios.push_back(report.compression_ratio);
    chamfers.push_back(report.chamfer_sym);
    if (report.psnr_p2plane) psnrs.push_back(*report.psnr_p2plane);
    out.records.push_back(
        BenchRecord{axis, axis_value, scene.source_clouds[i].id, report});
  }

  BenchAggregate agg;
  agg.axis = axis;
  agg.axis_value = axis_value;
  agg.median_ratio = median(ratios);
  agg.median_chamfer = median(chamfers);
  if (!psnrs.empty()) agg.median_psnr = median(psnrs);
  if (batch_seconds > 0.0)
    agg.clouds_per_second = static_cast<double>(items.size()) / batch_seconds;
  out.aggregates.push_back(agg);
}

}  // namespace refpcc
