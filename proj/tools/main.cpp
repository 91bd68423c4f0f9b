// Command-line front end: scene generation, batch compression/decompression,
// quality evaluation, and benchmark sweeps.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "refpcc/bench.hpp"
#include "refpcc/codec.hpp"
#include "refpcc/error.hpp"
#include "refpcc/io.hpp"
#include "refpcc/metrics.hpp"
#include "refpcc/refstore.hpp"
#include "refpcc/scene.hpp"

namespace fs = std::filesystem;
using namespace refpcc;

namespace {

constexpr const char* kContainerExt = ".djvw";

std::vector<fs::path> list_files(const fs::path& dir,
                                 const std::vector<std::string>& exts) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (std::find(exts.begin(), exts.end(), ext) != exts.end())
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

GeometryCodec parse_geometry(const std::string& name) {
  if (name == "raw") return GeometryCodec::Raw;
  if (name == "quant16") return GeometryCodec::Quant16;
  throw CLI::ValidationError("--geometry", "must be raw or quant16");
}

StreamCodec parse_stream(const std::string& name) {
  if (name == "stored") return StreamCodec::Stored;
  if (name == "deflate") return StreamCodec::Deflate;
  throw CLI::ValidationError("--stream", "must be stored or deflate");
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) throw IoError("write failed: " + path.string());
}

// ---- gen ----

int run_gen(const std::string& spec_path, const std::string& out_dir) {
  const SceneSpec spec = parse_scene_spec(spec_path);
  const GeneratedScene scene = gen_scene(spec);
  write_scene(scene, out_dir);
  write_scene_spec(spec, fs::path(out_dir) / "scene_spec.txt");
  double dyn_total = 0.0;
  for (double f : scene.source_dynamic_fraction) dyn_total += f;
  const double dyn_mean = scene.source_dynamic_fraction.empty()
                              ? 0.0
                              : dyn_total / scene.source_dynamic_fraction.size();
  std::printf("generated %zu reference + %zu source clouds, map of %zu points\n",
              scene.reference_clouds.size(), scene.source_clouds.size(),
              scene.map.cloud.points.size());
  std::printf("mean dynamic-point fraction: %.1f%%\n", 100.0 * dyn_mean);
  return 0;
}

// ---- compress ----

int run_compress(const std::string& in_dir, const std::string& refset,
                 const std::string& map_path, double d,
                 const std::string& geometry, const std::string& stream,
                 unsigned jobs, const std::string& out_dir,
                 const std::string& traj_override, double max_assoc) {
  CodecConfig config;
  config.threshold = d;
  config.geometry = parse_geometry(geometry);
  config.stream = parse_stream(stream);
  config.max_association_distance = max_assoc;

  std::optional<ReferenceDataset> refs;
  if (!refset.empty()) refs = load_dataset(refset);
  std::optional<MapCloud> map;
  if (!map_path.empty()) map = load_map(map_path);

  // Sources come from a trajectory manifest when one exists (poses drive
  // reference association); otherwise every cloud file in the directory.
  // A file that fails to load fails alone; the rest of the batch proceeds.
  std::vector<PointCloud> sources;
  std::vector<std::string> stems;
  int failures = 0;
  auto try_load = [&](const fs::path& path, const std::string& stem,
                      std::uint32_t id, const Pose* pose) {
    try {
      PointCloud cloud = read_cloud(path);
      cloud.id = id;
      if (pose) cloud.pose = *pose;
      stems.push_back(stem);
      sources.push_back(std::move(cloud));
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "FAIL %s: %s\n", stem.c_str(), e.what());
    }
  };
  fs::path traj = traj_override.empty() ? fs::path(in_dir) / "trajectory.csv"
                                        : fs::path(traj_override);
  if (fs::exists(traj)) {
    for (const TrajectoryRecord& rec : read_trajectory(traj))
      try_load(fs::path(in_dir) / rec.relative_path,
               fs::path(rec.relative_path).stem().string(), rec.id, &rec.pose);
  } else {
    std::uint32_t next_id = 0;
    for (const fs::path& p : list_files(in_dir, {".ply", ".pcd", ".raw"}))
      try_load(p, p.stem().string(), next_id++, nullptr);
  }
  if (sources.empty() && failures == 0) {
    std::fprintf(stderr, "no input clouds found in %s\n", in_dir.c_str());
    return 1;
  }

  fs::create_directories(out_dir);
  const auto items = batch_compress(sources, refs ? &*refs : nullptr,
                                    map ? &*map : nullptr, config, jobs);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].error.empty()) {
      ++failures;
      std::fprintf(stderr, "FAIL %s: %s\n", stems[i].c_str(),
                   items[i].error.c_str());
      continue;
    }
    const fs::path out_path = fs::path(out_dir) / (stems[i] + kContainerExt);
    write_bytes(out_path, items[i].container_bytes);
    std::printf("%s: %zu points -> %zu bytes\n", stems[i].c_str(),
                sources[i].points.size(), items[i].container_bytes.size());
  }
  return failures ? 1 : 0;
}

// ---- decompress ----

int run_decompress(const std::string& in_dir, const std::string& refset,
                   const std::string& map_path, const std::string& out_dir) {
  std::optional<ReferenceDataset> refs;
  if (!refset.empty()) refs = load_dataset(refset);
  std::optional<MapCloud> map;
  if (!map_path.empty()) map = load_map(map_path);

  const auto files = list_files(in_dir, {kContainerExt});
  if (files.empty()) {
    std::fprintf(stderr, "no containers found in %s\n", in_dir.c_str());
    return 1;
  }
  fs::create_directories(out_dir);
  int failures = 0;
  for (const fs::path& p : files) {
    try {
      const auto bytes = read_bytes(p);
      const CompressedContainer c = parse_container(bytes);
      const PointCloud cloud =
          decompress(c, refs ? &*refs : nullptr, map ? &*map : nullptr);
      write_cloud(cloud, fs::path(out_dir) / (p.stem().string() + ".ply"));
      std::printf("%s: %zu points\n", p.stem().string().c_str(),
                  cloud.points.size());
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "FAIL %s: %s\n", p.stem().string().c_str(), e.what());
    }
  }
  return failures ? 1 : 0;
}

// ---- eval ----

int run_eval(const std::string& orig_dir, const std::string& recon_dir,
             const std::string& containers_dir, const std::string& report_path) {
  const auto origs = list_files(orig_dir, {".ply", ".pcd", ".raw"});
  if (origs.empty()) {
    std::fprintf(stderr, "no clouds found in %s\n", orig_dir.c_str());
    return 1;
  }
  std::ofstream report(report_path, std::ios::trunc);
  if (!report) {
    std::fprintf(stderr, "cannot open report file %s\n", report_path.c_str());
    return 1;
  }
  std::printf("%-20s %12s %12s %10s\n", "cloud", "chamfer_sym", "psnr_db", "ratio");
  int failures = 0;
  for (const fs::path& orig_path : origs) {
    const std::string stem = orig_path.stem().string();
    try {
      const fs::path recon_path = fs::path(recon_dir) / (stem + ".ply");
      if (!fs::exists(recon_path))
        throw IoError("missing reconstruction " + recon_path.string());
      const PointCloud orig = read_cloud(orig_path);
      const PointCloud recon = read_cloud(recon_path);
      QualityReport q = quality_only_report(orig, recon);
      if (!containers_dir.empty()) {
        const fs::path cpath = fs::path(containers_dir) / (stem + kContainerExt);
        if (fs::exists(cpath)) {
          q.compressed_bytes = fs::file_size(cpath);
          q.compression_ratio = q.compressed_bytes
                                    ? static_cast<double>(q.raw_bytes) /
                                          static_cast<double>(q.compressed_bytes)
                                    : 0.0;
        }
      }
      RecordFields fields;
      fields.emplace_back("record", "cloud");
      fields.emplace_back("name", stem);
      const RecordFields qf = report_fields(q);
      fields.insert(fields.end(), qf.begin(), qf.end());
      write_record(report, fields);
      std::printf("%-20s %12.6f %12s %10.2f\n", stem.c_str(), q.chamfer_sym,
                  q.psnr_p2plane ? std::to_string(*q.psnr_p2plane).c_str() : "-",
                  q.compression_ratio);
    } catch (const std::exception& e) {
      ++failures;
      std::fprintf(stderr, "FAIL %s: %s\n", stem.c_str(), e.what());
    }
  }
  return failures ? 1 : 0;
}

// ---- bench ----

std::vector<double> parse_sweep(const std::string& spec) {
  // "start:end:step" inclusive of end within half a step
  std::vector<double> out;
  double start = 0, end = 0, step = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &end, &step) != 3 ||
      step <= 0 || end < start)
    throw CLI::ValidationError("--sweep-d", "expected start:end:step");
  for (double v = start; v <= end + step / 2; v += step) out.push_back(v);
  return out;
}

std::vector<double> parse_list(const std::string& csv, const char* flag) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t comma = csv.find(',', pos);
    if (comma == std::string::npos) comma = csv.size();
    try {
      out.push_back(std::stod(csv.substr(pos, comma - pos)));
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected a comma-separated number list");
    }
    pos = comma + 1;
  }
  return out;
}

void emit_bench(const BenchResult& result, std::ostream& report) {
  for (const BenchRecord& rec : result.records) {
    RecordFields fields;
    fields.emplace_back("record", "cloud");
    fields.emplace_back("axis", rec.axis);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", rec.axis_value);
    fields.emplace_back("axis_value", buf);
    fields.emplace_back("cloud_id", std::to_string(rec.cloud_id));
    const RecordFields qf = report_fields(rec.report);
    fields.insert(fields.end(), qf.begin(), qf.end());
    write_record(report, fields);
  }
  for (const BenchAggregate& agg : result.aggregates) {
    RecordFields fields;
    fields.emplace_back("record", "aggregate");
    fields.emplace_back("axis", agg.axis);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", agg.axis_value);
    fields.emplace_back("axis_value", buf);
    std::snprintf(buf, sizeof(buf), "%.12g", agg.median_ratio);
    fields.emplace_back("median_ratio", buf);
    std::snprintf(buf, sizeof(buf), "%.12g", agg.median_chamfer);
    fields.emplace_back("median_chamfer", buf);
    if (agg.median_psnr) {
      std::snprintf(buf, sizeof(buf), "%.12g", *agg.median_psnr);
      fields.emplace_back("median_psnr", buf);
    }
    std::snprintf(buf, sizeof(buf), "%.12g", agg.clouds_per_second);
    fields.emplace_back("compress_clouds_per_second", buf);
    write_record(report, fields);
    std::printf("axis=%s value=%-8g median_ratio=%-10.2f median_chamfer=%-10.5f\n",
                agg.axis.c_str(), agg.axis_value, agg.median_ratio,
                agg.median_chamfer);
  }
}

int run_bench(const std::string& spec_path, const std::string& sweep_d,
              const std::string& sweep_noise, const std::string& sweep_channels,
              bool diff_variants, unsigned jobs, const std::string& report_path) {
  const SceneSpec base = parse_scene_spec(spec_path);
  std::ofstream report(report_path, std::ios::trunc);
  if (!report) {
    std::fprintf(stderr, "cannot open report file %s\n", report_path.c_str());
    return 1;
  }
  BenchResult result;

  CodecConfig config;
  if (!sweep_d.empty()) {
    const GeneratedScene scene = gen_scene(base);  // fixed dataset for the d sweep
    for (double d : parse_sweep(sweep_d)) {
      config.threshold = d;
      bench_one_config(scene, config, "d", d, jobs, result);
    }
  }
  config.threshold = 0.1;
  if (!sweep_noise.empty()) {
    for (double sigma : parse_list(sweep_noise, "--sweep-noise")) {
      SceneSpec spec = base;
      spec.noise_sigma = sigma;
      bench_one_config(gen_scene(spec), config, "noise", sigma, jobs, result);
    }
  }
  if (!sweep_channels.empty()) {
    for (double ch : parse_list(sweep_channels, "--sweep-channels")) {
      SceneSpec spec = base;
      spec.channels = static_cast<int>(ch);
      bench_one_config(gen_scene(spec), config, "channels", ch, jobs, result);
    }
  }
  emit_bench(result, report);

  if (diff_variants) {
    // Source against its same-pose reference: the pairs the codec actually diffs.
    const GeneratedScene scene = gen_scene(base);
    const auto rows = bench_diff_variants(scene.source_clouds,
                                          scene.reference_clouds, config.threshold);
    for (const DiffVariantRow& row : rows) {
      RecordFields fields;
      fields.emplace_back("record", "diff_variant");
      fields.emplace_back("pair", std::to_string(row.pair_index));
      fields.emplace_back("query_points", std::to_string(row.query_points));
      fields.emplace_back("fine_us", std::to_string(row.fine_us));
      fields.emplace_back("coarse_us", std::to_string(row.coarse_us));
      fields.emplace_back("hybrid_us", std::to_string(row.hybrid_us));
      fields.emplace_back("fine_exclusive", std::to_string(row.fine_exclusive));
      fields.emplace_back("coarse_exclusive", std::to_string(row.coarse_exclusive));
      fields.emplace_back("hybrid_exclusive", std::to_string(row.hybrid_exclusive));
      write_record(report, fields);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reference-based LiDAR point-cloud codec"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_spec, gen_out;
  gen->add_option("--spec", gen_spec, "scene spec file (key=value)")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // compress
  auto* comp = app.add_subcommand("compress", "compress a directory of clouds");
  std::string c_in, c_refset, c_map, c_geometry = "quant16", c_stream = "deflate";
  std::string c_out, c_traj;
  double c_d = 0.1, c_max_assoc = 5.0;
  unsigned c_jobs = 1;
  comp->add_option("--in", c_in, "input cloud directory")->required();
  comp->add_option("--refset", c_refset, "reference dataset manifest");
  comp->add_option("--map", c_map, "map cloud file");
  comp->add_option("-d,--threshold", c_d, "distance threshold, meters");
  comp->add_option("--geometry", c_geometry, "raw|quant16");
  comp->add_option("--stream", c_stream, "stored|deflate");
  comp->add_option("--jobs", c_jobs, "worker count");
  comp->add_option("--out", c_out, "output directory")->required();
  comp->add_option("--traj", c_traj, "trajectory manifest (default <in>/trajectory.csv)");
  comp->add_option("--max-assoc", c_max_assoc, "max association distance, meters");

  // decompress
  auto* dec = app.add_subcommand("decompress", "reconstruct containers");
  std::string d_in, d_refset, d_map, d_out;
  dec->add_option("--in", d_in, "container directory")->required();
  dec->add_option("--refset", d_refset, "reference dataset manifest");
  dec->add_option("--map", d_map, "map cloud file");
  dec->add_option("--out", d_out, "output directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "quality metrics for cloud pairs");
  std::string e_orig, e_recon, e_containers, e_report;
  ev->add_option("--orig", e_orig, "original cloud directory")->required();
  ev->add_option("--recon", e_recon, "reconstructed cloud directory")->required();
  ev->add_option("--containers", e_containers, "container directory (for sizes)");
  ev->add_option("--report", e_report, "report file")->required();

  // bench
  auto* be = app.add_subcommand("bench", "benchmark sweeps on a generated scene");
  std::string b_spec, b_sweep_d = "0.1:0.5:0.1", b_noise, b_channels, b_report;
  bool b_variants = false;
  unsigned b_jobs = 1;
  be->add_option("--spec", b_spec, "scene spec file")->required();
  be->add_option("--sweep-d", b_sweep_d, "threshold sweep start:end:step");
  be->add_option("--sweep-noise", b_noise, "noise sigma list, comma separated");
  be->add_option("--sweep-channels", b_channels, "channel count list");
  be->add_flag("--diff-variants", b_variants, "also time fine/coarse/hybrid diffs");
  be->add_option("--jobs", b_jobs, "worker count");
  be->add_option("--report", b_report, "report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(gen_spec, gen_out);
    if (comp->parsed())
      return run_compress(c_in, c_refset, c_map, c_d, c_geometry, c_stream,
                          c_jobs, c_out, c_traj, c_max_assoc);
    if (dec->parsed()) return run_decompress(d_in, d_refset, d_map, d_out);
    if (ev->parsed()) return run_eval(e_orig, e_recon, e_containers, e_report);
    if (be->parsed())
      return run_bench(b_spec, b_sweep_d, b_noise, b_channels, b_variants,
                       b_jobs, b_report);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
