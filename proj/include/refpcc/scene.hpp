#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "refpcc/geom.hpp"
#include "refpcc/io.hpp"
#include "refpcc/refstore.hpp"

namespace refpcc {

/// Deterministic synthetic scene: a straight traversal through a static
/// street (ground plane + box buildings) with per-day dynamic boxes, scanned
/// by a simplified spinning LiDAR. Same spec + seed, same bits, every
/// platform: the generator draws from mt19937_64 through fixed-algorithm
/// uniform/normal converters in a fixed order, and coordinates are cast
/// through float32 like real sensor data.
struct SceneSpec {
  std::uint64_t seed = 1;

  // static structure
  double ground_half_width = 40.0;   // meters either side of the road
  int building_count = 12;
  double building_min_size = 4.0;
  double building_max_size = 14.0;
  double building_max_height = 12.0;

  // dynamics (per-day placements from independent streams)
  int dynamic_count = 6;

  // sensor model
  int channels = 64;            // one of {32, 64, 128}
  int points_per_cloud = 8192;  // ray budget at 64 channels; scales with channels
  double range = 80.0;          // meters
  double noise_sigma = 0.0;     // per-axis Gaussian, meters

  // traversal
  int cloud_count = 12;         // poses per day
  double traversal_step = 2.0;  // meters between poses
  double localization_error = 0.0;  // uniform +- on recorded poses, meters

  // map build
  double map_azimuth_factor = 2.0;  // extra azimuth density for the map pass
  double map_dedup_voxel = 0.03;    // meters; 0 disables deduplication

  void validate() const;  // throws ParameterError on invalid ranges
};

struct GeneratedScene {
  std::vector<PointCloud> reference_clouds;  // ids 0..n-1
  std::vector<PointCloud> source_clouds;     // ids 100000..100000+n-1
  std::vector<TrajectoryRecord> reference_trajectory;
  std::vector<TrajectoryRecord> source_trajectory;
  MapCloud map;                              // static-only, noise-free, dense
  std::vector<double> source_dynamic_fraction;  // per source cloud
};

GeneratedScene gen_scene(const SceneSpec& spec);

/// Flat key=value text format, '#' comments. Unknown keys rejected.
SceneSpec parse_scene_spec_text(std::string_view text);
SceneSpec parse_scene_spec(const std::filesystem::path& path);
void write_scene_spec(const SceneSpec& spec, const std::filesystem::path& path);

/// Materializes a scene to disk: map.ply plus reference/ and source/
/// directories each holding cloud files and a trajectory.csv manifest.
void write_scene(const GeneratedScene& scene, const std::filesystem::path& out_dir);

}  // namespace refpcc
