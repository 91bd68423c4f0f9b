#include "refpcc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_set>

#include "refpcc/error.hpp"
#include "refpcc/spatial.hpp"

namespace refpcc {

namespace {

// Fixed-algorithm draws on top of mt19937_64 (the engine itself is
// bit-specified by the standard; the distributions in <random> are not).
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller; one pair per call, second value discarded (fixed draw order).
double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  // splitmix64 over (seed, purpose) so streams are independent.
  std::uint64_t v = seed + 0x9e3779b97f4a7c15ULL * (purpose + 1);
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ULL;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
  return std::mt19937_64(v ^ (v >> 31));
}

struct Box {
  Point3 min, max;
  bool dynamic = false;
};

// Slab-method ray/box intersection; returns entry distance if hit in (0, tmax].
bool ray_box(const Point3& o, const Point3& dir, const Box& b, double tmax,
             double& t_hit) {
  double t0 = 0.0, t1 = tmax;
  const double od[3] = {o.x, o.y, o.z};
  const double dd[3] = {dir.x, dir.y, dir.z};
  const double lo[3] = {b.min.x, b.min.y, b.min.z};
  const double hi[3] = {b.max.x, b.max.y, b.max.z};
  for (int a = 0; a < 3; ++a) {
    if (dd[a] == 0.0) {
      if (od[a] < lo[a] || od[a] > hi[a]) return false;
      continue;
    }
    const double inv = 1.0 / dd[a];
    double ta = (lo[a] - od[a]) * inv;
    double tb = (hi[a] - od[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t0 <= 0.0) return false;  // sensor inside the box; ignore
  t_hit = t0;
  return true;
}

struct World {
  std::vector<Box> boxes;  // buildings + this day's dynamics
  double ground_x_min = 0, ground_x_max = 0, ground_half_width = 0;

  // Nearest hit along the ray within range; true when something was hit.
  bool cast(const Point3& o, const Point3& dir, double range, Point3& hit,
            bool& hit_dynamic) const {
    double best = range;
    bool found = false;
    hit_dynamic = false;
    if (dir.z < 0.0) {
      const double t = -o.z / dir.z;
      if (t > 0.0 && t <= best) {
        const double gx = o.x + t * dir.x;
        const double gy = o.y + t * dir.y;
        if (gx >= ground_x_min && gx <= ground_x_max &&
            std::abs(gy) <= ground_half_width) {
          best = t;
          found = true;
        }
      }
    }
    for (const Box& b : boxes) {
      double t = 0.0;
      if (ray_box(o, dir, b, best, t)) {
        best = t;
        found = true;
        hit_dynamic = b.dynamic;
      }
    }
    if (!found) return false;
    hit = {o.x + best * dir.x, o.y + best * dir.y, o.z + best * dir.z};
    return true;
  }
};

constexpr double kSensorHeight = 1.8;
constexpr double kRoadHalfWidth = 6.0;
constexpr double kElevationSpanDeg = 45.0;  // +-22.5 like a wide spinning unit

std::vector<Box> make_buildings(const SceneSpec& spec, double road_len,
                                std::mt19937_64& rng) {
  std::vector<Box> out;
  for (int i = 0; i < spec.building_count; ++i) {
    const double cx = uniform(rng, -10.0, road_len + 10.0);
    const double side = (i % 2 == 0) ? 1.0 : -1.0;
    const double gap = uniform(rng, 2.0, 8.0);
    const double sx = uniform(rng, spec.building_min_size, spec.building_max_size);
    const double sy = uniform(rng, spec.building_min_size, spec.building_max_size);
    const double h = uniform(rng, 3.0, spec.building_max_height);
    const double cy = side * (kRoadHalfWidth + gap + sy / 2.0);
    Box b;
    b.min = {cx - sx / 2.0, cy - sy / 2.0, 0.0};
    b.max = {cx + sx / 2.0, cy + sy / 2.0, h};
    out.push_back(b);
  }
  return out;
}

std::vector<Box> make_dynamics(const SceneSpec& spec, double road_len,
                               std::mt19937_64& rng) {
  // Traffic occupies a window extending past the traversal, so the dynamic
  // share of a scan stays in a realistic band instead of piling every object
  // next to the sensor.
  std::vector<Box> out;
  for (int i = 0; i < spec.dynamic_count; ++i) {
    const double cx = uniform(rng, -25.0, road_len + 25.0);
    const double cy = uniform(rng, -kRoadHalfWidth + 1.5, kRoadHalfWidth - 1.5);
    Box b;
    b.dynamic = true;
    b.min = {cx - 2.25, cy - 0.95, 0.0};
    b.max = {cx + 2.25, cy + 0.95, 1.6};
    out.push_back(b);
  }
  return out;
}

float as_f32(double v) { return static_cast<float>(v); }

// One spin of the sensor. Noise drawn per returned point in a fixed order,
// then coordinates narrowed to float32 and widened back.
PointCloud scan(const World& world, const Point3& sensor, int channels,
                int azimuth_steps, double range, double sigma,
                std::mt19937_64& noise_rng, double* dynamic_fraction) {
  PointCloud cloud;
  std::size_t dynamic_hits = 0;
  for (int ch = 0; ch < channels; ++ch) {
    const double elev_deg = -kElevationSpanDeg / 2.0 +
                            kElevationSpanDeg * ch /
                                std::max(1, channels - 1);
    const double elev = elev_deg * std::numbers::pi / 180.0;
    const double ce = std::cos(elev), se = std::sin(elev);
    for (int az = 0; az < azimuth_steps; ++az) {
      const double a = 2.0 * std::numbers::pi * az / azimuth_steps;
      const Point3 dir{ce * std::cos(a), ce * std::sin(a), se};
      Point3 hit;
      bool dyn = false;
      if (!world.cast(sensor, dir, range, hit, dyn)) continue;
      if (sigma > 0.0) {
        hit.x += sigma * gaussian(noise_rng);
        hit.y += sigma * gaussian(noise_rng);
        hit.z += sigma * gaussian(noise_rng);
      }
      cloud.points.push_back(Point3{static_cast<double>(as_f32(hit.x)),
                                    static_cast<double>(as_f32(hit.y)),
                                    static_cast<double>(as_f32(hit.z))});
      if (dyn) ++dynamic_hits;
    }
  }
  if (dynamic_fraction)
    *dynamic_fraction = cloud.points.empty()
                            ? 0.0
                            : static_cast<double>(dynamic_hits) /
                                  static_cast<double>(cloud.points.size());
  return cloud;
}

PointCloud dedup_voxels(const PointCloud& in, double voxel) {
  if (voxel <= 0.0) return in;
  PointCloud out;
  std::unordered_set<VoxelKey, VoxelKeyHash> seen;
  const Point3 origin{0.0, 0.0, 0.0};
  for (const Point3& p : in.points)
    if (seen.insert(voxel_key_of(p, origin, voxel)).second) out.points.push_back(p);
  return out;
}

}  // namespace

void SceneSpec::validate() const {
  if (channels != 32 && channels != 64 && channels != 128)
    throw ParameterError("scene: channels must be one of 32, 64, 128");
  if (points_per_cloud < 64)
    throw ParameterError("scene: points_per_cloud must be >= 64");
  if (cloud_count < 1) throw ParameterError("scene: cloud_count must be >= 1");
  if (!(range > 0.0)) throw ParameterError("scene: range must be positive");
  if (noise_sigma < 0.0 || noise_sigma > 10.0)
    throw ParameterError("scene: noise_sigma out of range [0, 10]");
  if (localization_error < 0.0)
    throw ParameterError("scene: localization_error must be >= 0");
  if (building_count < 0 || dynamic_count < 0)
    throw ParameterError("scene: object counts must be >= 0");
  if (!(building_min_size > 0.0) || building_max_size < building_min_size)
    throw ParameterError("scene: bad building size range");
  if (!(traversal_step > 0.0))
    throw ParameterError("scene: traversal_step must be positive");
  if (ground_half_width <= 0.0)
    throw ParameterError("scene: ground_half_width must be positive");
  if (map_azimuth_factor < 1.0)
    throw ParameterError("scene: map_azimuth_factor must be >= 1");
  if (map_dedup_voxel < 0.0)
    throw ParameterError("scene: map_dedup_voxel must be >= 0");
}

GeneratedScene gen_scene(const SceneSpec& spec) {
  spec.validate();
  const double road_len = spec.traversal_step * (spec.cloud_count - 1);
  const int azimuth_steps = std::max(8, spec.points_per_cloud / 64);
  const int map_azimuth =
      static_cast<int>(azimuth_steps * spec.map_azimuth_factor);

  auto static_rng = stream(spec.seed, 0);
  auto dyn_ref_rng = stream(spec.seed, 1);
  auto dyn_src_rng = stream(spec.seed, 2);
  auto noise_ref_rng = stream(spec.seed, 3);
  auto noise_src_rng = stream(spec.seed, 4);
  auto locerr_rng = stream(spec.seed, 5);

  const std::vector<Box> buildings = make_buildings(spec, road_len, static_rng);

  World ref_world, src_world, static_world;
  static_world.boxes = buildings;
  static_world.ground_x_min = -20.0;
  static_world.ground_x_max = road_len + 20.0;
  static_world.ground_half_width = spec.ground_half_width;
  ref_world = static_world;
  src_world = static_world;
  {
    auto dyn = make_dynamics(spec, road_len, dyn_ref_rng);
    ref_world.boxes.insert(ref_world.boxes.end(), dyn.begin(), dyn.end());
    dyn = make_dynamics(spec, road_len, dyn_src_rng);
    src_world.boxes.insert(src_world.boxes.end(), dyn.begin(), dyn.end());
  }

  GeneratedScene scene;
  PointCloud map_accum;
  for (int i = 0; i < spec.cloud_count; ++i) {
    const Point3 sensor{spec.traversal_step * i, 0.0, kSensorHeight};
    Pose pose;
    pose.position = sensor;
    pose.timestamp_us = static_cast<std::int64_t>(i) * 100000;

    PointCloud ref = scan(ref_world, sensor, spec.channels, azimuth_steps,
                          spec.range, spec.noise_sigma, noise_ref_rng, nullptr);
    ref.id = static_cast<std::uint32_t>(i);
    ref.pose = pose;

    double dyn_frac = 0.0;
    PointCloud src = scan(src_world, sensor, spec.channels, azimuth_steps,
                          spec.range, spec.noise_sigma, noise_src_rng, &dyn_frac);
    src.id = static_cast<std::uint32_t>(100000 + i);
    src.pose = pose;

    // Map pass: static only, noise-free, denser azimuth sampling.
    PointCloud map_part = scan(static_world, sensor, spec.channels, map_azimuth,
                               spec.range, 0.0, noise_ref_rng, nullptr);
    map_accum.points.insert(map_accum.points.end(), map_part.points.begin(),
                            map_part.points.end());

    // Recorded (not geometric) pose error; drawn even when zero so the
    // stream layout does not depend on the knob.
    auto jitter = [&](const Pose& p) {
      Pose j = p;
      j.position.x += uniform(locerr_rng, -spec.localization_error,
                              spec.localization_error);
      j.position.y += uniform(locerr_rng, -spec.localization_error,
                              spec.localization_error);
      j.position.z += uniform(locerr_rng, -spec.localization_error,
                              spec.localization_error);
      return j;
    };
    const Pose ref_rec = jitter(pose);
    const Pose src_rec = jitter(pose);

    char name[32];
    std::snprintf(name, sizeof(name), "cloud_%06d.ply", i);
    scene.reference_trajectory.push_back(TrajectoryRecord{ref.id, ref_rec, name});
    scene.source_trajectory.push_back(TrajectoryRecord{src.id, src_rec, name});
    // Association reads recorded poses; keep the cloud's own pose in sync.
    ref.pose = ref_rec;
    src.pose = src_rec;

    scene.reference_clouds.push_back(std::move(ref));
    scene.source_clouds.push_back(std::move(src));
    scene.source_dynamic_fraction.push_back(dyn_frac);
  }

  scene.map = make_map(dedup_voxels(map_accum, spec.map_dedup_voxel));
  return scene;
}

SceneSpec parse_scene_spec_text(std::string_view text) {
  SceneSpec spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view sv(line);
    while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
    if (sv.empty() || sv.front() == '#') continue;
    const std::size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ParameterError("scene spec line " + std::to_string(lineno) +
                           ": expected key=value");
    const std::string key(sv.substr(0, eq));
    const std::string value(sv.substr(eq + 1));
    try {
      if (key == "seed") spec.seed = std::stoull(value);
      else if (key == "ground_half_width") spec.ground_half_width = std::stod(value);
      else if (key == "building_count") spec.building_count = std::stoi(value);
      else if (key == "building_min_size") spec.building_min_size = std::stod(value);
      else if (key == "building_max_size") spec.building_max_size = std::stod(value);
      else if (key == "building_max_height") spec.building_max_height = std::stod(value);
      else if (key == "dynamic_count") spec.dynamic_count = std::stoi(value);
      else if (key == "channels") spec.channels = std::stoi(value);
      else if (key == "points_per_cloud") spec.points_per_cloud = std::stoi(value);
      else if (key == "range") spec.range = std::stod(value);
      else if (key == "noise_sigma") spec.noise_sigma = std::stod(value);
      else if (key == "cloud_count") spec.cloud_count = std::stoi(value);
      else if (key == "traversal_step") spec.traversal_step = std::stod(value);
      else if (key == "localization_error") spec.localization_error = std::stod(value);
      else if (key == "map_azimuth_factor") spec.map_azimuth_factor = std::stod(value);
      else if (key == "map_dedup_voxel") spec.map_dedup_voxel = std::stod(value);
      else
        throw ParameterError("scene spec line " + std::to_string(lineno) +
                             ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ParameterError("scene spec line " + std::to_string(lineno) +
                           ": bad value '" + value + "'");
    } catch (const std::out_of_range&) {
      throw ParameterError("scene spec line " + std::to_string(lineno) +
                           ": value out of range '" + value + "'");
    }
  }
  spec.validate();
  return spec;
}

SceneSpec parse_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene_spec_text(buf.str());
}

void write_scene_spec(const SceneSpec& spec, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.precision(17);
  f << "seed=" << spec.seed << '\n'
    << "ground_half_width=" << spec.ground_half_width << '\n'
    << "building_count=" << spec.building_count << '\n'
    << "building_min_size=" << spec.building_min_size << '\n'
    << "building_max_size=" << spec.building_max_size << '\n'
    << "building_max_height=" << spec.building_max_height << '\n'
    << "dynamic_count=" << spec.dynamic_count << '\n'
    << "channels=" << spec.channels << '\n'
    << "points_per_cloud=" << spec.points_per_cloud << '\n'
    << "range=" << spec.range << '\n'
    << "noise_sigma=" << spec.noise_sigma << '\n'
    << "cloud_count=" << spec.cloud_count << '\n'
    << "traversal_step=" << spec.traversal_step << '\n'
    << "localization_error=" << spec.localization_error << '\n'
    << "map_azimuth_factor=" << spec.map_azimuth_factor << '\n'
    << "map_dedup_voxel=" << spec.map_dedup_voxel << '\n';
  if (!f.good()) throw IoError("write failed: " + path.string());
}

void write_scene(const GeneratedScene& scene, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "reference");
  fs::create_directories(out_dir / "source");
  write_cloud(scene.map.cloud, out_dir / "map.ply");
  for (std::size_t i = 0; i < scene.reference_clouds.size(); ++i)
    write_cloud(scene.reference_clouds[i],
                out_dir / "reference" / scene.reference_trajectory[i].relative_path);
  for (std::size_t i = 0; i < scene.source_clouds.size(); ++i)
    write_cloud(scene.source_clouds[i],
                out_dir / "source" / scene.source_trajectory[i].relative_path);
  write_trajectory(out_dir / "reference" / "trajectory.csv",
                   scene.reference_trajectory);
  write_trajectory(out_dir / "source" / "trajectory.csv", scene.source_trajectory);
}

}  // namespace refpcc
