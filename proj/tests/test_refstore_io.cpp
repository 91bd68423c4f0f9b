#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "refpcc/error.hpp"
#include "refpcc/io.hpp"
#include "refpcc/refstore.hpp"
#include "testutil.hpp"

using namespace refpcc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("refpcc_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::trunc);
  f << text;
}

}  // namespace

TEST_CASE("PLY write/read round-trip preserves order and bits") {
  TempDir tmp;
  std::mt19937_64 rng(3);
  const PointCloud cloud = testutil::rand_cloud(rng, 777, 200.0);
  const fs::path p = tmp.path / "cloud.ply";
  write_cloud(cloud, p, CloudFormat::PlyBinaryLE);
  const PointCloud back = read_cloud(p);
  CHECK(back.points == cloud.points);
}

TEST_CASE("minimal one-point binary PLY") {
  TempDir tmp;
  PointCloud one;
  one.points = {{1.5, -2.25, 0.125}};
  const fs::path p = tmp.path / "one.ply";
  write_cloud(one, p);
  const PointCloud back = read_cloud(p);
  REQUIRE(back.points.size() == 1);
  CHECK(back.points[0] == Point3{1.5, -2.25, 0.125});
}

TEST_CASE("empty cloud writes a valid zero-count file in all formats") {
  TempDir tmp;
  for (auto [fmt, name] : {std::pair{CloudFormat::PlyBinaryLE, "e.ply"},
                           std::pair{CloudFormat::PcdBinary, "e.pcd"},
                           std::pair{CloudFormat::Raw, "e.raw"}}) {
    const fs::path p = tmp.path / name;
    write_cloud(PointCloud{}, p, fmt);
    CHECK(read_cloud(p).points.empty());
  }
}

TEST_CASE("truncated PLY payload is an error, not a partial cloud") {
  TempDir tmp;
  std::mt19937_64 rng(5);
  const PointCloud cloud = testutil::rand_cloud(rng, 10, 5.0);
  const fs::path p = tmp.path / "t.ply";
  write_cloud(cloud, p);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 5);
  CHECK_THROWS_AS(read_cloud(p), IoError);
}

TEST_CASE("ASCII PLY reads, extra properties are skipped") {
  TempDir tmp;
  const fs::path p = tmp.path / "a.ply";
  write_text(p,
             "ply\nformat ascii 1.0\ncomment test\n"
             "element vertex 2\n"
             "property float x\nproperty float y\nproperty float z\n"
             "property float intensity\n"
             "end_header\n"
             "1 2 3 0.5\n"
             "4 5 6 0.25\n");
  const PointCloud c = read_cloud(p);
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[0] == Point3{1, 2, 3});
  CHECK(c.points[1] == Point3{4, 5, 6});
}

TEST_CASE("PLY with absurd declared count is rejected before allocation") {
  TempDir tmp;
  const fs::path p = tmp.path / "big.ply";
  write_text(p,
             "ply\nformat binary_little_endian 1.0\n"
             "element vertex 4294967296\n"
             "property float x\nproperty float y\nproperty float z\n"
             "end_header\n");
  CHECK_THROWS_AS(read_cloud(p), IoError);
}

TEST_CASE("non-finite coordinates are rejected at load") {
  TempDir tmp;
  const fs::path p = tmp.path / "nan.ply";
  std::string data =
      "ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  data += std::string("\x00\x00\xc0\x7f", 4);  // NaN
  data += std::string("\x00\x00\x00\x00", 4);
  data += std::string("\x00\x00\x00\x00", 4);
  std::ofstream(p, std::ios::binary) << data;
  CHECK_THROWS_AS(read_cloud(p), IoError);
}

TEST_CASE("PCD and raw round-trips") {
  TempDir tmp;
  std::mt19937_64 rng(7);
  const PointCloud cloud = testutil::rand_cloud(rng, 321, 50.0);
  for (auto [fmt, name] : {std::pair{CloudFormat::PcdBinary, "c.pcd"},
                           std::pair{CloudFormat::Raw, "c.raw"}}) {
    const fs::path p = tmp.path / name;
    write_cloud(cloud, p, fmt);
    CHECK(read_cloud(p).points == cloud.points);
  }
}

TEST_CASE("unknown format is an error") {
  TempDir tmp;
  const fs::path p = tmp.path / "x.xyz";
  write_text(p, "0 0 0\n");
  CHECK_THROWS_AS(read_cloud(p), IoError);
}

TEST_CASE("trajectory manifest parsing") {
  TempDir tmp;
  const fs::path p = tmp.path / "traj.csv";

  SUBCASE("empty file yields no records") {
    write_text(p, "# just a comment\n\n");
    CHECK(read_trajectory(p).empty());
  }

  SUBCASE("one well-formed line") {
    write_text(p, "3,1000,1.5,2.5,3.5,0,0,0,1,cloud3.ply\n");
    const auto recs = read_trajectory(p);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].id == 3);
    CHECK(recs[0].pose.timestamp_us == 1000);
    CHECK(recs[0].pose.position == Point3{1.5, 2.5, 3.5});
    CHECK(recs[0].relative_path == "cloud3.ply");
  }

  SUBCASE("non-unit quaternion rejected with line number") {
    write_text(p, "1,0,0,0,0,0,0,0,1,a.ply\n2,0,0,0,0,0,0,0,1.01,b.ply\n");
    try {
      read_trajectory(p);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("duplicate ids rejected") {
    write_text(p, "1,0,0,0,0,0,0,0,1,a.ply\n1,0,1,1,1,0,0,0,1,b.ply\n");
    CHECK_THROWS_AS(read_trajectory(p), IoError);
  }

  SUBCASE("field count errors carry line numbers") {
    write_text(p, "1,0,0,0,0,0,0,0,1\n");
    CHECK_THROWS_AS(read_trajectory(p), IoError);
  }

  SUBCASE("write/read round-trip") {
    std::vector<TrajectoryRecord> recs;
    for (std::uint32_t i = 0; i < 5; ++i) {
      TrajectoryRecord r;
      r.id = i;
      r.pose.position = {i * 1.25, -0.5 * i, 0.125};
      r.pose.timestamp_us = i * 100000;
      r.relative_path = "cloud_" + std::to_string(i) + ".ply";
      recs.push_back(r);
    }
    write_trajectory(p, recs);
    const auto back = read_trajectory(p);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(back[i].id == recs[i].id);
      CHECK(back[i].pose.position == recs[i].pose.position);
      CHECK(back[i].relative_path == recs[i].relative_path);
    }
  }
}

TEST_CASE("associate picks the nearest entry") {
  SUBCASE("empty dataset") {
    CHECK_FALSE(associate(Pose{}, ReferenceDataset{}, 10.0).has_value());
  }

  SUBCASE("nearer of two entries wins") {
    ReferenceDataset ds;
    Pose near, far;
    near.position = {0.05, 0, 0};
    far.position = {2, 0, 0};
    ds.add(10, far, PointCloud{});
    ds.add(20, near, PointCloud{});
    const auto got = associate(Pose{}, ds, 5.0);
    REQUIRE(got.has_value());
    CHECK(*got == 20);
  }

  SUBCASE("beyond max_dist means none") {
    ReferenceDataset ds;
    Pose far;
    far.position = {10, 0, 0};
    ds.add(1, far, PointCloud{});
    CHECK_FALSE(associate(Pose{}, ds, 5.0).has_value());
    CHECK(associate(Pose{}, ds, 10.0).has_value());  // boundary passes
  }

  SUBCASE("equidistant entries tie to the lowest id") {
    ReferenceDataset ds;
    Pose left, right;
    left.position = {-1, 0, 0};
    right.position = {1, 0, 0};
    ds.add(5, right, PointCloud{});
    ds.add(2, left, PointCloud{});
    const auto got = associate(Pose{}, ds, 5.0);
    REQUIRE(got.has_value());
    CHECK(*got == 2);
  }

  SUBCASE("argmin matches a linear scan and ignores entry order") {
    std::mt19937_64 rng(11);
    std::vector<std::pair<std::uint32_t, Pose>> entries;
    for (std::uint32_t i = 0; i < 1000; ++i) {
      Pose p;
      p.position = testutil::rand_point(rng, 100.0);
      entries.emplace_back(i, p);
    }
    ReferenceDataset forward, backward;
    for (const auto& [id, pose] : entries) forward.add(id, pose, PointCloud{});
    for (auto it = entries.rbegin(); it != entries.rend(); ++it)
      backward.add(it->first, it->second, PointCloud{});
    for (int q = 0; q < 50; ++q) {
      Pose query;
      query.position = testutil::rand_point(rng, 100.0);
      double best = 1e300;
      std::uint32_t want = 0;
      for (const auto& [id, pose] : entries) {
        const double d2 = squared_distance(query.position, pose.position);
        if (d2 < best) {
          best = d2;
          want = id;
        }
      }
      const auto a = associate(query, forward, 1000.0);
      const auto b = associate(query, backward, 1000.0);
      REQUIRE(a.has_value());
      CHECK(*a == want);
      CHECK(*b == want);
    }
  }
}

TEST_CASE("dataset loading and lazy cloud access") {
  TempDir tmp;
  std::mt19937_64 rng(13);

  SUBCASE("manifest with zero entries loads an empty dataset") {
    write_text(tmp.path / "m.csv", "# empty\n");
    CHECK(load_dataset(tmp.path / "m.csv").empty());
  }

  SUBCASE("clouds load lazily by id with the manifest pose attached") {
    const PointCloud c0 = testutil::rand_cloud(rng, 50, 5.0);
    const PointCloud c1 = testutil::rand_cloud(rng, 60, 5.0);
    write_cloud(c0, tmp.path / "c0.ply");
    write_cloud(c1, tmp.path / "c1.ply");
    write_text(tmp.path / "m.csv",
               "0,0,0,0,0,0,0,0,1,c0.ply\n"
               "1,0,5,0,0,0,0,0,1,c1.ply\n");
    const ReferenceDataset ds = load_dataset(tmp.path / "m.csv");
    CHECK(ds.size() == 2);
    const auto got = ds.cloud(1);
    CHECK(got->points == c1.points);
    CHECK(got->id == 1);
    CHECK(got->pose.position == Point3{5, 0, 0});
    CHECK(ds.cloud(1).get() == got.get());  // cached
    CHECK_THROWS_AS(ds.cloud(99), MismatchError);
  }

  SUBCASE("duplicate ids in a dataset are rejected") {
    ReferenceDataset ds;
    ds.add(1, Pose{}, PointCloud{});
    CHECK_THROWS_AS(ds.add(1, Pose{}, PointCloud{}), ParameterError);
  }
}

TEST_CASE("map loading builds the index over every point") {
  TempDir tmp;
  std::mt19937_64 rng(17);
  const PointCloud big = testutil::rand_cloud(rng, 50000, 100.0);
  write_cloud(big, tmp.path / "map.ply");
  const MapCloud map = load_map(tmp.path / "map.ply");
  CHECK(map.tree.size() == 50000);
  CHECK(map.cloud.points.size() == 50000);
  CHECK(map.id == map_fingerprint(map.cloud));
  CHECK(map.id != 0);
}
