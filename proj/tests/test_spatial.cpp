#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "refpcc/error.hpp"
#include "refpcc/spatial.hpp"
#include "testutil.hpp"

using namespace refpcc;

TEST_CASE("grid_build basics") {
  const Point3 origin{0, 0, 0};
  CHECK(grid_build(PointCloud{}, 0.1, origin).occupied_voxel_count() == 0);

  PointCloud two;
  two.points = {{0.05, 0.05, 0.05}, {0.07, 0.01, 0.02}};
  const OccupancyGrid g = grid_build(two, 0.1, origin);
  CHECK(g.occupied_voxel_count() == 1);
  const auto cell = g.voxel(VoxelKey{0, 0, 0});
  REQUIRE(cell.size() == 2);
  CHECK(cell[0] == 0);
  CHECK(cell[1] == 1);
  CHECK(g.voxel(VoxelKey{5, 5, 5}).empty());

  CHECK_THROWS_AS(grid_build(two, 0.0, origin), ParameterError);
  CHECK_THROWS_AS(grid_build(two, -1.0, origin), ParameterError);
}

TEST_CASE("grid_build indexes every point exactly once") {
  std::mt19937_64 rng(3);
  const PointCloud cloud = testutil::rand_cloud(rng, 1000, 5.0);
  const OccupancyGrid g = grid_build(cloud, 0.1, {-5, -5, -5});
  std::size_t total = 0;
  std::set<std::uint32_t> seen;
  for (std::uint32_t v = 0; v < g.keys().size(); ++v) {
    const auto indices = g.voxel_by_id(v);
    total += indices.size();
    CHECK(std::is_sorted(indices.begin(), indices.end()));
    for (auto i : indices) CHECK(seen.insert(i).second);
    for (auto i : indices)
      CHECK(voxel_key_of(cloud.points[i], g.origin(), g.edge()) == g.keys()[v]);
  }
  CHECK(total == 1000);
  CHECK(g.point_count() == 1000);
}

TEST_CASE("grid_candidates basics") {
  const Point3 origin{0, 0, 0};

  SUBCASE("identical clouds have no candidates") {
    std::mt19937_64 rng(5);
    const PointCloud c = testutil::rand_cloud(rng, 300, 3.0);
    const auto g1 = grid_build(c, 0.05, origin);
    const auto g2 = grid_build(c, 0.05, origin);
    CHECK(grid_candidates(g1, g2).empty());
  }

  SUBCASE("shared voxel suppresses, distant point survives") {
    PointCloud b;
    b.points = {{0, 0, 0}};
    PointCloud a;
    a.points = {{0.01, 0, 0}, {5, 5, 5}};
    const auto ga = grid_build(a, 0.05, origin);
    const auto gb = grid_build(b, 0.05, origin);
    CHECK(grid_candidates(ga, gb) == std::vector<std::uint32_t>{1});
  }

  SUBCASE("mismatched grids rejected") {
    PointCloud c;
    c.points = {{0, 0, 0}};
    const auto g1 = grid_build(c, 0.05, origin);
    const auto g2 = grid_build(c, 0.06, origin);
    CHECK_THROWS_AS(grid_candidates(g1, g2), ParameterError);
    const auto g3 = grid_build(c, 0.05, Point3{1, 0, 0});
    CHECK_THROWS_AS(grid_candidates(g1, g3), ParameterError);
  }
}

TEST_CASE("coarse pass soundness: candidates cover all true exclusives") {
  std::mt19937_64 rng(9);
  for (int iter = 0; iter < 10; ++iter) {
    auto [a, b] = testutil::overlapping_pair(rng, 800, 200, 10.0, 0.05);
    for (double d : {0.05, 0.1, 0.5}) {
      const double edge = d / std::sqrt(3.0) * (1.0 - 1e-9);
      const Point3 origin{-16, -16, -16};
      const auto ga = grid_build(a, edge, origin);
      const auto gb = grid_build(b, edge, origin);
      const auto candidates = grid_candidates(ga, gb);
      const auto exclusives = testutil::oracle_exclusive(a, b, d);
      CHECK(std::includes(candidates.begin(), candidates.end(),
                          exclusives.begin(), exclusives.end()));
    }
  }
}

TEST_CASE("kdtree basics") {
  CHECK_FALSE(KdTree().nearest({9, 9, 9}).has_value());

  KdTree one(std::vector<Point3>{{0, 0, 0}});
  auto nn = one.nearest({9, 9, 9});
  REQUIRE(nn.has_value());
  CHECK(nn->index == 0);

  KdTree two(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}});
  nn = two.nearest({0.6, 0, 0});
  REQUIRE(nn.has_value());
  CHECK(nn->index == 1);
  CHECK(nn->squared_dist == doctest::Approx(0.16).epsilon(1e-14));

  // exact tie: lower index wins
  nn = two.nearest({0.5, 0, 0});
  REQUIRE(nn.has_value());
  CHECK(nn->index == 0);
  CHECK(nn->squared_dist == 0.25);
}

TEST_CASE("kdtree ties always break to the lowest index") {
  // Clouds full of duplicate coordinates.
  std::mt19937_64 rng(13);
  std::vector<Point3> pts;
  for (int i = 0; i < 50; ++i) {
    const Point3 p = testutil::rand_point(rng, 1.0);
    pts.push_back(p);
    pts.push_back(p);
    pts.push_back(p);
  }
  KdTree tree(pts);
  for (int q = 0; q < 200; ++q) {
    const Point3 query = testutil::rand_point(rng, 1.2);
    const auto got = tree.nearest(query);
    const auto want = testutil::linear_nearest(pts, query);
    REQUIRE(got.has_value());
    CHECK(got->index == want->index);
    CHECK(got->squared_dist == want->squared_dist);
  }
}

TEST_CASE("kdtree matches the linear-scan oracle") {
  std::mt19937_64 rng(21);
  const PointCloud cloud = testutil::rand_cloud(rng, 5000, 20.0);
  const KdTree tree = kdtree_build(cloud);
  REQUIRE(tree.size() == 5000);
  for (int q = 0; q < 1000; ++q) {
    const Point3 query = testutil::rand_point(rng, 25.0);
    const auto got = tree.nearest(query);
    const auto want = testutil::linear_nearest(cloud.points, query);
    REQUIRE(got.has_value());
    CHECK(got->index == want->index);
    CHECK(got->squared_dist == want->squared_dist);
  }
}

TEST_CASE("kdtree build is deterministic") {
  std::mt19937_64 rng(23);
  const PointCloud cloud = testutil::rand_cloud(rng, 700, 4.0);
  const KdTree t1 = kdtree_build(cloud);
  const KdTree t2 = kdtree_build(cloud);
  for (int q = 0; q < 100; ++q) {
    const Point3 query = testutil::rand_point(rng, 5.0);
    const auto a = t1.nearest(query);
    const auto b = t2.nearest(query);
    CHECK(a->index == b->index);
    CHECK(a->squared_dist == b->squared_dist);
  }
}

TEST_CASE("kdtree knn matches sorted linear scan") {
  std::mt19937_64 rng(29);
  const PointCloud cloud = testutil::rand_cloud(rng, 400, 3.0);
  const KdTree tree = kdtree_build(cloud);
  for (int q = 0; q < 50; ++q) {
    const Point3 query = testutil::rand_point(rng, 3.5);
    const auto got = tree.knn(query, 12);
    REQUIRE(got.size() == 12);
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t i = 0; i < cloud.points.size(); ++i)
      all.emplace_back(squared_distance(query, cloud.points[i]), i);
    std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].index == all[k].second);
      CHECK(got[k].squared_dist == all[k].first);
    }
  }
}
