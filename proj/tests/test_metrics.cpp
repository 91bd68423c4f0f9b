#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "refpcc/error.hpp"
#include "refpcc/metrics.hpp"
#include "testutil.hpp"

using namespace refpcc;

namespace {

// z = 0 grid, nx*ny points spaced `step` apart
PointCloud plane_grid(int nx, int ny, double step, double z = 0.0) {
  PointCloud c;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      c.points.push_back({i * step, j * step, z});
  return c;
}

}  // namespace

TEST_CASE("chamfer worked values") {
  PointCloud p, q;
  p.points = {{0, 0, 0}};
  q.points = {{0, 0, 0.4}};
  CHECK(chamfer(p, q) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(chamfer(p, p) == 0.0);
  CHECK_THROWS_AS(chamfer(p, PointCloud{}), ParameterError);
  CHECK_THROWS_AS(chamfer(PointCloud{}, q), ParameterError);
}

TEST_CASE("chamfer matches the quadratic oracle") {
  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 5; ++iter) {
    const PointCloud p = testutil::rand_cloud(rng, 2000, 10.0);
    const PointCloud q = testutil::rand_cloud(rng, 2000, 10.0);
    double sum = 0.0;
    for (const auto& a : p.points)
      sum += std::sqrt(testutil::linear_nearest(q.points, a)->squared_dist);
    const double want = sum / static_cast<double>(p.points.size());
    CHECK(chamfer(p, q) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("chamfer_sym is symmetric and averages the two directions") {
  std::mt19937_64 rng(5);
  const PointCloud p = testutil::rand_cloud(rng, 500, 5.0);
  const PointCloud q = testutil::rand_cloud(rng, 700, 5.0);
  CHECK(chamfer_sym(p, q) == chamfer_sym(q, p));
  CHECK(chamfer_sym(p, q) ==
        doctest::Approx((chamfer(p, q) + chamfer(q, p)) / 2.0).epsilon(1e-12));

  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{0, 0, 0.4}, {0, 0, -0.4}};
  CHECK(chamfer_sym(a, b) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("chamfer is zero only for coincident point sets") {
  std::mt19937_64 rng(7);
  PointCloud p = testutil::rand_cloud(rng, 100, 5.0);
  CHECK(chamfer_sym(p, p) == 0.0);
  PointCloud q = p;
  q.points[50].z += 0.001;
  CHECK(chamfer_sym(p, q) > 0.0);
}

TEST_CASE("point-to-plane PSNR on the planar fixture") {
  const PointCloud plane = plane_grid(20, 20, 0.5);

  SUBCASE("identical clouds hit the cap") {
    const auto psnr = psnr_point_to_plane(plane, plane);
    REQUIRE(psnr.has_value());
    CHECK(*psnr == kPsnrCapDb);
  }

  SUBCASE("in-plane displacement is invisible") {
    PointCloud shifted = plane;
    for (auto& p : shifted.points) p.x += 0.01;
    const auto psnr = psnr_point_to_plane(plane, shifted);
    REQUIRE(psnr.has_value());
    CHECK(*psnr == kPsnrCapDb);
  }

  SUBCASE("out-of-plane lift has a closed form") {
    PointCloud lifted = plane;
    for (auto& p : lifted.points) p.z += 0.01;
    const auto psnr = psnr_point_to_plane(plane, lifted);
    REQUIRE(psnr.has_value());
    const double diag = bounding_box(plane).diagonal();
    const double want = 10.0 * std::log10(diag * diag / 1e-4);
    CHECK(*psnr == doctest::Approx(want).epsilon(1e-9));
  }

  SUBCASE("PSNR decreases as out-of-plane noise grows") {
    std::mt19937_64 rng(9);
    double prev = kPsnrCapDb + 1;
    for (double amp : {0.001, 0.01, 0.05, 0.2}) {
      PointCloud noisy = plane;
      for (auto& p : noisy.points)
        p.z += testutil::uniform(rng, 0.5 * amp, amp);  // strictly out of plane
      const auto psnr = psnr_point_to_plane(plane, noisy);
      REQUIRE(psnr.has_value());
      CHECK(*psnr < prev);
      prev = *psnr;
    }
  }

  SUBCASE("too-small clouds are rejected") {
    PointCloud tiny;
    for (int i = 0; i < 12; ++i) tiny.points.push_back({double(i), 0, 0});
    CHECK_THROWS_AS(psnr_point_to_plane(tiny, tiny), ParameterError);
  }
}

TEST_CASE("compression_report assembles the fields") {
  std::mt19937_64 rng(11);
  const PointCloud source = testutil::rand_cloud(rng, 1000, 10.0);
  CompressedContainer container;
  container.geometry_blob.resize(100);
  container.index_blob.resize(56);
  StageTimings t;
  t.encode_us = 42;
  const QualityReport r = compression_report(source, container, source, t);
  CHECK(r.raw_bytes == 12000);
  CHECK(r.compressed_bytes == container.serialized_size());
  CHECK(r.compression_ratio ==
        doctest::Approx(12000.0 / container.serialized_size()));
  CHECK(r.chamfer_sym == 0.0);
  CHECK(r.timings.encode_us == 42);

  std::ostringstream out;
  RecordFields fields;
  fields.emplace_back("record", "cloud");
  const auto rf = report_fields(r);
  fields.insert(fields.end(), rf.begin(), rf.end());
  write_record(out, fields);
  const std::string text = out.str();
  CHECK(text.find("record=cloud\n") != std::string::npos);
  CHECK(text.find("raw_bytes=12000\n") != std::string::npos);
  CHECK(text.find("chamfer_sym=0\n") != std::string::npos);
  CHECK(text.back() == '\n');
}
