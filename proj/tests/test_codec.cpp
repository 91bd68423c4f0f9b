#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "refpcc/codec.hpp"
#include "refpcc/error.hpp"
#include "refpcc/metrics.hpp"
#include "testutil.hpp"

using namespace refpcc;

TEST_CASE("delta coding worked example and edges") {
  const std::vector<std::uint32_t> input = {3, 17, 42};
  const DeltaStream s = delta_encode(input);
  REQUIRE(s.first.has_value());
  CHECK(*s.first == 42);
  CHECK(s.deltas == std::vector<std::uint32_t>{25, 14});
  CHECK(delta_decode(s) == input);

  CHECK(delta_encode({}).count() == 0);
  CHECK(delta_decode(DeltaStream{}).empty());

  const DeltaStream single = delta_encode(std::vector<std::uint32_t>{7});
  REQUIRE(single.first.has_value());
  CHECK(*single.first == 7);
  CHECK(single.deltas.empty());
  CHECK(delta_decode(single) == std::vector<std::uint32_t>{7});
}

TEST_CASE("delta coding rejects bad input") {
  CHECK_THROWS_AS(delta_encode(std::vector<std::uint32_t>{3, 3}), ParameterError);
  CHECK_THROWS_AS(delta_encode(std::vector<std::uint32_t>{5, 4}), ParameterError);

  DeltaStream corrupt;
  corrupt.first = 5;
  corrupt.deltas = {6};  // would underflow below zero
  CHECK_THROWS_AS(delta_decode(corrupt), CorruptionError);
  corrupt.deltas = {0};  // duplicate index
  CHECK_THROWS_AS(delta_decode(corrupt), CorruptionError);
}

TEST_CASE("delta coding round-trips random index sets") {
  std::mt19937_64 rng(51);
  for (int iter = 0; iter < 2000; ++iter) {
    std::set<std::uint32_t> set;
    const int n = static_cast<int>(testutil::uniform(rng, 0, 40));
    for (int i = 0; i < n; ++i)
      set.insert(static_cast<std::uint32_t>(rng() & 0xFFFFFFFFu));
    if (iter % 7 == 0) set.insert(0xFFFFFFFFu);
    const std::vector<std::uint32_t> input(set.begin(), set.end());
    CHECK(delta_decode(delta_encode(input)) == input);
  }
}

TEST_CASE("raw geometry coding is bit-exact at 32-bit precision") {
  std::mt19937_64 rng(53);
  const PointCloud cloud = testutil::rand_cloud(rng, 500, 100.0);
  const auto blob = geometry_encode(cloud.points, GeometryCodec::Raw, Aabb::empty());
  CHECK(blob.size() == 500 * 12);
  const auto decoded = geometry_decode(blob, GeometryCodec::Raw, Aabb::empty(), 500);
  CHECK(decoded == cloud.points);
  CHECK(geometry_error_bound(GeometryCodec::Raw, Aabb::empty()) == 0.0);
}

TEST_CASE("quant16 geometry coding stays within its declared bound") {
  std::mt19937_64 rng(59);
  std::vector<Point3> pts;
  for (int i = 0; i < 1000; ++i) pts.push_back(testutil::rand_point(rng, 50.0));
  const Aabb frame = quantization_frame(pts);
  const double bound = geometry_error_bound(GeometryCodec::Quant16, frame);
  CHECK(bound <= 100.0 * std::sqrt(3.0) / 65535 / 2 * 1.001);  // ~1.4 mm in a 100 m cube

  const auto blob = geometry_encode(pts, GeometryCodec::Quant16, frame);
  CHECK(blob.size() == pts.size() * 6);
  const auto decoded =
      geometry_decode(blob, GeometryCodec::Quant16, frame,
                      static_cast<std::uint32_t>(pts.size()));
  double worst = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    worst = std::max(worst, std::sqrt(squared_distance(pts[i], decoded[i])));
  CHECK(worst <= bound);
}

TEST_CASE("quant16 handles degenerate and empty frames") {
  SUBCASE("planar points: zero-extent axis decodes to the axis value") {
    std::vector<Point3> pts = {{0, 0, 2.5}, {1, 0.5, 2.5}, {3, 4, 2.5}};
    const Aabb frame = quantization_frame(pts);
    const auto blob = geometry_encode(pts, GeometryCodec::Quant16, frame);
    const auto decoded = geometry_decode(blob, GeometryCodec::Quant16, frame, 3);
    for (const auto& p : decoded) CHECK(p.z == 2.5);
  }

  SUBCASE("empty input") {
    const auto blob = geometry_encode({}, GeometryCodec::Quant16, Aabb::empty());
    CHECK(blob.empty());
    CHECK(geometry_decode(blob, GeometryCodec::Quant16, Aabb::empty(), 0).empty());
  }

  SUBCASE("point outside the frame is rejected") {
    Aabb frame;
    frame.extend({0, 0, 0});
    frame.extend({1, 1, 1});
    std::vector<Point3> pts = {{2, 0, 0}};
    CHECK_THROWS_AS(geometry_encode(pts, GeometryCodec::Quant16, frame),
                    ParameterError);
  }

  SUBCASE("length mismatch is corruption") {
    std::vector<std::uint8_t> blob(13, 0);
    CHECK_THROWS_AS(geometry_decode(blob, GeometryCodec::Raw, Aabb::empty(), 1),
                    CorruptionError);
  }
}

TEST_CASE("stream coding") {
  SUBCASE("stored is the identity") {
    const std::vector<std::uint8_t> payload = {'a', 'b', 'c'};
    CHECK(stream_compress(payload, StreamCodec::Stored) == payload);
    CHECK(stream_decompress(payload, StreamCodec::Stored, 3) == payload);
    CHECK_THROWS_AS(stream_decompress(payload, StreamCodec::Stored, 4),
                    CorruptionError);
  }

  SUBCASE("deflate squeezes zeros and round-trips") {
    const std::vector<std::uint8_t> zeros(1000000, 0);
    const auto packed = stream_compress(zeros, StreamCodec::Deflate);
    CHECK(packed.size() < 10000);
    CHECK(stream_decompress(packed, StreamCodec::Deflate, zeros.size()) == zeros);
  }

  SUBCASE("deflate round-trips random payloads") {
    std::mt19937_64 rng(61);
    std::vector<std::uint8_t> payload(10000);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
    const auto packed = stream_compress(payload, StreamCodec::Deflate);
    CHECK(stream_decompress(packed, StreamCodec::Deflate, payload.size()) == payload);
  }

  SUBCASE("malformed deflate stream is corruption") {
    const std::vector<std::uint8_t> garbage = {0xFF, 0xFF, 0xFF, 0xFF, 0x00};
    CHECK_THROWS_AS(stream_decompress(garbage, StreamCodec::Deflate, 100),
                    CorruptionError);
  }

  SUBCASE("wrong expected length is corruption") {
    const std::vector<std::uint8_t> payload = {1, 2, 3, 4};
    const auto packed = stream_compress(payload, StreamCodec::Deflate);
    CHECK_THROWS_AS(stream_decompress(packed, StreamCodec::Deflate, 3),
                    CorruptionError);
    CHECK_THROWS_AS(stream_decompress(packed, StreamCodec::Deflate, 5),
                    CorruptionError);
  }
}

namespace {

CompressedContainer make_test_container(std::mt19937_64& rng, GeometryCodec geom,
                                        StreamCodec stream) {
  CascadedDiff cd;
  cd.source_id = 42;
  cd.threshold = 0.1;
  cd.ref_id = 7;
  cd.map_id = 0xDEADBEEF;
  for (int i = 0; i < 50; ++i) cd.source_exclusive.push_back(testutil::rand_point(rng, 30.0));
  std::set<std::uint32_t> refs, maps;
  for (int i = 0; i < 40; ++i) refs.insert(static_cast<std::uint32_t>(rng() % 100000));
  for (int i = 0; i < 30; ++i) maps.insert(static_cast<std::uint32_t>(rng() % 5000000));
  cd.ref_exclusive.assign(refs.begin(), refs.end());
  cd.map_common.assign(maps.begin(), maps.end());
  return encode_container(cd, geom, stream);
}

}  // namespace

TEST_CASE("container serialization round-trips bit-exactly") {
  std::mt19937_64 rng(67);
  for (GeometryCodec geom : {GeometryCodec::Raw, GeometryCodec::Quant16}) {
    for (StreamCodec stream : {StreamCodec::Stored, StreamCodec::Deflate}) {
      const CompressedContainer c = make_test_container(rng, geom, stream);
      const auto bytes = serialize(c);
      CHECK(bytes.size() == c.serialized_size());
      CHECK(bytes.size() == c.header.serialized_size() + c.header.geometry_len +
                                c.header.index_len);
      const CompressedContainer parsed = parse_container(bytes);
      CHECK(parsed == c);
      CHECK(serialize(parsed) == bytes);
    }
  }
}

TEST_CASE("container decode recovers the cascaded diff") {
  std::mt19937_64 rng(71);
  CascadedDiff cd;
  cd.source_id = 9;
  cd.threshold = 0.25;
  cd.ref_id = 3;
  for (int i = 0; i < 20; ++i) cd.source_exclusive.push_back(testutil::rand_point(rng, 5.0));
  cd.ref_exclusive = {1, 5, 9, 100};

  const CompressedContainer c =
      encode_container(cd, GeometryCodec::Raw, StreamCodec::Deflate);
  const CascadedDiff back = decode_container(c);
  CHECK(back.source_id == 9);
  CHECK(back.threshold == doctest::Approx(0.25));
  REQUIRE(back.ref_id.has_value());
  CHECK(*back.ref_id == 3);
  CHECK_FALSE(back.map_id.has_value());
  CHECK(back.ref_exclusive == cd.ref_exclusive);
  CHECK(back.map_common.empty());
  CHECK(back.source_exclusive == cd.source_exclusive);  // Raw: bit-exact
}

TEST_CASE("container parse rejects structural corruption") {
  std::mt19937_64 rng(73);
  const CompressedContainer c =
      make_test_container(rng, GeometryCodec::Quant16, StreamCodec::Deflate);
  auto bytes = serialize(c);

  SUBCASE("bad magic") {
    bytes[0] ^= 0xFF;
    CHECK_THROWS_AS(parse_container(bytes), CorruptionError);
  }
  SUBCASE("bad version") {
    bytes[4] = 9;
    CHECK_THROWS_AS(parse_container(bytes), CorruptionError);
  }
  SUBCASE("unknown codec ids") {
    bytes[22] = 7;
    CHECK_THROWS_AS(parse_container(bytes), CorruptionError);
  }
  SUBCASE("truncation") {
    bytes.pop_back();
    CHECK_THROWS_AS(parse_container(bytes), CorruptionError);
  }
  SUBCASE("trailing garbage") {
    bytes.push_back(0);
    CHECK_THROWS_AS(parse_container(bytes), CorruptionError);
  }
}

TEST_CASE("compress/decompress pipeline") {
  std::mt19937_64 rng(79);

  SUBCASE("self compression yields an all-reference container") {
    const PointCloud c = testutil::rand_cloud(rng, 2000, 20.0, 11);
    ReferenceDataset refs;
    refs.add(11, c.pose, c);
    CodecConfig config;  // d = 0.1, quant16 + deflate
    const CompressedContainer out = compress(c, &refs, nullptr, config);
    CHECK(out.header.n_source_exclusive == 0);
    CHECK(out.header.n_ref_exclusive == 0);
    CHECK(out.header.n_map_common == 0);
    CHECK(out.serialized_size() <= out.header.serialized_size() + 64);
    const PointCloud back = decompress(out, &refs, nullptr);
    CHECK(back.points == c.points);
  }

  SUBCASE("lossless wrapper mode is bitwise") {
    const PointCloud c = testutil::rand_cloud(rng, 1500, 100.0, 3);
    CodecConfig config;
    config.geometry = GeometryCodec::Raw;
    config.stream = StreamCodec::Stored;
    const CompressedContainer out = compress(c, nullptr, nullptr, config);
    CHECK_FALSE(out.header.has_reference());
    CHECK_FALSE(out.header.has_map());
    const PointCloud back = decompress(out, nullptr, nullptr);
    CHECK(back.points == c.points);
    CHECK(back.id == 3);
  }

  SUBCASE("empty source compresses to an empty container") {
    PointCloud empty;
    empty.id = 12;
    ReferenceDataset refs;
    refs.add(1, Pose{}, testutil::rand_cloud(rng, 100, 5.0, 1));
    const CompressedContainer out = compress(empty, &refs, nullptr, CodecConfig{});
    CHECK(out.header.n_source_exclusive == 0);
    CHECK_FALSE(out.header.has_reference());
    const PointCloud back = decompress(out, &refs, nullptr);
    CHECK(back.points.empty());
    CHECK(back.id == 12);
  }

  SUBCASE("far-away reference falls back to no-reference mode") {
    PointCloud c = testutil::rand_cloud(rng, 300, 5.0, 2);
    c.pose.position = {1000, 0, 0};
    ReferenceDataset refs;
    refs.add(1, Pose{}, testutil::rand_cloud(rng, 300, 5.0, 1));
    CodecConfig config;
    config.max_association_distance = 5.0;
    const CompressedContainer out = compress(c, &refs, nullptr, config);
    CHECK_FALSE(out.header.has_reference());
  }

  SUBCASE("bigger threshold never grows the container") {
    auto [source, ref] = testutil::overlapping_pair(rng, 3000, 600, 25.0, 0.08);
    source.id = 1;
    ref.id = 2;
    ReferenceDataset refs;
    refs.add(2, ref.pose, ref);
    CodecConfig config;
    config.threshold = 0.1;
    const auto small_d = compress(source, &refs, nullptr, config);
    config.threshold = 0.5;
    const auto big_d = compress(source, &refs, nullptr, config);
    CHECK(big_d.serialized_size() <= small_d.serialized_size());
  }

  SUBCASE("decompress error paths are distinct") {
    const PointCloud c = testutil::rand_cloud(rng, 200, 5.0, 21);
    ReferenceDataset refs;
    refs.add(21, c.pose, c);
    PointCloud map_base = testutil::rand_cloud(rng, 400, 5.0);
    MapCloud map = make_map(map_base);
    CodecConfig config;
    const CompressedContainer out = compress(c, &refs, &map, config);
    REQUIRE(out.header.has_reference());
    REQUIRE(out.header.has_map());

    // reference dataset without the id
    ReferenceDataset other;
    other.add(99, c.pose, c);
    CHECK_THROWS_AS(decompress(out, &other, &map), MismatchError);
    CHECK_THROWS_AS(decompress(out, nullptr, &map), MismatchError);

    // wrong map content
    PointCloud other_base = testutil::rand_cloud(rng, 400, 5.0);
    MapCloud other_map = make_map(other_base);
    CHECK_THROWS_AS(decompress(out, &refs, &other_map), MismatchError);
    CHECK_THROWS_AS(decompress(out, &refs, nullptr), MismatchError);
  }
}

TEST_CASE("end-to-end chamfer bound on random scenes") {
  std::mt19937_64 rng(83);
  for (int iter = 0; iter < 10; ++iter) {
    auto [source, ref] = testutil::overlapping_pair(rng, 1200, 300, 15.0, 0.05);
    source.id = 1;
    ref.id = 2;
    ReferenceDataset refs;
    refs.add(2, ref.pose, ref);
    PointCloud map_base = testutil::rand_cloud(rng, 5000, 15.0);
    MapCloud map = make_map(map_base);
    CodecConfig config;
    config.threshold = 0.1;
    const CompressedContainer out = compress(source, &refs, &map, config);
    const double q =
        geometry_error_bound(out.header.geometry_codec, out.header.frame_box());
    const PointCloud back = decompress(out, &refs, &map);
    REQUIRE_FALSE(back.points.empty());
    CHECK(chamfer_sym(source, back) <= config.threshold + q);
  }
}
