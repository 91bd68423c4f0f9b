#include "refpcc/codec.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "refpcc/error.hpp"

namespace refpcc {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_us(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - since)
          .count());
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint32_t>(in[at]) |
         static_cast<std::uint32_t>(in[at + 1]) << 8 |
         static_cast<std::uint32_t>(in[at + 2]) << 16 |
         static_cast<std::uint32_t>(in[at + 3]) << 24;
}

float get_f32(std::span<const std::uint8_t> in, std::size_t at) {
  return std::bit_cast<float>(get_u32(in, at));
}

std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<std::uint16_t>(in[at]) |
                                    static_cast<std::uint16_t>(in[at + 1]) << 8);
}

// Round toward -inf / +inf when narrowing to float so the frame still
// contains the value it was computed from.
float f32_floor(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) > v)
    f = std::nextafterf(f, -std::numeric_limits<float>::infinity());
  return f;
}

float f32_ceil(double v) {
  float f = static_cast<float>(v);
  if (static_cast<double>(f) < v)
    f = std::nextafterf(f, std::numeric_limits<float>::infinity());
  return f;
}

constexpr std::uint32_t kLatticeMax = 65535;

std::size_t record_size(GeometryCodec codec) {
  return codec == GeometryCodec::Raw ? 12 : 6;
}

}  // namespace

// ---------------------------------------------------------------------------
// Delta coding
// ---------------------------------------------------------------------------

DeltaStream delta_encode(std::span<const std::uint32_t> ascending) {
  DeltaStream stream;
  if (ascending.empty()) return stream;
  for (std::size_t i = 1; i < ascending.size(); ++i)
    if (ascending[i] <= ascending[i - 1])
      throw ParameterError("delta_encode: input must be strictly increasing");
  // Descending order: largest index first, then positive gaps.
  stream.first = ascending.back();
  stream.deltas.reserve(ascending.size() - 1);
  for (std::size_t i = ascending.size() - 1; i-- > 0;)
    stream.deltas.push_back(ascending[i + 1] - ascending[i]);
  return stream;
}

std::vector<std::uint32_t> delta_decode(const DeltaStream& stream) {
  std::vector<std::uint32_t> descending;
  if (!stream.first) {
    if (!stream.deltas.empty())
      throw CorruptionError("delta_decode: deltas without a first value");
    return descending;
  }
  descending.reserve(stream.deltas.size() + 1);
  std::uint32_t cur = *stream.first;
  descending.push_back(cur);
  for (std::uint32_t delta : stream.deltas) {
    if (delta == 0)
      throw CorruptionError("delta_decode: zero delta (duplicate index)");
    if (delta > cur)
      throw CorruptionError("delta_decode: delta underflows below zero");
    cur -= delta;
    descending.push_back(cur);
  }
  std::reverse(descending.begin(), descending.end());
  return descending;
}

// ---------------------------------------------------------------------------
// Geometry coder
// ---------------------------------------------------------------------------

Aabb quantization_frame(std::span<const Point3> points) {
  const Aabb box = bounding_box(points);
  if (box.is_empty()) return box;
  Aabb out;
  out.min = {f32_floor(box.min.x), f32_floor(box.min.y), f32_floor(box.min.z)};
  out.max = {f32_ceil(box.max.x), f32_ceil(box.max.y), f32_ceil(box.max.z)};
  return out;
}

double geometry_error_bound(GeometryCodec codec, const Aabb& frame) {
  if (codec == GeometryCodec::Raw || frame.is_empty()) return 0.0;
  return frame.diagonal() / kLatticeMax / 2.0;
}

std::vector<std::uint8_t> geometry_encode(std::span<const Point3> points,
                                          GeometryCodec codec, const Aabb& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(points.size() * record_size(codec));
  switch (codec) {
    case GeometryCodec::Raw:
      for (const Point3& p : points) {
        put_f32(out, static_cast<float>(p.x));
        put_f32(out, static_cast<float>(p.y));
        put_f32(out, static_cast<float>(p.z));
      }
      return out;
    case GeometryCodec::Quant16: {
      if (!points.empty() && frame.is_empty())
        throw ParameterError("geometry_encode: empty frame with points");
      const Point3 ext = frame.extent();
      auto quantize = [](double v, double lo, double extent) -> std::uint16_t {
        if (extent <= 0.0) return 0;  // degenerate axis: lattice 0
        const double t = (v - lo) / extent * kLatticeMax;
        const double r = std::round(t);
        return static_cast<std::uint16_t>(
            std::min<double>(std::max(r, 0.0), kLatticeMax));
      };
      for (const Point3& p : points) {
        if (!frame.contains(p))
          throw ParameterError("geometry_encode: point outside frame");
        put_u16(out, quantize(p.x, frame.min.x, ext.x));
        put_u16(out, quantize(p.y, frame.min.y, ext.y));
        put_u16(out, quantize(p.z, frame.min.z, ext.z));
      }
      return out;
    }
  }
  throw ParameterError("geometry_encode: unknown codec id");
}

std::vector<Point3> geometry_decode(std::span<const std::uint8_t> blob,
                                    GeometryCodec codec, const Aabb& frame,
                                    std::uint32_t count) {
  if (codec != GeometryCodec::Raw && codec != GeometryCodec::Quant16)
    throw CorruptionError("geometry_decode: unknown codec id");
  if (blob.size() != static_cast<std::uint64_t>(count) * record_size(codec))
    throw CorruptionError("geometry_decode: blob length does not match count");
  std::vector<Point3> out;
  out.reserve(count);
  if (codec == GeometryCodec::Raw) {
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t at = static_cast<std::size_t>(i) * 12;
      out.push_back(Point3{static_cast<double>(get_f32(blob, at)),
                           static_cast<double>(get_f32(blob, at + 4)),
                           static_cast<double>(get_f32(blob, at + 8))});
    }
    return out;
  }
  if (count > 0 && frame.is_empty())
    throw CorruptionError("geometry_decode: empty frame with nonzero count");
  const Point3 ext = frame.extent();
  auto dequantize = [](std::uint16_t v, double lo, double extent) {
    if (extent <= 0.0) return lo;
    return lo + static_cast<double>(v) * extent / kLatticeMax;
  };
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = static_cast<std::size_t>(i) * 6;
    out.push_back(Point3{dequantize(get_u16(blob, at), frame.min.x, ext.x),
                         dequantize(get_u16(blob, at + 2), frame.min.y, ext.y),
                         dequantize(get_u16(blob, at + 4), frame.min.z, ext.z)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Byte-stream coder (Stored / raw DEFLATE via zlib)
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> stream_compress(std::span<const std::uint8_t> bytes,
                                          StreamCodec codec) {
  if (codec == StreamCodec::Stored)
    return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  if (codec != StreamCodec::Deflate)
    throw ParameterError("stream_compress: unknown codec id");

  z_stream zs{};
  if (deflateInit2(&zs, 9, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("deflateInit2 failed");
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[16384];
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = deflate(&zs, Z_FINISH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      deflateEnd(&zs);
      throw Error("deflate failed");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
  } while (rc != Z_STREAM_END);
  deflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> stream_decompress(std::span<const std::uint8_t> bytes,
                                            StreamCodec codec,
                                            std::uint64_t expected_len) {
  if (codec == StreamCodec::Stored) {
    if (bytes.size() != expected_len)
      throw CorruptionError("stream_decompress: stored length mismatch");
    return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
  }
  if (codec != StreamCodec::Deflate)
    throw CorruptionError("stream_decompress: unknown codec id");

  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw Error("inflateInit2 failed");
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[16384];
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  do {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END && rc != Z_BUF_ERROR) {
      inflateEnd(&zs);
      throw CorruptionError("stream_decompress: malformed DEFLATE stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (out.size() > expected_len) {
      // Inflated incrementally with a hard cap so a corrupt (huge) declared
      // count can never force a matching allocation.
      inflateEnd(&zs);
      throw CorruptionError("stream_decompress: output exceeds expected length");
    }
    if (rc == Z_BUF_ERROR && zs.avail_out != 0) break;  // input exhausted early
  } while (rc != Z_STREAM_END);
  const bool complete = (rc == Z_STREAM_END);
  const bool trailing = (zs.avail_in != 0);
  inflateEnd(&zs);
  if (!complete || trailing || out.size() != expected_len)
    throw CorruptionError("stream_decompress: decompressed length mismatch");
  return out;
}

// ---------------------------------------------------------------------------
// Container serialization
// ---------------------------------------------------------------------------

Aabb ContainerHeader::frame_box() const {
  if (n_source_exclusive == 0 && frame[0] == 0 && frame[3] == 0 && frame[1] == 0 &&
      frame[4] == 0 && frame[2] == 0 && frame[5] == 0)
    return Aabb::empty();
  Aabb box;
  box.min = {frame[0], frame[1], frame[2]};
  box.max = {frame[3], frame[4], frame[5]};
  return box;
}

std::vector<std::uint8_t> serialize(const CompressedContainer& c) {
  const ContainerHeader& h = c.header;
  std::vector<std::uint8_t> out;
  out.reserve(c.serialized_size());
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  put_u8(out, h.version);
  put_u8(out, h.flags);
  put_f32(out, h.threshold);
  put_u32(out, h.source_id);
  put_u32(out, h.reference_id);
  put_u32(out, h.map_id);
  put_u8(out, static_cast<std::uint8_t>(h.geometry_codec));
  put_u8(out, static_cast<std::uint8_t>(h.stream_codec));
  if (h.geometry_codec == GeometryCodec::Quant16)
    for (float f : h.frame) put_f32(out, f);
  put_u32(out, h.n_source_exclusive);
  put_u32(out, h.n_ref_exclusive);
  put_u32(out, h.n_map_common);
  put_u32(out, h.geometry_len);
  put_u32(out, h.index_len);
  out.insert(out.end(), c.geometry_blob.begin(), c.geometry_blob.end());
  out.insert(out.end(), c.index_blob.begin(), c.index_blob.end());
  return out;
}

CompressedContainer parse_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 44) throw CorruptionError("container truncated");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0)
    throw CorruptionError("bad container magic");
  CompressedContainer c;
  ContainerHeader& h = c.header;
  h.version = bytes[4];
  if (h.version != kContainerVersion)
    throw CorruptionError("unsupported container version " +
                          std::to_string(h.version));
  h.flags = bytes[5];
  if (h.flags & ~(kFlagHasReference | kFlagHasMap))
    throw CorruptionError("unknown container flags");
  h.threshold = get_f32(bytes, 6);
  h.source_id = get_u32(bytes, 10);
  h.reference_id = get_u32(bytes, 14);
  h.map_id = get_u32(bytes, 18);
  const std::uint8_t geom_id = bytes[22];
  const std::uint8_t stream_id = bytes[23];
  if (geom_id > 1) throw CorruptionError("unknown geometry codec id");
  if (stream_id > 1) throw CorruptionError("unknown stream codec id");
  h.geometry_codec = static_cast<GeometryCodec>(geom_id);
  h.stream_codec = static_cast<StreamCodec>(stream_id);
  std::size_t at = 24;
  if (h.geometry_codec == GeometryCodec::Quant16) {
    if (bytes.size() < 68) throw CorruptionError("container truncated");
    for (int i = 0; i < 6; ++i, at += 4) h.frame[i] = get_f32(bytes, at);
  }
  h.n_source_exclusive = get_u32(bytes, at);
  h.n_ref_exclusive = get_u32(bytes, at + 4);
  h.n_map_common = get_u32(bytes, at + 8);
  h.geometry_len = get_u32(bytes, at + 12);
  h.index_len = get_u32(bytes, at + 16);
  at += 20;
  const std::uint64_t total = static_cast<std::uint64_t>(at) + h.geometry_len +
                              static_cast<std::uint64_t>(h.index_len);
  if (total != bytes.size())
    throw CorruptionError("container size does not match declared blob lengths");
  c.geometry_blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at),
                         bytes.begin() + static_cast<std::ptrdiff_t>(at + h.geometry_len));
  c.index_blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(at + h.geometry_len),
                      bytes.end());
  return c;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

void put_stream_words(std::vector<std::uint8_t>& out, const DeltaStream& s) {
  if (!s.first) return;
  put_u32(out, *s.first);
  for (std::uint32_t d : s.deltas) put_u32(out, d);
}

DeltaStream take_stream_words(std::span<const std::uint8_t> payload,
                              std::size_t& word, std::uint32_t count) {
  DeltaStream s;
  if (count == 0) return s;
  s.first = get_u32(payload, word * 4);
  ++word;
  s.deltas.reserve(count - 1);
  for (std::uint32_t i = 1; i < count; ++i, ++word)
    s.deltas.push_back(get_u32(payload, word * 4));
  return s;
}

}  // namespace

CompressedContainer encode_container(const CascadedDiff& cd, GeometryCodec geometry,
                                     StreamCodec stream) {
  CompressedContainer c;
  ContainerHeader& h = c.header;
  h.threshold = static_cast<float>(cd.threshold);
  h.source_id = cd.source_id;
  h.geometry_codec = geometry;
  h.stream_codec = stream;
  if (cd.ref_id) {
    h.flags |= kFlagHasReference;
    h.reference_id = *cd.ref_id;
  }
  if (cd.map_id) {
    h.flags |= kFlagHasMap;
    h.map_id = *cd.map_id;
  }
  if (cd.source_exclusive.size() > std::numeric_limits<std::uint32_t>::max() ||
      cd.ref_exclusive.size() > std::numeric_limits<std::uint32_t>::max() ||
      cd.map_common.size() > std::numeric_limits<std::uint32_t>::max())
    throw ParameterError("encode_container: set size exceeds 32 bits");
  h.n_source_exclusive = static_cast<std::uint32_t>(cd.source_exclusive.size());
  h.n_ref_exclusive = static_cast<std::uint32_t>(cd.ref_exclusive.size());
  h.n_map_common = static_cast<std::uint32_t>(cd.map_common.size());

  Aabb frame;
  if (geometry == GeometryCodec::Quant16) {
    frame = quantization_frame(cd.source_exclusive);
    if (!frame.is_empty()) {
      h.frame[0] = static_cast<float>(frame.min.x);
      h.frame[1] = static_cast<float>(frame.min.y);
      h.frame[2] = static_cast<float>(frame.min.z);
      h.frame[3] = static_cast<float>(frame.max.x);
      h.frame[4] = static_cast<float>(frame.max.y);
      h.frame[5] = static_cast<float>(frame.max.z);
    }
  }
  c.geometry_blob = geometry_encode(cd.source_exclusive, geometry, frame);

  std::vector<std::uint8_t> index_payload;
  index_payload.reserve(4 * (cd.ref_exclusive.size() + cd.map_common.size()));
  put_stream_words(index_payload, delta_encode(cd.ref_exclusive));
  put_stream_words(index_payload, delta_encode(cd.map_common));
  c.index_blob = stream_compress(index_payload, stream);

  if (c.geometry_blob.size() > std::numeric_limits<std::uint32_t>::max() ||
      c.index_blob.size() > std::numeric_limits<std::uint32_t>::max())
    throw ParameterError("encode_container: blob exceeds 32-bit length");
  h.geometry_len = static_cast<std::uint32_t>(c.geometry_blob.size());
  h.index_len = static_cast<std::uint32_t>(c.index_blob.size());
  return c;
}

CascadedDiff decode_container(const CompressedContainer& c) {
  const ContainerHeader& h = c.header;
  if (c.geometry_blob.size() != h.geometry_len || c.index_blob.size() != h.index_len)
    throw CorruptionError("container blob lengths disagree with header");
  if (!h.has_reference() && h.n_ref_exclusive != 0)
    throw CorruptionError("reference indices present without a reference flag");
  if (!h.has_map() && h.n_map_common != 0)
    throw CorruptionError("map indices present without a map flag");

  CascadedDiff cd;
  cd.source_id = h.source_id;
  cd.source_pose = Pose::identity();
  cd.threshold = static_cast<double>(h.threshold);
  if (h.has_reference()) cd.ref_id = h.reference_id;
  if (h.has_map()) cd.map_id = h.map_id;

  const std::uint64_t expected_words =
      static_cast<std::uint64_t>(h.n_ref_exclusive) + h.n_map_common;
  const std::vector<std::uint8_t> payload =
      stream_decompress(c.index_blob, h.stream_codec, expected_words * 4);
  std::size_t word = 0;
  cd.ref_exclusive = delta_decode(take_stream_words(payload, word, h.n_ref_exclusive));
  cd.map_common = delta_decode(take_stream_words(payload, word, h.n_map_common));

  cd.source_exclusive = geometry_decode(c.geometry_blob, h.geometry_codec,
                                        h.frame_box(), h.n_source_exclusive);
  return cd;
}

CompressedContainer compress(const PointCloud& source, const ReferenceDataset* refs,
                             const MapCloud* map, const CodecConfig& config,
                             StageTimings* timings) {
  if (config.threshold < 0.0 || !std::isfinite(config.threshold))
    throw ParameterError("compress: threshold must be finite and >= 0");
  if (config.max_association_distance < 0.0)
    throw ParameterError("compress: max_association_distance must be >= 0");
  StageTimings local;

  std::shared_ptr<const PointCloud> reference;
  if (refs && !source.points.empty()) {
    const auto t0 = Clock::now();
    const auto ref_id =
        associate(source.pose, *refs, config.max_association_distance);
    if (ref_id) reference = refs->cloud(*ref_id);
    local.associate_us = elapsed_us(t0);
  }

  const MapCloud* usable_map = (map && !source.points.empty()) ? map : nullptr;
  CascadeTimings cascade;
  CascadedDiff cd = cascaded_diff(source, reference.get(),
                                  usable_map ? &usable_map->cloud : nullptr,
                                  usable_map ? &usable_map->tree : nullptr,
                                  config.threshold, &cascade);

  const auto t2 = Clock::now();
  CompressedContainer c = encode_container(cd, config.geometry, config.stream);
  local.encode_us = elapsed_us(t2);

  if (timings) {
    timings->associate_us = local.associate_us;
    timings->ref_diff_us = cascade.ref_diff_us;
    timings->map_diff_us = cascade.map_diff_us;
    timings->encode_us = local.encode_us;
  }
  return c;
}

PointCloud decompress(const CompressedContainer& container,
                      const ReferenceDataset* refs, const MapCloud* map,
                      StageTimings* timings) {
  const auto t0 = Clock::now();
  CascadedDiff cd = decode_container(container);
  const std::uint64_t decode_us = elapsed_us(t0);

  std::shared_ptr<const PointCloud> reference;
  if (cd.ref_id) {
    if (!refs)
      throw MismatchError("decompress: container needs reference dataset");
    reference = refs->cloud(*cd.ref_id);  // MismatchError when id unknown
  }
  if (cd.map_id && !map)
    throw MismatchError("decompress: container needs the map");

  const auto t1 = Clock::now();
  PointCloud out = reconstruct(cd, reference.get(), map ? &map->cloud : nullptr);
  if (timings) {
    timings->decode_us = decode_us;
    timings->reconstruct_us = elapsed_us(t1);
  }
  return out;
}

}  // namespace refpcc
