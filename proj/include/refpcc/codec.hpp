#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "refpcc/diff.hpp"
#include "refpcc/geom.hpp"
#include "refpcc/refstore.hpp"

namespace refpcc {

// ---------------------------------------------------------------------------
// Delta coding of index streams
// ---------------------------------------------------------------------------

/// Delta-coded index set: the maximum index first, then successive gaps of
/// the descending order (gap_k = i_{k-1} - i_k), so every stored value after
/// the first is a small positive difference.
struct DeltaStream {
  std::optional<std::uint32_t> first;
  std::vector<std::uint32_t> deltas;

  std::size_t count() const { return first ? deltas.size() + 1 : 0; }
};

/// Input must be strictly increasing (deduplicated); ParameterError otherwise.
DeltaStream delta_encode(std::span<const std::uint32_t> ascending);

/// Exact inverse of delta_encode. A delta of zero or one that would underflow
/// below zero is a CorruptionError.
std::vector<std::uint32_t> delta_decode(const DeltaStream& stream);

// ---------------------------------------------------------------------------
// Geometry coder
// ---------------------------------------------------------------------------

enum class GeometryCodec : std::uint8_t {
  Raw = 0,      // three float32 LE per point; bit-exact at 32-bit precision
  Quant16 = 1,  // uniform 16-bit-per-axis lattice within a frame
};

enum class StreamCodec : std::uint8_t {
  Stored = 0,   // identity
  Deflate = 1,  // DEFLATE (RFC 1951) raw stream
};

/// Frame used by Quant16: the bounding box of the points, rounded outward to
/// float32 so the header stores it exactly. Empty box for no points.
Aabb quantization_frame(std::span<const Point3> points);

/// Worst-case Euclidean decode error the coder guarantees: 0 for Raw,
/// ||frame extent||_2 / 65535 / 2 for Quant16.
double geometry_error_bound(GeometryCodec codec, const Aabb& frame);

/// Quant16 requires frame to contain every point; a zero-extent axis encodes
/// lattice 0 and decodes to the axis value. Throws ParameterError for an
/// unknown codec or a point outside the frame.
std::vector<std::uint8_t> geometry_encode(std::span<const Point3> points,
                                          GeometryCodec codec, const Aabb& frame);

/// Blob length must equal count * record size. Throws CorruptionError
/// otherwise.
std::vector<Point3> geometry_decode(std::span<const std::uint8_t> blob,
                                    GeometryCodec codec, const Aabb& frame,
                                    std::uint32_t count);

// ---------------------------------------------------------------------------
// Byte-stream coder
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> stream_compress(std::span<const std::uint8_t> bytes,
                                          StreamCodec codec);

/// Decompressed length must equal expected_len exactly; CorruptionError on a
/// malformed stream or a length mismatch.
std::vector<std::uint8_t> stream_decompress(std::span<const std::uint8_t> bytes,
                                            StreamCodec codec,
                                            std::uint64_t expected_len);

// ---------------------------------------------------------------------------
// Container
// ---------------------------------------------------------------------------

inline constexpr char kContainerMagic[4] = {'D', 'J', 'V', 'W'};
inline constexpr std::uint8_t kContainerVersion = 1;
inline constexpr std::uint8_t kFlagHasReference = 0x01;
inline constexpr std::uint8_t kFlagHasMap = 0x02;

/// Fixed self-describing header, little-endian throughout. The quantization
/// frame (six float32) is present exactly when the geometry codec is Quant16,
/// making the header 44 or 68 bytes.
struct ContainerHeader {
  std::uint8_t version = kContainerVersion;
  std::uint8_t flags = 0;
  float threshold = 0.0f;
  std::uint32_t source_id = 0;
  std::uint32_t reference_id = 0;
  std::uint32_t map_id = 0;
  GeometryCodec geometry_codec = GeometryCodec::Raw;
  StreamCodec stream_codec = StreamCodec::Stored;
  float frame[6] = {0, 0, 0, 0, 0, 0};  // min xyz, max xyz (Quant16 only)
  std::uint32_t n_source_exclusive = 0;
  std::uint32_t n_ref_exclusive = 0;
  std::uint32_t n_map_common = 0;
  std::uint32_t geometry_len = 0;
  std::uint32_t index_len = 0;

  bool has_reference() const { return flags & kFlagHasReference; }
  bool has_map() const { return flags & kFlagHasMap; }
  std::size_t serialized_size() const {
    return geometry_codec == GeometryCodec::Quant16 ? 68 : 44;
  }
  Aabb frame_box() const;

  friend bool operator==(const ContainerHeader&, const ContainerHeader&) = default;
};

struct CompressedContainer {
  ContainerHeader header;
  std::vector<std::uint8_t> geometry_blob;
  std::vector<std::uint8_t> index_blob;

  std::size_t serialized_size() const {
    return header.serialized_size() + geometry_blob.size() + index_blob.size();
  }
  friend bool operator==(const CompressedContainer&, const CompressedContainer&) = default;
};

std::vector<std::uint8_t> serialize(const CompressedContainer& container);

/// Validates magic, version, codec ids, and that the declared blob lengths
/// account for every byte. CorruptionError on any violation.
CompressedContainer parse_container(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

struct CodecConfig {
  double threshold = 0.1;  // meters
  GeometryCodec geometry = GeometryCodec::Quant16;
  StreamCodec stream = StreamCodec::Deflate;
  double max_association_distance = 5.0;  // meters; beyond it: no-reference mode
};

/// Wall time spent in each pipeline stage, microseconds.
struct StageTimings {
  std::uint64_t associate_us = 0;
  std::uint64_t ref_diff_us = 0;
  std::uint64_t map_diff_us = 0;
  std::uint64_t encode_us = 0;
  std::uint64_t decode_us = 0;
  std::uint64_t reconstruct_us = 0;
};

/// Encodes a CascadedDiff into a container (delta-code both index lists,
/// geometry-code the exclusives, stream-compress the concatenated index
/// payload).
CompressedContainer encode_container(const CascadedDiff& cd, GeometryCodec geometry,
                                     StreamCodec stream);

/// Parses the container body back into a CascadedDiff (pose is identity: the
/// wire format does not carry it).
CascadedDiff decode_container(const CompressedContainer& container);

/// Full compression pipeline: reference association, cascaded diff, coding.
/// Either refs or map may be null; the container flags record what was used.
CompressedContainer compress(const PointCloud& source, const ReferenceDataset* refs,
                             const MapCloud* map, const CodecConfig& config,
                             StageTimings* timings = nullptr);

/// Full inverse pipeline. The dataset must hold the container's reference id
/// and the map fingerprint must match (MismatchError otherwise).
PointCloud decompress(const CompressedContainer& container,
                      const ReferenceDataset* refs, const MapCloud* map,
                      StageTimings* timings = nullptr);

}  // namespace refpcc
