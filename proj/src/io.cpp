#include "refpcc/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "refpcc/error.hpp"

namespace refpcc {

namespace {

constexpr std::uint64_t kMaxPointCount = 0xFFFFFFFFull;  // indices are u32

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

float load_f32le(const unsigned char* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                    static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 |
                    static_cast<std::uint32_t>(p[3]) << 24;
  return std::bit_cast<float>(u);
}

void store_f32le(float v, std::string& out) {
  const std::uint32_t u = std::bit_cast<std::uint32_t>(v);
  out.push_back(static_cast<char>(u & 0xFF));
  out.push_back(static_cast<char>((u >> 8) & 0xFF));
  out.push_back(static_cast<char>((u >> 16) & 0xFF));
  out.push_back(static_cast<char>((u >> 24) & 0xFF));
}

void store_u32le(std::uint32_t u, std::string& out) {
  out.push_back(static_cast<char>(u & 0xFF));
  out.push_back(static_cast<char>((u >> 8) & 0xFF));
  out.push_back(static_cast<char>((u >> 16) & 0xFF));
  out.push_back(static_cast<char>((u >> 24) & 0xFF));
}

void check_finite(const Point3& p, std::size_t index,
                  const std::filesystem::path& path) {
  if (!is_finite(p))
    throw IoError("non-finite coordinate at point " + std::to_string(index) +
                  " in " + path.string());
}

// ---- PLY ----

struct PlyProperty {
  std::string name;
  std::size_t byte_size = 0;
  bool is_double = false;
  bool is_float = false;
};

struct PlyElement {
  std::string name;
  std::uint64_t count = 0;
  std::vector<PlyProperty> properties;
  bool has_list = false;
};

std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

PointCloud read_ply(const std::string& data, const std::filesystem::path& path) {
  // Header is line-oriented ASCII terminated by "end_header".
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw IoError("unterminated PLY header in " + path.string());
    std::string line = data.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
    return line;
  };

  if (next_line() != "ply") throw IoError("not a PLY file: " + path.string());
  bool binary_le = false, ascii = false;
  std::vector<PlyElement> elements;
  for (;;) {
    std::istringstream ls(next_line());
    std::string tok;
    ls >> tok;
    if (tok == "end_header") break;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "binary_little_endian") binary_le = true;
      else if (fmt == "ascii") ascii = true;
      else throw IoError("unsupported PLY format '" + fmt + "' in " + path.string());
    } else if (tok == "element") {
      PlyElement el;
      ls >> el.name >> el.count;
      if (!ls) throw IoError("malformed element line in " + path.string());
      elements.push_back(std::move(el));
    } else if (tok == "property") {
      if (elements.empty()) throw IoError("property before element in " + path.string());
      std::string type;
      ls >> type;
      PlyProperty prop;
      if (type == "list") {
        elements.back().has_list = true;
        continue;
      }
      prop.byte_size = ply_type_size(type);
      if (prop.byte_size == 0)
        throw IoError("unsupported PLY property type '" + type + "' in " + path.string());
      prop.is_float = (type == "float" || type == "float32");
      prop.is_double = (type == "double" || type == "float64");
      ls >> prop.name;
      elements.back().properties.push_back(std::move(prop));
    } else {
      throw IoError("unrecognized PLY header line '" + tok + "' in " + path.string());
    }
  }
  if (!binary_le && !ascii)
    throw IoError("PLY missing format line in " + path.string());

  PointCloud cloud;
  bool saw_vertex = false;
  for (const PlyElement& el : elements) {
    if (el.name != "vertex") {
      if (saw_vertex) break;  // vertex data fully read; trailing elements ignored
      if (el.has_list)
        throw IoError("cannot skip list-typed element '" + el.name + "' in " + path.string());
      if (el.count > data.size())
        throw IoError("truncated PLY payload in " + path.string());
      if (ascii) {
        for (std::uint64_t i = 0; i < el.count; ++i) next_line();
      } else {
        std::size_t record = 0;
        for (const auto& p : el.properties) record += p.byte_size;
        if (pos + record * el.count > data.size())
          throw IoError("truncated PLY payload in " + path.string());
        pos += record * el.count;
      }
      continue;
    }
    saw_vertex = true;
    if (el.has_list)
      throw IoError("list property on vertex element unsupported in " + path.string());
    if (el.count > kMaxPointCount)
      throw IoError("vertex count exceeds 32-bit index range in " + path.string());
    int xi = -1, yi = -1, zi = -1;
    std::size_t record = 0;
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < el.properties.size(); ++i) {
      offsets.push_back(record);
      record += el.properties[i].byte_size;
      const std::string& n = el.properties[i].name;
      if (n == "x") xi = static_cast<int>(i);
      if (n == "y") yi = static_cast<int>(i);
      if (n == "z") zi = static_cast<int>(i);
    }
    if (xi < 0 || yi < 0 || zi < 0)
      throw IoError("PLY vertex element lacks x/y/z in " + path.string());
    for (int idx : {xi, yi, zi}) {
      const PlyProperty& p = el.properties[static_cast<std::size_t>(idx)];
      if (!p.is_float && !p.is_double)
        throw IoError("PLY x/y/z must be float or double in " + path.string());
    }
    cloud.points.reserve(el.count);
    if (ascii) {
      for (std::uint64_t i = 0; i < el.count; ++i) {
        std::istringstream ls(next_line());
        std::vector<double> vals(el.properties.size());
        for (double& v : vals)
          if (!(ls >> v)) throw IoError("truncated ASCII vertex data in " + path.string());
        Point3 pt{vals[static_cast<std::size_t>(xi)], vals[static_cast<std::size_t>(yi)],
                  vals[static_cast<std::size_t>(zi)]};
        check_finite(pt, i, path);
        cloud.points.push_back(pt);
      }
    } else {
      if (pos + record * el.count > data.size())
        throw IoError("truncated PLY payload in " + path.string());
      const auto* base = reinterpret_cast<const unsigned char*>(data.data()) + pos;
      auto read_coord = [&](const unsigned char* rec, int idx) -> double {
        const PlyProperty& p = el.properties[static_cast<std::size_t>(idx)];
        const unsigned char* f = rec + offsets[static_cast<std::size_t>(idx)];
        if (p.is_float) return static_cast<double>(load_f32le(f));
        std::uint64_t u = 0;
        for (int b = 7; b >= 0; --b) u = (u << 8) | f[b];
        return std::bit_cast<double>(u);
      };
      for (std::uint64_t i = 0; i < el.count; ++i) {
        const unsigned char* rec = base + i * record;
        Point3 pt{read_coord(rec, xi), read_coord(rec, yi), read_coord(rec, zi)};
        check_finite(pt, i, path);
        cloud.points.push_back(pt);
      }
      pos += record * el.count;
    }
  }
  if (!saw_vertex) throw IoError("PLY has no vertex element in " + path.string());
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out;
  out += "ply\nformat binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(cloud.points.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\nend_header\n";
  out.reserve(out.size() + cloud.points.size() * 12);
  for (const Point3& p : cloud.points) {
    store_f32le(static_cast<float>(p.x), out);
    store_f32le(static_cast<float>(p.y), out);
    store_f32le(static_cast<float>(p.z), out);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw IoError("write failed: " + path.string());
}

// ---- PCD (binary xyz float32 only) ----

PointCloud read_pcd(const std::string& data, const std::filesystem::path& path) {
  std::size_t pos = 0;
  std::uint64_t points = 0;
  bool fields_ok = false, sizes_ok = false, types_ok = false, binary = false;
  for (;;) {
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw IoError("unterminated PCD header in " + path.string());
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "FIELDS") {
      std::string a, b, c, extra;
      ls >> a >> b >> c;
      fields_ok = (a == "x" && b == "y" && c == "z" && !(ls >> extra));
    } else if (key == "SIZE") {
      int a = 0, b = 0, c = 0;
      ls >> a >> b >> c;
      sizes_ok = (a == 4 && b == 4 && c == 4);
    } else if (key == "TYPE") {
      std::string a, b, c;
      ls >> a >> b >> c;
      types_ok = (a == "F" && b == "F" && c == "F");
    } else if (key == "POINTS") {
      ls >> points;
    } else if (key == "DATA") {
      std::string mode;
      ls >> mode;
      binary = (mode == "binary");
      break;
    }
    // VERSION/COUNT/WIDTH/HEIGHT/VIEWPOINT accepted and ignored
  }
  if (!binary) throw IoError("only binary PCD supported: " + path.string());
  if (!fields_ok || !sizes_ok || !types_ok)
    throw IoError("PCD must be xyz float32: " + path.string());
  if (points > kMaxPointCount)
    throw IoError("point count exceeds 32-bit index range in " + path.string());
  if (pos + points * 12 > data.size())
    throw IoError("truncated PCD payload in " + path.string());
  PointCloud cloud;
  cloud.points.reserve(points);
  const auto* base = reinterpret_cast<const unsigned char*>(data.data()) + pos;
  for (std::uint64_t i = 0; i < points; ++i) {
    const unsigned char* rec = base + i * 12;
    Point3 p{static_cast<double>(load_f32le(rec)),
             static_cast<double>(load_f32le(rec + 4)),
             static_cast<double>(load_f32le(rec + 8))};
    check_finite(p, i, path);
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_pcd(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out;
  const std::string n = std::to_string(cloud.points.size());
  out += "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n";
  out += "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n";
  out += "WIDTH " + n + "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n";
  out += "POINTS " + n + "\nDATA binary\n";
  for (const Point3& p : cloud.points) {
    store_f32le(static_cast<float>(p.x), out);
    store_f32le(static_cast<float>(p.y), out);
    store_f32le(static_cast<float>(p.z), out);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw IoError("write failed: " + path.string());
}

// ---- internal raw ----

PointCloud read_raw(const std::string& data, const std::filesystem::path& path) {
  if (data.size() < 8 || std::memcmp(data.data(), "RAW1", 4) != 0)
    throw IoError("not a raw cloud file: " + path.string());
  const auto* base = reinterpret_cast<const unsigned char*>(data.data());
  const std::uint32_t count = static_cast<std::uint32_t>(base[4]) |
                              static_cast<std::uint32_t>(base[5]) << 8 |
                              static_cast<std::uint32_t>(base[6]) << 16 |
                              static_cast<std::uint32_t>(base[7]) << 24;
  if (8 + static_cast<std::uint64_t>(count) * 12 != data.size())
    throw IoError("raw cloud payload length mismatch in " + path.string());
  PointCloud cloud;
  cloud.points.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const unsigned char* rec = base + 8 + static_cast<std::size_t>(i) * 12;
    Point3 p{static_cast<double>(load_f32le(rec)),
             static_cast<double>(load_f32le(rec + 4)),
             static_cast<double>(load_f32le(rec + 8))};
    check_finite(p, i, path);
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_raw(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out = "RAW1";
  store_u32le(static_cast<std::uint32_t>(cloud.points.size()), out);
  for (const Point3& p : cloud.points) {
    store_f32le(static_cast<float>(p.x), out);
    store_f32le(static_cast<float>(p.y), out);
    store_f32le(static_cast<float>(p.z), out);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f.good()) throw IoError("write failed: " + path.string());
}

}  // namespace

PointCloud read_cloud(const std::filesystem::path& path) {
  const std::string data = read_file_bytes(path);
  if (data.size() >= 4 && data.compare(0, 4, "ply\n") == 0) return read_ply(data, path);
  if (data.size() >= 4 && data.compare(0, 4, "ply\r") == 0) return read_ply(data, path);
  if (data.size() >= 4 && data.compare(0, 4, "RAW1") == 0) return read_raw(data, path);
  if (data.rfind("# .PCD", 0) == 0 || data.rfind("VERSION", 0) == 0)
    return read_pcd(data, path);
  throw IoError("unknown point-cloud format: " + path.string());
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                 CloudFormat format) {
  if (cloud.points.size() > kMaxPointCount)
    throw IoError("cloud too large to write: " + path.string());
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    check_finite(cloud.points[i], i, path);
  switch (format) {
    case CloudFormat::PlyBinaryLE: write_ply(cloud, path); return;
    case CloudFormat::PcdBinary: write_pcd(cloud, path); return;
    case CloudFormat::Raw: write_raw(cloud, path); return;
  }
  throw ParameterError("write_cloud: unknown format");
}

std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<TrajectoryRecord> out;
  std::unordered_set<std::uint32_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view sv(line);
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.front()))) sv.remove_prefix(1);
    if (sv.empty() || sv.front() == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    const std::string l(sv);
    for (std::size_t i = 0; i <= l.size(); ++i) {
      if (i == l.size() || l[i] == ',') {
        fields.push_back(l.substr(start, i - start));
        start = i + 1;
      }
    }
    auto fail = [&](const std::string& why) -> IoError {
      return IoError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (fields.size() != 10) throw fail("expected 10 comma-separated fields");

    TrajectoryRecord rec;
    auto parse_u32 = [&](const std::string& s) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size() || v > 0xFFFFFFFFull)
        throw fail("bad id '" + s + "'");
      return static_cast<std::uint32_t>(v);
    };
    auto parse_i64 = [&](const std::string& s) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw fail("bad timestamp '" + s + "'");
      return v;
    };
    auto parse_f64 = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw fail("bad number '" + s + "'");
      }
    };
    rec.id = parse_u32(fields[0]);
    rec.pose.timestamp_us = parse_i64(fields[1]);
    rec.pose.position = {parse_f64(fields[2]), parse_f64(fields[3]), parse_f64(fields[4])};
    rec.pose.qx = parse_f64(fields[5]);
    rec.pose.qy = parse_f64(fields[6]);
    rec.pose.qz = parse_f64(fields[7]);
    rec.pose.qw = parse_f64(fields[8]);
    rec.relative_path = fields[9];
    if (!is_finite(rec.pose.position)) throw fail("non-finite position");
    if (!has_unit_quaternion(rec.pose)) throw fail("quaternion norm not within 1e-6 of 1");
    if (!seen.insert(rec.id).second) throw fail("duplicate cloud id " + std::to_string(rec.id));
    out.push_back(std::move(rec));
  }
  return out;
}

void write_trajectory(const std::filesystem::path& path,
                      std::span<const TrajectoryRecord> records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for write: " + path.string());
  f << "# id,timestamp_us,x,y,z,qx,qy,qz,qw,relative_path\n";
  f.precision(17);
  for (const TrajectoryRecord& r : records) {
    f << r.id << ',' << r.pose.timestamp_us << ',' << r.pose.position.x << ','
      << r.pose.position.y << ',' << r.pose.position.z << ',' << r.pose.qx << ','
      << r.pose.qy << ',' << r.pose.qz << ',' << r.pose.qw << ',' << r.relative_path
      << '\n';
  }
  if (!f.good()) throw IoError("write failed: " + path.string());
}

}  // namespace refpcc
