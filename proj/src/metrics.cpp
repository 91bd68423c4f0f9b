#include "refpcc/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <ostream>

#include "refpcc/error.hpp"
#include "refpcc/spatial.hpp"

namespace refpcc {

namespace {

double directed_chamfer(const PointCloud& P, const KdTree& q_tree) {
  double sum = 0.0;
  for (const Point3& p : P.points) sum += std::sqrt(q_tree.nearest(p)->squared_dist);
  return sum / static_cast<double>(P.points.size());
}

}  // namespace

double chamfer(const PointCloud& P, const PointCloud& Q) {
  if (P.points.empty() || Q.points.empty())
    throw ParameterError("chamfer: clouds must be nonempty");
  const KdTree q_tree(Q.points);
  return directed_chamfer(P, q_tree);
}

double chamfer_sym(const PointCloud& P, const PointCloud& Q) {
  if (P.points.empty() || Q.points.empty())
    throw ParameterError("chamfer_sym: clouds must be nonempty");
  const KdTree p_tree(P.points);
  const KdTree q_tree(Q.points);
  return (directed_chamfer(P, q_tree) + directed_chamfer(Q, p_tree)) / 2.0;
}

namespace {

struct Normals {
  std::vector<Point3> n;          // unit normal per point (zero if degenerate)
  std::vector<bool> degenerate;   // plane fit rank < 2
  std::size_t degenerate_count = 0;
};

// PCA plane fit over the k nearest neighbors of each point (the point itself
// is its own nearest neighbor, so it participates in the fit).
Normals estimate_normals(const PointCloud& cloud, const KdTree& tree, int k) {
  Normals out;
  out.n.resize(cloud.points.size());
  out.degenerate.resize(cloud.points.size(), false);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto nbrs = tree.knn(cloud.points[i], static_cast<std::size_t>(k));
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& nb : nbrs) {
      const Point3& p = cloud.points[nb.index];
      centroid += Eigen::Vector3d(p.x, p.y, p.z);
    }
    centroid /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : nbrs) {
      const Point3& p = cloud.points[nb.index];
      const Eigen::Vector3d v = Eigen::Vector3d(p.x, p.y, p.z) - centroid;
      cov += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Eigen::Vector3d evals = es.eigenvalues();  // ascending
    // Rank < 2: the neighborhood does not span a plane.
    if (!(evals[1] > 1e-12 * std::max(evals[2], 1e-300))) {
      out.degenerate[i] = true;
      ++out.degenerate_count;
      continue;
    }
    const Eigen::Vector3d n = es.eigenvectors().col(0);
    out.n[i] = Point3{n.x(), n.y(), n.z()};
  }
  return out;
}

// Mean squared point-to-plane error of `from` measured against `onto`.
double directed_plane_mse(const PointCloud& from, const PointCloud& onto,
                          const KdTree& onto_tree, const Normals& normals) {
  double sum = 0.0;
  for (const Point3& p : from.points) {
    const auto nn = *onto_tree.nearest(p);
    const Point3& q = onto.points[nn.index];
    if (normals.degenerate[nn.index]) {
      sum += nn.squared_dist;  // fallback: point-to-point
      continue;
    }
    const Point3& n = normals.n[nn.index];
    const double e = (p.x - q.x) * n.x + (p.y - q.y) * n.y + (p.z - q.z) * n.z;
    sum += e * e;
  }
  return sum / static_cast<double>(from.points.size());
}

}  // namespace

std::optional<double> psnr_point_to_plane(const PointCloud& original,
                                          const PointCloud& reconstructed,
                                          int k) {
  if (k < 3) throw ParameterError("psnr_point_to_plane: k must be >= 3");
  const std::size_t need = static_cast<std::size_t>(k) + 1;
  if (original.points.size() < need || reconstructed.points.size() < need)
    throw ParameterError("psnr_point_to_plane: clouds too small for k=" +
                         std::to_string(k));

  const KdTree orig_tree(original.points);
  const KdTree recon_tree(reconstructed.points);
  const Normals orig_normals = estimate_normals(original, orig_tree, k);
  const Normals recon_normals = estimate_normals(reconstructed, recon_tree, k);
  if (orig_normals.degenerate_count == original.points.size() &&
      recon_normals.degenerate_count == reconstructed.points.size())
    return std::nullopt;

  const double mse =
      (directed_plane_mse(reconstructed, original, orig_tree, orig_normals) +
       directed_plane_mse(original, reconstructed, recon_tree, recon_normals)) /
      2.0;
  const double peak = bounding_box(original).diagonal();
  if (mse <= 0.0) return kPsnrCapDb;
  const double psnr = 10.0 * std::log10(peak * peak / mse);
  return std::min(psnr, kPsnrCapDb);
}

QualityReport compression_report(const PointCloud& source,
                                 const CompressedContainer& container,
                                 const PointCloud& reconstructed,
                                 const StageTimings& timings) {
  QualityReport r;
  r.raw_bytes = 12ull * source.points.size();
  r.compressed_bytes = container.serialized_size();
  r.compression_ratio = r.compressed_bytes
                            ? static_cast<double>(r.raw_bytes) /
                                  static_cast<double>(r.compressed_bytes)
                            : 0.0;
  r.timings = timings;
  if (!source.points.empty() && !reconstructed.points.empty()) {
    r.chamfer_sym = chamfer_sym(source, reconstructed);
    const std::size_t need = static_cast<std::size_t>(kNormalNeighborhood) + 1;
    if (source.points.size() >= need && reconstructed.points.size() >= need)
      r.psnr_p2plane = psnr_point_to_plane(source, reconstructed);
  }
  return r;
}

QualityReport quality_only_report(const PointCloud& source,
                                  const PointCloud& reconstructed) {
  CompressedContainer empty;
  QualityReport r = compression_report(source, empty, reconstructed, {});
  r.compressed_bytes = 0;
  r.compression_ratio = 0.0;
  return r;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

RecordFields report_fields(const QualityReport& r) {
  RecordFields f;
  f.emplace_back("chamfer_sym", fmt_double(r.chamfer_sym));
  if (r.psnr_p2plane) f.emplace_back("psnr_p2plane", fmt_double(*r.psnr_p2plane));
  f.emplace_back("compression_ratio", fmt_double(r.compression_ratio));
  f.emplace_back("raw_bytes", std::to_string(r.raw_bytes));
  f.emplace_back("compressed_bytes", std::to_string(r.compressed_bytes));
  f.emplace_back("t_associate_us", std::to_string(r.timings.associate_us));
  f.emplace_back("t_ref_diff_us", std::to_string(r.timings.ref_diff_us));
  f.emplace_back("t_map_diff_us", std::to_string(r.timings.map_diff_us));
  f.emplace_back("t_encode_us", std::to_string(r.timings.encode_us));
  f.emplace_back("t_decode_us", std::to_string(r.timings.decode_us));
  f.emplace_back("t_reconstruct_us", std::to_string(r.timings.reconstruct_us));
  return f;
}

void write_record(std::ostream& out, const RecordFields& fields) {
  for (const auto& [key, value] : fields) out << key << '=' << value << '\n';
  out << '\n';
}

}  // namespace refpcc
