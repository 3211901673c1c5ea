#pragma once

// Evaluation metrics: surface-sampling distances (Chamfer lives in
// deformer.hpp; here point-to-mesh and surface-to-surface on exact
// point-triangle closest points), TPS warp mesh reconstruction, and the PCA
// shape-model triad (compactness, generalization, specificity).

#include <vector>

#include "ssmkit/deformer.hpp"
#include "ssmkit/mesh_core.hpp"

namespace ssmkit {

/// Closest point on triangle abc to p; region-based (vertex/edge/face).
inline Eigen::RowVector3d closest_point_on_triangle(const Eigen::RowVector3d& p,
                                                    const Eigen::RowVector3d& a,
                                                    const Eigen::RowVector3d& b,
                                                    const Eigen::RowVector3d& c) {
  Eigen::RowVector3d ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  Eigen::RowVector3d bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  Eigen::RowVector3d cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Exact distance from p to the mesh surface (minimum over all faces).
inline double point_to_surface_distance(const Eigen::RowVector3d& p, const SurfaceMesh& mesh) {
  require(mesh.face_count() >= 1, "point_to_surface_distance: mesh has no faces");
  double best = std::numeric_limits<double>::infinity();
  for (long f = 0; f < mesh.face_count(); ++f) {
    Eigen::RowVector3d q = closest_point_on_triangle(p, mesh.vertices.row(mesh.faces(f, 0)),
                                                     mesh.vertices.row(mesh.faces(f, 1)),
                                                     mesh.vertices.row(mesh.faces(f, 2)));
    best = std::min(best, (p - q).squaredNorm());
  }
  return std::sqrt(best);
}

struct P2mParts {
  double point_to_face = 0.0;  // mean over points of exact point-to-triangle distance
  double face_to_point = 0.0;  // mean over face barycenters of distance to nearest point
  double total() const { return point_to_face + face_to_point; }
};

inline P2mParts point_to_mesh_parts(const Mat& points, const SurfaceMesh& mesh) {
  require(points.rows() >= 1, "point_to_mesh: empty point set");
  require(mesh.face_count() >= 1, "point_to_mesh: mesh has no faces");
  P2mParts parts;
  for (long i = 0; i < points.rows(); ++i)
    parts.point_to_face += point_to_surface_distance(points.row(i), mesh);
  parts.point_to_face /= static_cast<double>(points.rows());

  Mat centers(mesh.face_count(), 3);
  for (long f = 0; f < mesh.face_count(); ++f)
    centers.row(f) = (mesh.vertices.row(mesh.faces(f, 0)) + mesh.vertices.row(mesh.faces(f, 1)) +
                      mesh.vertices.row(mesh.faces(f, 2))) /
                     3.0;
  parts.face_to_point = detail::min_sqdist(centers, points).array().sqrt().mean();
  return parts;
}

/// P2M: point-to-face plus face(barycenter)-to-point, both as means.
inline double point_to_mesh(const Mat& points, const SurfaceMesh& mesh) {
  return point_to_mesh_parts(points, mesh).total();
}

/// Symmetric surface distance: mean of the two directed vertex-to-surface
/// means.
inline double surface_to_surface(const SurfaceMesh& a, const SurfaceMesh& b) {
  double ab = 0.0, ba = 0.0;
  for (long v = 0; v < a.vertex_count(); ++v)
    ab += point_to_surface_distance(a.vertices.row(v), b);
  ab /= static_cast<double>(a.vertex_count());
  for (long v = 0; v < b.vertex_count(); ++v)
    ba += point_to_surface_distance(b.vertices.row(v), a);
  ba /= static_cast<double>(b.vertex_count());
  return 0.5 * (ab + ba);
}

/// Thin-plate-spline warp with kernel U(r) = r, fitted on control pairs
/// (mean_corr -> corr) and applied to the mean mesh vertices.
inline SurfaceMesh reconstruct_mesh(const CorrespondenceSet& corr,
                                    const CorrespondenceSet& mean_corr,
                                    const SurfaceMesh& mean_mesh) {
  long n = corr.points.rows();
  require(n == mean_corr.points.rows() && n >= 4, "reconstruct_mesh: control pairs mismatch");
  const Mat& src = mean_corr.points;
  const Mat& dst = corr.points;

  Mat sys = Mat::Zero(n + 4, n + 4);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) sys(i, j) = (src.row(i) - src.row(j)).norm();
  for (long i = 0; i < n; ++i) {
    sys(i, n) = 1.0;
    sys.block(i, n + 1, 1, 3) = src.row(i);
    sys(n, i) = 1.0;
    sys.block(n + 1, i, 3, 1) = src.row(i).transpose();
  }
  Mat rhs = Mat::Zero(n + 4, 3);
  rhs.topRows(n) = dst;

  Eigen::FullPivLU<Mat> lu(sys);
  if (!lu.isInvertible())
    throw NumericError("reconstruct_mesh: degenerate control configuration (rank " +
                       std::to_string(lu.rank()) + " of " + std::to_string(n + 4) + ")");
  Mat coef = lu.solve(rhs);  // rows: n kernel weights, then affine [1; x]

  SurfaceMesh out = mean_mesh;
  out.subject_id = corr.subject_id.empty() ? mean_mesh.subject_id : corr.subject_id;
  for (long v = 0; v < mean_mesh.vertex_count(); ++v) {
    Eigen::RowVector3d x = mean_mesh.vertices.row(v);
    Eigen::RowVector3d y = coef.row(n) + x * coef.bottomRows(3);
    for (long i = 0; i < n; ++i) y += (x - src.row(i)).norm() * coef.row(i);
    out.vertices.row(v) = y;
  }
  return out;
}

// ---- PCA shape statistics ----

struct CorrespondenceMatrix {
  Mat data;  // N x 3M, rows are flattened correspondence sets in template order

  long subjects() const { return data.rows(); }
  long points() const { return data.cols() / 3; }
};

inline Eigen::RowVectorXd flatten(const Mat& points) {
  Eigen::RowVectorXd row(points.rows() * 3);
  for (long i = 0; i < points.rows(); ++i) row.segment(i * 3, 3) = points.row(i);
  return row;
}

inline Mat unflatten(const Eigen::RowVectorXd& row) {
  require(row.size() % 3 == 0, "unflatten: length not a multiple of 3");
  Mat points(row.size() / 3, 3);
  for (long i = 0; i < points.rows(); ++i) points.row(i) = row.segment(i * 3, 3);
  return points;
}

inline CorrespondenceMatrix stack_correspondences(const std::vector<CorrespondenceSet>& sets) {
  require(!sets.empty(), "stack_correspondences: empty input");
  CorrespondenceMatrix x;
  x.data.resize(static_cast<long>(sets.size()), sets[0].points.rows() * 3);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    require(sets[i].points.rows() == sets[0].points.rows(),
            "stack_correspondences: inconsistent M");
    x.data.row(static_cast<long>(i)) = flatten(sets[i].points);
  }
  return x;
}

struct PcaModel {
  Eigen::RowVectorXd mean;  // 3M
  Mat modes;                // 3M x r, orthonormal columns
  Vec eigenvalues;          // r, non-increasing

  long rank() const { return eigenvalues.size(); }
};

/// Mean-centered PCA; keeps at most min(N-1, 3M) modes and trims
/// numerically-zero eigenvalues.
inline PcaModel fit_pca(const CorrespondenceMatrix& x) {
  long n = x.data.rows();
  require(n >= 2, "fit_pca: need at least two subjects");
  PcaModel pca;
  pca.mean = x.data.colwise().mean();
  Mat centered = x.data.rowwise() - pca.mean;
  Eigen::BDCSVD<Mat> svd(centered, Eigen::ComputeThinV);
  long r = std::min<long>(n - 1, x.data.cols());
  Vec sv = svd.singularValues().head(r);
  Vec ev = sv.array().square() / static_cast<double>(n - 1);
  double cutoff = ev.size() > 0 ? ev(0) * 1e-12 : 0.0;
  long keep = 0;
  while (keep < r && ev(keep) > cutoff && ev(keep) > 0.0) ++keep;
  pca.eigenvalues = ev.head(keep);
  pca.modes = svd.matrixV().leftCols(keep);
  return pca;
}

/// Cumulative explained variance of the first m modes.
inline double compactness(const PcaModel& pca, int m) {
  require(m >= 1 && m <= pca.rank(), "compactness: mode index out of range");
  double total = pca.eigenvalues.sum();
  return pca.eigenvalues.head(m).sum() / total;
}

namespace detail {

inline double mean_point_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  double acc = 0.0;
  long m = a.size() / 3;
  for (long i = 0; i < m; ++i) acc += (a.segment(i * 3, 3) - b.segment(i * 3, 3)).norm();
  return acc / static_cast<double>(m);
}

}  // namespace detail

/// Mean per-point reconstruction error of held-out rows projected onto the
/// first m modes.
inline double generalization(const PcaModel& pca, const CorrespondenceMatrix& held_out, int m) {
  require(m >= 1 && m <= pca.rank(), "generalization: mode index out of range");
  double acc = 0.0;
  for (long i = 0; i < held_out.data.rows(); ++i) {
    Eigen::RowVectorXd centered = held_out.data.row(i) - pca.mean;
    Eigen::RowVectorXd recon =
        pca.mean + (centered * pca.modes.leftCols(m)) * pca.modes.leftCols(m).transpose();
    acc += detail::mean_point_distance(held_out.data.row(i), recon);
  }
  return acc / static_cast<double>(held_out.data.rows());
}

/// Mean distance from model-sampled shapes to their nearest training row.
inline double specificity(const PcaModel& pca, const CorrespondenceMatrix& train, int m,
                          int n_samples, std::uint64_t seed) {
  require(m >= 1 && m <= pca.rank(), "specificity: mode index out of range");
  require(n_samples >= 1, "specificity: n_samples must be >= 1");
  Rng rng(mix_seed(seed, 0x5BECu));
  double acc = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    Eigen::RowVectorXd sample = pca.mean;
    for (int i = 0; i < m; ++i)
      sample += std::sqrt(pca.eigenvalues(i)) * rng.normal() * pca.modes.col(i).transpose();
    double best = std::numeric_limits<double>::infinity();
    for (long t = 0; t < train.data.rows(); ++t)
      best = std::min(best, detail::mean_point_distance(sample, train.data.row(t)));
    acc += best;
  }
  return acc / static_cast<double>(n_samples);
}

}  // namespace ssmkit
