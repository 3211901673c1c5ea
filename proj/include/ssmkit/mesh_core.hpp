#pragma once

// Surface mesh representation, neighborhood structure and template selection.

#include <algorithm>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "ssmkit/common.hpp"
#include "ssmkit/detail/pointset.hpp"

namespace ssmkit {

struct SurfaceMesh {
  Mat vertices;          // K x 3, mm
  MatI faces;            // F x 3, vertex indices
  std::string subject_id;

  long vertex_count() const { return vertices.rows(); }
  long face_count() const { return faces.rows(); }
};

enum class Split { train, val, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split tag: " + s);
}

struct Cohort {
  std::vector<SurfaceMesh> meshes;
  std::vector<Split> split;                // one tag per mesh
  std::vector<std::string> group_label;    // optional, empty string if unset

  std::vector<int> indices(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < meshes.size(); ++i)
      if (split[i] == s) out.push_back(static_cast<int>(i));
    return out;
  }
};

enum class TemplateProvenance { medoid_subsample, data_informed };

struct TemplatePointCloud {
  Mat points;  // M x 3
  TemplateProvenance provenance = TemplateProvenance::medoid_subsample;

  long size() const { return points.rows(); }
};

/// Full validity check: triangle indices in range, no degenerate face,
/// finite coordinates.
inline void validate_mesh(const SurfaceMesh& mesh) {
  if (mesh.vertices.cols() != 3)
    throw ValidationError("mesh '" + mesh.subject_id + "': vertices must be Kx3");
  if (!mesh.vertices.allFinite())
    throw ValidationError("mesh '" + mesh.subject_id + "': non-finite vertex coordinate");
  long k = mesh.vertex_count();
  for (long f = 0; f < mesh.faces.rows(); ++f) {
    int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
    for (int idx : {a, b, c})
      if (idx < 0 || idx >= k)
        throw ValidationError("mesh '" + mesh.subject_id + "': face " + std::to_string(f) +
                              " references vertex " + std::to_string(idx) + " outside [0, " +
                              std::to_string(k) + ")");
    if (a == b || b == c || a == c)
      throw ValidationError("mesh '" + mesh.subject_id + "': face " + std::to_string(f) +
                            " is degenerate");
  }
}

/// Undirected edge set derived from faces.
inline std::vector<std::pair<int, int>> mesh_edges(const SurfaceMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  for (long f = 0; f < mesh.faces.rows(); ++f) {
    int v[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    for (int e = 0; e < 3; ++e) {
      int a = v[e], b = v[(e + 1) % 3];
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return {edges.begin(), edges.end()};
}

namespace detail {

struct Adjacency {
  std::vector<std::vector<std::pair<int, double>>> nbr;  // (vertex, edge length)
};

inline Adjacency build_adjacency(const SurfaceMesh& mesh) {
  Adjacency adj;
  adj.nbr.resize(static_cast<std::size_t>(mesh.vertex_count()));
  for (auto [a, b] : mesh_edges(mesh)) {
    double w = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
    adj.nbr[static_cast<std::size_t>(a)].emplace_back(b, w);
    adj.nbr[static_cast<std::size_t>(b)].emplace_back(a, w);
  }
  return adj;
}

inline std::vector<int> component_sizes(const Adjacency& adj) {
  std::size_t n = adj.nbr.size();
  std::vector<int> comp(n, -1);
  std::vector<int> sizes;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      ++sizes[static_cast<std::size_t>(id)];
      for (auto [v, w] : adj.nbr[u]) {
        (void)w;
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = id;
          stack.push_back(static_cast<std::size_t>(v));
        }
      }
    }
  }
  return sizes;
}

}  // namespace detail

/// k nearest vertices per vertex under graph-geodesic distance (Dijkstra over
/// the edge graph, Euclidean edge weights). Self excluded; ties broken by
/// ascending vertex index.
inline MatI geodesic_neighborhood(const SurfaceMesh& mesh, int k) {
  long n = mesh.vertex_count();
  require(k > 0 && k < n, "geodesic_neighborhood: need 0 < k < K");
  auto adj = detail::build_adjacency(mesh);
  auto sizes = detail::component_sizes(adj);
  if (sizes.size() != 1) {
    std::string msg = "geodesic_neighborhood: mesh is disconnected (component sizes:";
    for (int s : sizes) msg += " " + std::to_string(s);
    throw ValidationError(msg + ")");
  }

  MatI out(n, k);
  using Entry = std::pair<double, int>;
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<char> settled(static_cast<std::size_t>(n));
  for (long src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(settled.begin(), settled.end(), 0);
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    dist[static_cast<std::size_t>(src)] = 0.0;
    heap.emplace(0.0, static_cast<int>(src));
    int found = 0;
    while (!heap.empty() && found < k) {
      auto [d, u] = heap.top();
      heap.pop();
      if (settled[static_cast<std::size_t>(u)]) continue;
      settled[static_cast<std::size_t>(u)] = 1;
      if (u != src) out(src, found++) = u;
      for (auto [v, w] : adj.nbr[static_cast<std::size_t>(u)]) {
        double nd = d + w;
        if (nd < dist[static_cast<std::size_t>(v)]) {
          dist[static_cast<std::size_t>(v)] = nd;
          heap.emplace(nd, v);
        }
      }
    }
    if (found < k)
      throw ValidationError("geodesic_neighborhood: vertex " + std::to_string(src) +
                            " reaches only " + std::to_string(found) + " vertices");
  }
  return out;
}

/// Training mesh minimizing the summed symmetric Chamfer distance (vertex
/// sets, squared Euclidean) to all other training meshes. Ties broken by
/// ascending subject_id.
inline const SurfaceMesh& select_medoid(const Cohort& cohort) {
  auto train = cohort.indices(Split::train);
  require(!train.empty(), "select_medoid: cohort has no training meshes");
  std::size_t nt = train.size();
  Mat cd = Mat::Zero(static_cast<long>(nt), static_cast<long>(nt));
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = i + 1; j < nt; ++j) {
      double d = detail::chamfer_l2(cohort.meshes[static_cast<std::size_t>(train[i])].vertices,
                                    cohort.meshes[static_cast<std::size_t>(train[j])].vertices);
      cd(static_cast<long>(i), static_cast<long>(j)) = d;
      cd(static_cast<long>(j), static_cast<long>(i)) = d;
    }
  int best = 0;
  for (std::size_t i = 1; i < nt; ++i) {
    double si = cd.row(static_cast<long>(i)).sum();
    double sb = cd.row(best).sum();
    const std::string& idi = cohort.meshes[static_cast<std::size_t>(train[i])].subject_id;
    const std::string& idb = cohort.meshes[static_cast<std::size_t>(train[static_cast<std::size_t>(best)])].subject_id;
    if (si < sb || (si == sb && idi < idb)) best = static_cast<int>(i);
  }
  return cohort.meshes[static_cast<std::size_t>(train[static_cast<std::size_t>(best)])];
}

/// Deterministic farthest-point subsample of m vertices, seeded at vertex 0.
/// Ties broken by ascending vertex index. Point order is the FPS pick order.
inline TemplatePointCloud subsample_template(const SurfaceMesh& mesh, int m) {
  long k = mesh.vertex_count();
  require(m >= 1, "subsample_template: m must be positive");
  if (m > k)
    throw ValidationError("subsample_template: m=" + std::to_string(m) + " exceeds K=" +
                          std::to_string(k));
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(m));
  picked.push_back(0);
  Vec dist = (mesh.vertices.rowwise() - mesh.vertices.row(0)).rowwise().squaredNorm();
  while (static_cast<int>(picked.size()) < m) {
    int next = 0;
    for (long i = 1; i < k; ++i)
      if (dist(i) > dist(next)) next = static_cast<int>(i);
    picked.push_back(next);
    Vec d = (mesh.vertices.rowwise() - mesh.vertices.row(next)).rowwise().squaredNorm();
    dist = dist.cwiseMin(d);
  }
  TemplatePointCloud tpl;
  tpl.points.resize(m, 3);
  for (int i = 0; i < m; ++i) tpl.points.row(i) = mesh.vertices.row(picked[static_cast<std::size_t>(i)]);
  tpl.provenance = TemplateProvenance::medoid_subsample;
  return tpl;
}

/// Axis-aligned bounding-box overlap fraction relative to the smaller box.
inline double bbox_overlap_fraction(const Mat& a, const Mat& b) {
  Eigen::RowVector3d alo = a.colwise().minCoeff(), ahi = a.colwise().maxCoeff();
  Eigen::RowVector3d blo = b.colwise().minCoeff(), bhi = b.colwise().maxCoeff();
  double inter = 1.0, va = 1.0, vb = 1.0;
  for (int d = 0; d < 3; ++d) {
    inter *= std::max(0.0, std::min(ahi(d), bhi(d)) - std::max(alo(d), blo(d)));
    va *= ahi(d) - alo(d);
    vb *= bhi(d) - blo(d);
  }
  double ref = std::min(va, vb);
  if (ref <= 0.0) return inter > 0.0 ? 1.0 : 0.0;
  return inter / ref;
}

/// Subjects whose bounding box overlaps the template's by 50% or less.
/// Input is expected to be roughly pre-aligned; this is only a sanity net.
inline std::vector<std::string> alignment_warnings(const Cohort& cohort, const Mat& template_points) {
  std::vector<std::string> out;
  for (const auto& mesh : cohort.meshes)
    if (bbox_overlap_fraction(mesh.vertices, template_points) <= 0.5)
      out.push_back(mesh.subject_id);
  return out;
}

}  // namespace ssmkit
