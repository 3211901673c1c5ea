#pragma once

// Parametric shape-family generator. Every generated mesh is a deformed
// icosphere with identical connectivity, so vertex identity is a ground-truth
// correspondence oracle for tests.

#include <array>
#include <map>
#include <optional>

#include "ssmkit/mesh_core.hpp"

namespace ssmkit {

/// Unit icosphere; `subdivisions` loop-subdivision rounds of an icosahedron.
/// Vertex order is deterministic: the 12 icosahedron vertices first, then
/// edge midpoints in creation order per round.
inline SurfaceMesh make_icosphere(int subdivisions) {
  require(subdivisions >= 0 && subdivisions <= 6, "make_icosphere: subdivisions in [0, 6]");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::RowVector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
      {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2},
      {3, 2, 6}, {3, 6, 8}, {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10},
      {8, 6, 7}, {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  for (int round = 0; round < subdivisions; ++round) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Eigen::RowVector3d m = (verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized();
      verts.push_back(m);
      int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (auto [a, b, c] : faces) {
      int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  SurfaceMesh mesh;
  mesh.subject_id = "icosphere";
  mesh.vertices.resize(static_cast<long>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<long>(i)) = verts[i];
  mesh.faces.resize(static_cast<long>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int c = 0; c < 3; ++c) mesh.faces(static_cast<long>(f), c) = faces[f][static_cast<std::size_t>(c)];
  return mesh;
}

enum class ShapeFamily { superellipsoid, bumped_ellipsoid };

struct BumpSpec {
  Eigen::RowVector3d center{1.0, 0.0, 0.0};  // unit direction on the sphere
  double radius = 0.3;
  std::pair<double, double> amplitude_range{0.0, 0.0};
};

struct CohortSpec {
  ShapeFamily family = ShapeFamily::superellipsoid;
  int n_shapes = 1;
  std::vector<std::pair<double, double>> factor_ranges{{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}};
  std::optional<BumpSpec> bump;
  double noise_sigma = 0.0;  // mm, i.i.d. per coordinate, added last
  std::uint64_t seed = 0;
  int subdivisions = 3;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
};

inline void validate_spec(const CohortSpec& spec) {
  require(spec.n_shapes >= 1, "cohort spec: n_shapes must be >= 1");
  require(spec.factor_ranges.size() == 3, "cohort spec: expected 3 axis-scale factor ranges");
  for (auto [lo, hi] : spec.factor_ranges)
    require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi && lo > 0.0,
            "cohort spec: invalid factor range");
  require(spec.noise_sigma >= 0.0, "cohort spec: noise_sigma must be >= 0");
  if (spec.family == ShapeFamily::bumped_ellipsoid) {
    require(spec.bump.has_value(), "cohort spec: bumped_ellipsoid needs a bump block");
    require(spec.bump->radius > 0.0, "cohort spec: bump radius must be > 0");
    require(spec.bump->amplitude_range.first <= spec.bump->amplitude_range.second,
            "cohort spec: invalid amplitude range");
  }
  double fsum = spec.split_fractions[0] + spec.split_fractions[1] + spec.split_fractions[2];
  require(std::abs(fsum - 1.0) < 1e-9, "cohort spec: split fractions must sum to 1");
}

/// Radial bump profile on the unit sphere. `radius` is the bump's extent:
/// the Gaussian sigma is radius/2, so the weight decays to about 13% of the
/// peak at the radius and is negligible beyond it.
inline double bump_weight(const Eigen::RowVector3d& unit_pos, const Eigen::RowVector3d& center,
                          double radius) {
  double sigma = 0.5 * radius;
  double d2 = (unit_pos - center).squaredNorm();
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

struct GeneratedCohort {
  Cohort cohort;
  Mat factors;                            // n_shapes x d, ground truth
  std::vector<std::string> factor_names;  // "scale_x", "scale_y", "scale_z"[, "bump_amplitude"]
  CohortSpec spec;
};

inline GeneratedCohort generate_cohort(const CohortSpec& spec) {
  validate_spec(spec);
  SurfaceMesh base = make_icosphere(spec.subdivisions);
  Eigen::RowVector3d bump_center{0, 0, 0};
  bool bumped = spec.family == ShapeFamily::bumped_ellipsoid;
  if (bumped) bump_center = spec.bump->center.normalized();

  GeneratedCohort gen;
  gen.spec = spec;
  gen.factor_names = {"scale_x", "scale_y", "scale_z"};
  if (bumped) gen.factor_names.push_back("bump_amplitude");
  gen.factors.resize(spec.n_shapes, static_cast<long>(gen.factor_names.size()));

  int width = std::max(3, static_cast<int>(std::to_string(spec.n_shapes - 1).size()));
  for (int n = 0; n < spec.n_shapes; ++n) {
    Rng rng(mix_seed(spec.seed, 0x5348u, static_cast<std::uint64_t>(n)));
    double sx = rng.uniform(spec.factor_ranges[0].first, spec.factor_ranges[0].second);
    double sy = rng.uniform(spec.factor_ranges[1].first, spec.factor_ranges[1].second);
    double sz = rng.uniform(spec.factor_ranges[2].first, spec.factor_ranges[2].second);
    double amp = 0.0;
    if (bumped) amp = rng.uniform(spec.bump->amplitude_range.first, spec.bump->amplitude_range.second);

    SurfaceMesh mesh = base;
    for (long v = 0; v < mesh.vertex_count(); ++v) {
      Eigen::RowVector3d p = mesh.vertices.row(v);
      if (bumped) p *= 1.0 + amp * bump_weight(p, bump_center, spec.bump->radius);
      mesh.vertices(v, 0) = sx * p(0);
      mesh.vertices(v, 1) = sy * p(1);
      mesh.vertices(v, 2) = sz * p(2);
    }
    if (spec.noise_sigma > 0.0)
      for (long v = 0; v < mesh.vertex_count(); ++v)
        for (int c = 0; c < 3; ++c) mesh.vertices(v, c) += spec.noise_sigma * rng.normal();

    std::string num = std::to_string(n);
    mesh.subject_id = "shape_" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
    gen.cohort.meshes.push_back(std::move(mesh));
    gen.factors(n, 0) = sx;
    gen.factors(n, 1) = sy;
    gen.factors(n, 2) = sz;
    if (bumped) gen.factors(n, 3) = amp;
  }

  // deterministic split assignment
  std::vector<int> order(static_cast<std::size_t>(spec.n_shapes));
  for (int i = 0; i < spec.n_shapes; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng split_rng(mix_seed(spec.seed, 0x53504cu));
  split_rng.shuffle(order);
  int n_train = static_cast<int>(std::lround(spec.split_fractions[0] * spec.n_shapes));
  int n_val = static_cast<int>(std::lround(spec.split_fractions[1] * spec.n_shapes));
  n_train = std::min(n_train, spec.n_shapes);
  n_val = std::min(n_val, spec.n_shapes - n_train);
  gen.cohort.split.assign(static_cast<std::size_t>(spec.n_shapes), Split::test);
  for (int i = 0; i < n_train; ++i) gen.cohort.split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::train;
  for (int i = n_train; i < n_train + n_val; ++i)
    gen.cohort.split[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::val;
  gen.cohort.group_label.assign(static_cast<std::size_t>(spec.n_shapes), "");
  return gen;
}

enum class GroupRule { bump_amplitude_threshold };

/// Label "pathology" iff bump amplitude exceeds the midpoint of the sampled
/// amplitude range, "control" otherwise.
inline std::vector<std::string> assign_groups(const GeneratedCohort& gen,
                                              GroupRule rule = GroupRule::bump_amplitude_threshold) {
  (void)rule;
  long amp_col = -1;
  for (std::size_t c = 0; c < gen.factor_names.size(); ++c)
    if (gen.factor_names[c] == "bump_amplitude") amp_col = static_cast<long>(c);
  if (amp_col < 0)
    throw ValidationError("assign_groups: cohort has no bump amplitude factor");
  double threshold =
      0.5 * (gen.spec.bump->amplitude_range.first + gen.spec.bump->amplitude_range.second);
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(gen.factors.rows()));
  for (long n = 0; n < gen.factors.rows(); ++n)
    labels.push_back(gen.factors(n, amp_col) > threshold ? "pathology" : "control");
  return labels;
}

}  // namespace ssmkit
