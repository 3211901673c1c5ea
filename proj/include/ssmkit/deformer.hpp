#pragma once

// Implicit-field decoder: a shared coordinate MLP deforms the template point
// cloud into each subject's correspondences, followed by a differentiable
// softmin projection onto the subject's vertex set. Also houses the Chamfer
// distance under the convention used throughout: mean-of-min, symmetric sum,
// squared Euclidean for L2 and plain Euclidean for L1.

#include <string>
#include <vector>

#include "ssmkit/autodiff.hpp"
#include "ssmkit/detail/pointset.hpp"
#include "ssmkit/mesh_core.hpp"

namespace ssmkit {

struct CorrespondenceSet {
  Mat points;  // M x 3; row m corresponds to template point m
  std::string subject_id;
  bool projected = false;

  long size() const { return points.rows(); }
};

struct ProjectionConfig {
  double sigma = 0.05;  // mm; softmin temperature, > 0
};

struct DeformerConfig {
  std::vector<int> hidden{128, 128, 128};
  int latent_dim = 32;
  std::uint64_t init_seed = 0;
};

struct DeformerParams {
  std::vector<Mat> w;  // (3+L) -> hidden... -> 3
  std::vector<Mat> b;
};

/// Hidden layers get small random weights; the output layer starts at zero,
/// so the initial decoder is the identity on the template.
inline DeformerParams make_deformer(const DeformerConfig& cfg) {
  require(!cfg.hidden.empty() && cfg.latent_dim >= 1, "deformer: invalid config");
  DeformerParams p;
  Rng rng(mix_seed(cfg.init_seed, 0xDEFu));
  int in = 3 + cfg.latent_dim;
  for (int h : cfg.hidden) {
    p.w.push_back(random_normal(in, h, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    p.b.push_back(Mat::Zero(1, h));
    in = h;
  }
  p.w.push_back(Mat::Zero(in, 3));
  p.b.push_back(Mat::Zero(1, 3));
  return p;
}

inline void collect_params(DeformerParams& p, const std::string& prefix,
                           std::vector<NamedParam>& out) {
  for (std::size_t l = 0; l < p.w.size(); ++l) {
    out.push_back({prefix + "w" + std::to_string(l), &p.w[l]});
    out.push_back({prefix + "b" + std::to_string(l), &p.b[l]});
  }
}

/// f_theta(t_m, z) + t_m for every template point; the shared network and
/// template induce the correspondence ordering.
inline CorrespondenceSet deform_template(const TemplatePointCloud& tpl, const Vec& z,
                                         const DeformerConfig& cfg, const DeformerParams& params,
                                         const std::string& subject_id = "") {
  require(z.size() == cfg.latent_dim, "deform_template: latent dimension mismatch");
  if (!z.allFinite()) throw NumericError("deform_template: non-finite latent code");
  long m = tpl.points.rows();
  Mat x(m, 3 + cfg.latent_dim);
  x.leftCols(3) = tpl.points;
  x.rightCols(cfg.latent_dim) = z.transpose().replicate(m, 1);
  for (std::size_t l = 0; l + 1 < params.w.size(); ++l)
    x = ((x * params.w[l]).rowwise() + params.b[l].row(0)).array().tanh();
  Mat out = ((x * params.w.back()).rowwise() + params.b.back().row(0)) + tpl.points;
  if (!out.allFinite()) throw NumericError("deform_template: non-finite output");
  CorrespondenceSet corr;
  corr.points = std::move(out);
  corr.subject_id = subject_id;
  corr.projected = false;
  return corr;
}

struct DeformerVars {
  std::vector<ad::Var> w, b;
};

inline DeformerVars lift(ad::Tape& tape, const DeformerParams& params) {
  DeformerVars vars;
  for (const auto& m : params.w) vars.w.push_back(tape.leaf(m));
  for (const auto& m : params.b) vars.b.push_back(tape.leaf(m));
  return vars;
}

/// Differentiable decoder; z is 1 x L on the tape, template is a constant.
inline ad::Var deform_template_tape(ad::Tape& tape, const TemplatePointCloud& tpl, ad::Var z,
                                    const DeformerVars& vars) {
  long m = tpl.points.rows();
  ad::Var tpl_pts = tape.leaf(tpl.points);
  ad::Var x = tape.concat_cols(tpl_pts, tape.broadcast_row(z, m));
  for (std::size_t l = 0; l + 1 < vars.w.size(); ++l)
    x = tape.tanh_(tape.add(tape.matmul(x, vars.w[l]),
                            tape.broadcast_row(vars.b[l], m)));
  ad::Var out = tape.add(tape.matmul(x, vars.w.back()), tape.broadcast_row(vars.b.back(), m));
  return tape.add(out, tpl_pts);
}

/// Softmin projection onto the vertex set:
///   D_ij = ||c_i - v_j||,  W = softmin(D / sigma) per row,
///   delta_i = sum_j W_ij (v_j - c_i),  c_proj = c + delta.
inline CorrespondenceSet project_to_surface(const CorrespondenceSet& corr, const SurfaceMesh& mesh,
                                            const ProjectionConfig& cfg) {
  require(cfg.sigma > 0.0, "project_to_surface: sigma must be > 0");
  const Mat& c = corr.points;
  const Mat& v = mesh.vertices;
  Mat d2 = (c.rowwise().squaredNorm().replicate(1, v.rows()) +
            v.rowwise().squaredNorm().transpose().replicate(c.rows(), 1) - 2.0 * c * v.transpose())
               .cwiseMax(0.0);
  Mat d = d2.cwiseSqrt();
  Mat delta(c.rows(), 3);
  for (long i = 0; i < c.rows(); ++i) {
    double mn = d.row(i).minCoeff();
    Eigen::ArrayXd w = (-(d.row(i).array() - mn) / cfg.sigma).exp();
    w /= w.sum();
    delta.row(i) = (w.matrix().transpose() * (v.rowwise() - c.row(i))).row(0);
  }
  CorrespondenceSet out;
  out.points = c + delta;
  out.subject_id = corr.subject_id;
  out.projected = true;
  return out;
}

/// Tape version; differentiable w.r.t. both the points and the vertices.
inline ad::Var project_to_surface_tape(ad::Tape& tape, ad::Var corr, ad::Var vertices,
                                       double sigma) {
  require(sigma > 0.0, "project_to_surface: sigma must be > 0");
  ad::Var d = tape.pairwise_dist(corr, vertices);
  ad::Var w = tape.softmin_rows(d, sigma);
  // c + sum_j W_ij (v_j - c_i) = c + W v - c (rows of W sum to one)
  ad::Var wv = tape.matmul(w, vertices);
  ad::Var row_mass = tape.rowwise_sum(w);  // exactly one per row
  return tape.add(tape.sub(wv, tape.cmul(tape.broadcast_col(row_mass, 3), corr)), corr);
}

enum class ChamferNorm { L1, L2 };

inline double chamfer_distance(const Mat& a, const Mat& b, ChamferNorm norm) {
  require(a.rows() >= 1 && b.rows() >= 1, "chamfer_distance: empty point set");
  require(a.cols() == 3 && b.cols() == 3, "chamfer_distance: points must be Nx3");
  return norm == ChamferNorm::L2 ? detail::chamfer_l2(a, b) : detail::chamfer_l1(a, b);
}

inline ad::Var chamfer_distance_tape(ad::Tape& tape, ad::Var a, ad::Var b, ChamferNorm norm) {
  require(tape.val(a).rows() >= 1 && tape.val(b).rows() >= 1, "chamfer_distance: empty point set");
  ad::Var d = norm == ChamferNorm::L2 ? tape.pairwise_sqdist(a, b) : tape.pairwise_dist(a, b);
  ad::Var fwd = tape.mean(tape.rowwise_min(d));
  ad::Var bwd = tape.mean(tape.rowwise_min(tape.transpose(d)));
  return tape.add(fwd, bwd);
}

}  // namespace ssmkit
