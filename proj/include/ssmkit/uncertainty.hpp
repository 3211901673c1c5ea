#pragma once

// Sampling-based aleatoric uncertainty: decode multiple posterior draws,
// project each onto the subject's surface, and fit a pointwise Gaussian.
// Also houses the uncertainty-vs-error correlation and rank-based outlier
// flagging used by the downstream analyses.

#include <vector>

#include "ssmkit/detail/stats.hpp"
#include "ssmkit/training.hpp"

namespace ssmkit {

struct UncertaintyMap {
  Mat per_point_variance;  // M x 3, unbiased per coordinate (mm^2)
  Vec per_point_scalar;    // M, trace / 3
  double sample_scalar = 0.0;
  int samples = 0;
};

/// Pointwise mean and unbiased per-coordinate variance of decoded samples.
inline std::pair<Mat, UncertaintyMap> fit_pointwise_gaussian(const std::vector<Mat>& samples) {
  require(samples.size() >= 2, "fit_pointwise_gaussian: need at least two samples");
  long m = samples[0].rows();
  Mat mean = Mat::Zero(m, 3);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Mat var = Mat::Zero(m, 3);
  for (const auto& s : samples) var += (s - mean).cwiseProduct(s - mean);
  var /= static_cast<double>(samples.size() - 1);

  UncertaintyMap umap;
  umap.per_point_variance = var;
  umap.per_point_scalar = var.rowwise().mean();
  umap.sample_scalar = umap.per_point_scalar.mean();
  umap.samples = static_cast<int>(samples.size());
  return {mean, umap};
}

/// Decode S posterior draws (projected onto the subject surface unless
/// disabled) and fit the pointwise Gaussian. Deterministic per seed.
inline std::pair<CorrespondenceSet, UncertaintyMap> estimate_uncertainty(
    const ShapeModel& model, const SurfaceMesh& mesh, int s_count, std::uint64_t seed,
    bool project = true) {
  require(s_count >= 2, "estimate_uncertainty: need at least two samples");
  LatentPosterior post = encode(mesh, model.cfg.encoder, model.encoder);
  int latent = model.cfg.encoder.latent_dim;
  Rng rng(mix_seed(seed, 0xA1EAu));
  std::vector<Mat> samples;
  samples.reserve(static_cast<std::size_t>(s_count));
  for (int s = 0; s < s_count; ++s) {
    Vec eps(latent);
    for (int d = 0; d < latent; ++d) eps(d) = rng.normal();
    Vec z = reparameterize(post, eps);
    CorrespondenceSet corr = deform_template(model.tpl, z, model.cfg.deformer, model.deformer,
                                             mesh.subject_id);
    if (project) corr = project_to_surface(corr, mesh, model.projection);
    samples.push_back(std::move(corr.points));
  }
  auto [mean, umap] = fit_pointwise_gaussian(samples);
  CorrespondenceSet mean_corr;
  mean_corr.points = std::move(mean);
  mean_corr.subject_id = mesh.subject_id;
  mean_corr.projected = project;
  return {std::move(mean_corr), std::move(umap)};
}

struct CorrelationResult {
  double pearson_r = 0.0;
  double pearson_p = 1.0;
  double spearman_rho = 0.0;
  double spearman_p = 1.0;
};

/// Pearson with a two-sided t-test p-value, and Spearman as Pearson on
/// average ranks (t-approximation for its p-value).
inline CorrelationResult correlate(const Vec& x, const Vec& y) {
  require(x.size() == y.size(), "correlate: length mismatch");
  require(x.size() >= 3, "correlate: need at least three observations");
  CorrelationResult out;
  auto pr = detail::pearson_with_p(x, y);
  out.pearson_r = pr.r;
  out.pearson_p = pr.p;
  auto sp = detail::pearson_with_p(detail::average_ranks(x), detail::average_ranks(y));
  out.spearman_rho = sp.r;
  out.spearman_p = sp.p;
  return out;
}

/// Indices maximizing rank(uncertainty) + rank(error), descending; ties by
/// ascending index. Ranks are average ranks, ascending in value.
inline std::vector<int> flag_outliers(const Vec& scalar_uncertainty, const Vec& error, int top_k) {
  require(scalar_uncertainty.size() == error.size(), "flag_outliers: length mismatch");
  long n = scalar_uncertainty.size();
  require(top_k >= 0 && top_k <= n, "flag_outliers: top_k out of range");
  Vec ru = detail::average_ranks(scalar_uncertainty);
  Vec re = detail::average_ranks(error);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    double sa = ru(a) + re(a), sb = ru(b) + re(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(top_k));
  return idx;
}

}  // namespace ssmkit
