#include <catch2/catch_amalgamated.hpp>

#include "ssmkit/analysis.hpp"
#include "ssmkit/pipeline.hpp"
#include "ssmkit/synthetic.hpp"
#include "ssmkit/training.hpp"
#include "ssmkit/uncertainty.hpp"

// Trained-model probes: these train small models on synthetic cohorts, so
// they run longer than the pure unit suites.

using namespace ssmkit;

namespace {

ModelConfig small_model_cfg(int m = 64, int latent = 8) {
  ModelConfig cfg;
  cfg.n_correspondences = m;
  cfg.encoder.k_neighbors = 8;
  cfg.encoder.edgeconv_widths = {16, 32};
  cfg.encoder.latent_dim = latent;
  cfg.flow.latent_dim = latent;
  cfg.flow.n_layers = 2;
  cfg.flow.hidden = 8;
  cfg.deformer.hidden = {32, 32};
  cfg.deformer.latent_dim = latent;
  return cfg;
}

TrainConfig small_train_cfg(int epochs, int burn_in, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.burn_in_epochs = burn_in;
  cfg.batch_size = 4;
  cfg.learning_rate = 5e-3;
  cfg.kl_weight = 1e-3;
  cfg.mask_ratio = 0.0;
  cfg.perturb_sigma = 0.0;
  cfg.template_update_every = 20;
  cfg.template_samples = 100;
  cfg.seed = seed;
  return cfg;
}

struct OneFactorFixture {
  GeneratedCohort gen;
  ShapeModel model;
};

// single shared training run for the one-factor probes
const OneFactorFixture& one_factor_fixture() {
  static OneFactorFixture* fixture = [] {
    CohortSpec spec;
    spec.n_shapes = 12;
    spec.subdivisions = 2;
    spec.factor_ranges = {{0.7, 1.3}, {1.0, 1.0}, {1.0, 1.0}};
    spec.seed = 71;
    spec.split_fractions = {1.0, 0.0, 0.0};
    auto* f = new OneFactorFixture{generate_cohort(spec), {}};
    TrainResult res = train(f->gen.cohort, small_model_cfg(), small_train_cfg(300, 60, 7));
    REQUIRE_FALSE(res.diverged);
    f->model = std::move(res.model);
    return f;
  }();
  return *fixture;
}

SurfaceMesh scaled_sphere(double sx, int subdivisions = 2) {
  SurfaceMesh m = make_icosphere(subdivisions);
  m.vertices.col(0) *= sx;
  m.subject_id = "probe";
  return m;
}

}  // namespace

TEST_CASE("trained encoder: factor perturbations move the posterior mean consistently") {
  const auto& fix = one_factor_fixture();
  std::vector<Vec> deltas;
  for (double base : {0.75, 0.85, 0.95, 1.05, 1.15}) {
    LatentPosterior a = encode(scaled_sphere(base), fix.model.cfg.encoder, fix.model.encoder);
    LatentPosterior b = encode(scaled_sphere(base + 0.1), fix.model.cfg.encoder, fix.model.encoder);
    Vec d = b.mu - a.mu;
    REQUIRE(d.norm() > 0.0);
    deltas.push_back(d.normalized());
  }
  double cos_sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < deltas.size(); ++i)
    for (std::size_t j = i + 1; j < deltas.size(); ++j) {
      cos_sum += deltas[i].dot(deltas[j]);
      ++pairs;
    }
  double mean_cos = cos_sum / pairs;
  CAPTURE(mean_cos);
  CHECK(mean_cos > 0.9);
}

TEST_CASE("trained deformer: predicted points track ground-truth vertex trajectories") {
  const auto& fix = one_factor_fixture();
  const auto& cohort = fix.gen.cohort;
  long n = static_cast<long>(cohort.meshes.size());
  long m = fix.model.tpl.points.rows();
  long k = cohort.meshes[0].vertex_count();

  std::vector<Mat> preds;
  for (const auto& mesh : cohort.meshes) preds.push_back(pipeline::predict(fix.model, mesh).points);

  // best-matched vertex trajectory per correspondence point
  double total_err = 0.0;
  for (long pt = 0; pt < m; ++pt) {
    double best = std::numeric_limits<double>::infinity();
    for (long v = 0; v < k; ++v) {
      double acc = 0.0;
      for (long s = 0; s < n; ++s)
        acc += (preds[static_cast<std::size_t>(s)].row(pt) - cohort.meshes[static_cast<std::size_t>(s)].vertices.row(v)).norm();
      best = std::min(best, acc / static_cast<double>(n));
    }
    total_err += best;
  }
  double mean_traj_err = total_err / static_cast<double>(m);

  // mean nearest-neighbor spacing of the predictions
  double spacing = 0.0;
  for (long s = 0; s < n; ++s) {
    const Mat& p = preds[static_cast<std::size_t>(s)];
    double acc = 0.0;
    for (long i = 0; i < m; ++i) {
      double nn = std::numeric_limits<double>::infinity();
      for (long j = 0; j < m; ++j)
        if (j != i) nn = std::min(nn, (p.row(i) - p.row(j)).squaredNorm());
      acc += std::sqrt(nn);
    }
    spacing += acc / static_cast<double>(m);
  }
  spacing /= static_cast<double>(n);

  CAPTURE(mean_traj_err, spacing);
  CHECK(mean_traj_err < spacing);
}

TEST_CASE("trained model: latent mode 1 aligns with data mode 1") {
  const auto& fix = one_factor_fixture();
  const auto& cohort = fix.gen.cohort;

  std::vector<CorrespondenceSet> preds;
  for (const auto& mesh : cohort.meshes) preds.push_back(pipeline::predict(fix.model, mesh));
  PcaModel data_pca = fit_pca(stack_correspondences(preds));
  REQUIRE(data_pca.rank() >= 1);

  auto latent_walk = latent_modes(fix.model, cohort, 1, {-2.0, 2.0});
  Eigen::RowVectorXd latent_dir =
      flatten(latent_walk[1].points) - flatten(latent_walk[0].points);
  REQUIRE(latent_dir.norm() > 0.0);

  double cos = std::abs(latent_dir.normalized().dot(data_pca.modes.col(0).transpose()));
  double angle_deg = std::acos(std::min(1.0, cos)) * 180.0 / M_PI;
  CAPTURE(angle_deg);
  CHECK(angle_deg < 30.0);
}

TEST_CASE("trained model: inference on an unseen mesh stays near the training error") {
  const auto& fix = one_factor_fixture();
  double train_cd = 0.0;
  for (const auto& mesh : fix.gen.cohort.meshes) {
    CorrespondenceSet pred = pipeline::predict(fix.model, mesh);
    train_cd += chamfer_distance(mesh.vertices, pred.points, ChamferNorm::L2);
  }
  train_cd /= static_cast<double>(fix.gen.cohort.meshes.size());

  SurfaceMesh unseen = scaled_sphere(1.085);  // inside the factor range, unseen
  CorrespondenceSet pred = pipeline::predict(fix.model, unseen);
  double unseen_cd = chamfer_distance(unseen.vertices, pred.points, ChamferNorm::L2);
  CAPTURE(train_cd, unseen_cd);
  CHECK(unseen_cd < 2.0 * train_cd);
}

TEST_CASE("uncertainty concentrates in a heteroscedastic-noise region") {
  // cohort with shape noise injected ONLY inside the bump region
  CohortSpec spec;
  spec.family = ShapeFamily::bumped_ellipsoid;
  spec.n_shapes = 12;
  spec.subdivisions = 2;
  spec.factor_ranges = {{0.9, 1.1}, {0.9, 1.1}, {0.9, 1.1}};
  spec.bump = BumpSpec{{1, 0, 0}, 0.6, {0.15, 0.15}};
  spec.seed = 97;
  spec.split_fractions = {1.0, 0.0, 0.0};
  GeneratedCohort gen = generate_cohort(spec);

  Eigen::RowVector3d center(1, 0, 0);
  SurfaceMesh base = make_icosphere(2);
  double noise = 0.05;
  for (std::size_t s = 0; s < gen.cohort.meshes.size(); ++s) {
    Rng rng(mix_seed(101, s));
    SurfaceMesh& mesh = gen.cohort.meshes[s];
    for (long v = 0; v < mesh.vertex_count(); ++v)
      if ((base.vertices.row(v) - center).norm() <= spec.bump->radius)
        for (int c = 0; c < 3; ++c) mesh.vertices(v, c) += noise * rng.normal();
  }

  TrainResult res = train(gen.cohort, small_model_cfg(96), small_train_cfg(150, 50, 13));
  REQUIRE_FALSE(res.diverged);

  // average per-point uncertainty over subjects, split by bump membership
  long m = res.model.tpl.points.rows();
  Vec scalar_acc = Vec::Zero(m);
  for (const auto& mesh : gen.cohort.meshes) {
    auto [mean_corr, umap] = estimate_uncertainty(res.model, mesh, 40, 3);
    scalar_acc += umap.per_point_scalar;
  }
  scalar_acc /= static_cast<double>(gen.cohort.meshes.size());

  std::vector<double> inside, outside;
  for (long pt = 0; pt < m; ++pt) {
    Eigen::RowVector3d unit = res.model.tpl.points.row(pt).normalized();
    ((unit - center).norm() <= spec.bump->radius ? inside : outside).push_back(scalar_acc(pt));
  }
  REQUIRE(inside.size() >= 5);
  REQUIRE(outside.size() >= 5);

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var_of = [&](const std::vector<double>& v, double mu) {
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
  };
  double mi = mean_of(inside), mo = mean_of(outside);
  double vi = var_of(inside, mi), vo = var_of(outside, mo);
  double se = std::sqrt(vi / static_cast<double>(inside.size()) + vo / static_cast<double>(outside.size()));
  double t = (mi - mo) / se;
  // Welch one-sided p via the t tail
  double nu = static_cast<double>(inside.size() + outside.size() - 2);
  double p_one_sided = t > 0 ? 0.5 * detail::t_test_two_sided(t, nu) : 1.0;
  CAPTURE(mi, mo, t, p_one_sided);
  CHECK(mi > mo);
  CHECK(p_one_sided < 0.05);
}
