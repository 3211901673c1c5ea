#pragma once

// Command layer behind the CLI: each run_* writes a self-contained run
// directory (resolved config snapshot, CSV outputs, figures). Identical
// config + seed reproduces byte-identical CSV outputs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "ssmkit/analysis.hpp"
#include "ssmkit/io/csv.hpp"
#include "ssmkit/io/particles.hpp"
#include "ssmkit/io/svg.hpp"
#include "ssmkit/mesh_io.hpp"
#include "ssmkit/metrics.hpp"
#include "ssmkit/synthetic.hpp"
#include "ssmkit/training.hpp"
#include "ssmkit/uncertainty.hpp"

namespace ssmkit::pipeline {

namespace fs = std::filesystem;

inline void write_snapshot(const fs::path& out_dir, const nlohmann::json& config) {
  std::ofstream out(out_dir / "config_snapshot.json");
  if (!out) throw IoError("cannot write config snapshot in " + out_dir.string());
  out << config.dump(2) << "\n";
}

// ---- synth ----

inline nlohmann::json to_json(const CohortSpec& spec) {
  nlohmann::json j = {{"family", spec.family == ShapeFamily::superellipsoid ? "superellipsoid"
                                                                            : "bumped_ellipsoid"},
                      {"n_shapes", spec.n_shapes},
                      {"factor_ranges", spec.factor_ranges},
                      {"noise_sigma", spec.noise_sigma},
                      {"seed", spec.seed},
                      {"subdivisions", spec.subdivisions},
                      {"split_fractions", spec.split_fractions}};
  if (spec.bump) {
    j["bump"] = {{"center", {spec.bump->center(0), spec.bump->center(1), spec.bump->center(2)}},
                 {"radius", spec.bump->radius},
                 {"amplitude_range", spec.bump->amplitude_range}};
  }
  return j;
}

inline CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec spec;
  std::string family = j.value("family", "superellipsoid");
  if (family == "superellipsoid")
    spec.family = ShapeFamily::superellipsoid;
  else if (family == "bumped_ellipsoid")
    spec.family = ShapeFamily::bumped_ellipsoid;
  else
    throw ValidationError("cohort spec: unknown family '" + family + "'");
  spec.n_shapes = j.value("n_shapes", spec.n_shapes);
  if (j.contains("factor_ranges"))
    spec.factor_ranges = j["factor_ranges"].get<std::vector<std::pair<double, double>>>();
  if (j.contains("bump")) {
    BumpSpec bump;
    auto c = j["bump"].value("center", std::vector<double>{1.0, 0.0, 0.0});
    require(c.size() == 3, "cohort spec: bump center must have three components");
    bump.center << c[0], c[1], c[2];
    bump.radius = j["bump"].value("radius", bump.radius);
    if (j["bump"].contains("amplitude_range"))
      bump.amplitude_range = j["bump"]["amplitude_range"].get<std::pair<double, double>>();
    spec.bump = bump;
  }
  spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
  spec.seed = j.value("seed", spec.seed);
  spec.subdivisions = j.value("subdivisions", spec.subdivisions);
  if (j.contains("split_fractions")) {
    auto f = j["split_fractions"].get<std::vector<double>>();
    require(f.size() == 3, "cohort spec: split_fractions must have three entries");
    spec.split_fractions = {f[0], f[1], f[2]};
  }
  return spec;
}

struct SynthArgs {
  fs::path spec_path;
  fs::path out_dir;
};

inline void run_synth(const SynthArgs& args) {
  std::ifstream in(args.spec_path);
  if (!in) throw IoError("cannot open cohort spec: " + args.spec_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cohort spec parse error: " + std::string(e.what()));
  }
  CohortSpec spec = cohort_spec_from_json(j);
  GeneratedCohort gen = generate_cohort(spec);

  fs::create_directories(args.out_dir / "meshes");
  write_snapshot(args.out_dir, to_json(spec));

  std::vector<std::string> labels;
  if (spec.family == ShapeFamily::bumped_ellipsoid) labels = assign_groups(gen);

  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < gen.cohort.meshes.size(); ++i) {
    const SurfaceMesh& mesh = gen.cohort.meshes[i];
    std::string rel = "meshes/" + mesh.subject_id + ".ply";
    save_mesh(mesh, args.out_dir / rel, MeshFormat::ply, PlyEncoding::binary);
    ManifestEntry e;
    e.path = rel;
    e.subject_id = mesh.subject_id;
    e.split = gen.cohort.split[i];
    if (!labels.empty()) e.group_label = labels[i];
    entries.push_back(e);
  }
  save_manifest(entries, args.out_dir / "manifest.json");

  std::vector<std::string> header{"subject_id", "split"};
  for (const auto& name : gen.factor_names) header.push_back(name);
  if (!labels.empty()) header.push_back("group_label");
  io::CsvWriter csv(header);
  for (long i = 0; i < gen.factors.rows(); ++i) {
    csv.cell(gen.cohort.meshes[static_cast<std::size_t>(i)].subject_id);
    csv.cell(to_string(gen.cohort.split[static_cast<std::size_t>(i)]));
    for (long c = 0; c < gen.factors.cols(); ++c) csv.cell(gen.factors(i, c));
    if (!labels.empty()) csv.cell(labels[static_cast<std::size_t>(i)]);
    csv.end_row();
  }
  csv.write(args.out_dir / "factors.csv");
}

// ---- train ----

struct TrainArgs {
  fs::path manifest;
  fs::path config;
  fs::path out_dir;
};

inline void run_train(const TrainArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw IoError("cannot open training config: " + args.config.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("training config parse error: " + std::string(e.what()));
  }
  ModelConfig model_cfg = j.contains("model") ? model_config_from_json(j["model"]) : ModelConfig{};
  TrainConfig train_cfg = j.contains("train") ? train_config_from_json(j["train"]) : TrainConfig{};

  Cohort cohort = load_cohort(args.manifest);
  fs::create_directories(args.out_dir);
  nlohmann::json snapshot = {{"command", "train"},
                             {"manifest", args.manifest.string()},
                             {"model", ssmkit::to_json(model_cfg)},
                             {"train", ssmkit::to_json(train_cfg)}};
  write_snapshot(args.out_dir, snapshot);

  TrainResult result = train(cohort, model_cfg, train_cfg);
  for (const auto& w : result.warnings)
    std::cerr << "warning: low bounding-box overlap with template for subject " << w << "\n";

  save_checkpoint(result.model, args.out_dir / "checkpoint.json");

  io::CsvWriter log({"epoch", "chamfer", "kl", "val_chamfer"});
  for (const auto& row : result.log) {
    log.cell(row.epoch).cell(row.chamfer).cell(row.kl).cell(row.val_chamfer);
    log.end_row();
  }
  log.write(args.out_dir / "loss_log.csv");

  nlohmann::json summary = {{"best_epoch", result.best_epoch},
                            {"diverged", result.diverged},
                            {"epochs_run", result.log.size()}};
  std::ofstream sum(args.out_dir / "summary.json");
  sum << summary.dump(2) << "\n";
  if (result.diverged)
    std::cerr << "warning: training diverged; checkpoint.json is the last good model\n";
}

// ---- infer ----

/// Posterior-mean prediction: encode, decode, project.
inline CorrespondenceSet predict(const ShapeModel& model, const SurfaceMesh& mesh) {
  LatentPosterior post = encode(mesh, model.cfg.encoder, model.encoder);
  CorrespondenceSet corr =
      deform_template(model.tpl, post.mu, model.cfg.deformer, model.deformer, mesh.subject_id);
  return project_to_surface(corr, mesh, model.projection);
}

struct InferArgs {
  fs::path model;
  fs::path manifest;
  fs::path out_dir;
};

inline void run_infer(const InferArgs& args) {
  ShapeModel model = load_checkpoint(args.model);
  auto entries = load_manifest(args.manifest);
  fs::create_directories(args.out_dir / "particles");
  write_snapshot(args.out_dir, {{"command", "infer"},
                                {"model", args.model.string()},
                                {"manifest", args.manifest.string()}});

  if (entries.empty())
    std::cerr << "warning: manifest is empty; nothing to infer\n";

  io::CsvWriter summary({"subject_id", "status", "detail"});
  auto base = args.manifest.parent_path();
  long failures = 0;
  for (const auto& e : entries) {
    try {
      fs::path mesh_path = fs::path(e.path).is_relative() ? base / e.path : fs::path(e.path);
      SurfaceMesh mesh = load_mesh(mesh_path);
      mesh.subject_id = e.subject_id;
      CorrespondenceSet corr = predict(model, mesh);
      std::string rel = "particles/" + e.subject_id + ".particles";
      io::save_particles(corr, args.out_dir / rel);
      summary.cell(e.subject_id).cell("ok").cell(rel);
    } catch (const Error& err) {
      ++failures;
      summary.cell(e.subject_id).cell("failed").cell(err.what());
    }
    summary.end_row();
  }
  summary.write(args.out_dir / "summary.csv");
  if (failures > 0)
    std::cerr << "warning: " << failures << " subject(s) failed; see summary.csv\n";
}

// ---- eval ----

struct EvalArgs {
  fs::path model;
  fs::path manifest;
  fs::path out_dir;
  int specificity_samples = 100;
  std::uint64_t seed = 0;
};

inline void run_eval(const EvalArgs& args) {
  ShapeModel model = load_checkpoint(args.model);
  Cohort cohort = load_cohort(args.manifest);
  require(!cohort.meshes.empty(), "eval: manifest is empty");
  fs::create_directories(args.out_dir);
  write_snapshot(args.out_dir, {{"command", "eval"},
                                {"model", args.model.string()},
                                {"manifest", args.manifest.string()},
                                {"specificity_samples", args.specificity_samples},
                                {"seed", args.seed}});

  std::vector<CorrespondenceSet> preds;
  preds.reserve(cohort.meshes.size());
  for (const auto& mesh : cohort.meshes) preds.push_back(predict(model, mesh));

  auto train_idx = cohort.indices(Split::train);
  require(!train_idx.empty(), "eval: manifest has no training subjects");

  // mean particles over the training split
  Mat mean_particles = Mat::Zero(model.tpl.points.rows(), 3);
  for (int i : train_idx) mean_particles += preds[static_cast<std::size_t>(i)].points;
  mean_particles /= static_cast<double>(train_idx.size());
  CorrespondenceSet mean_corr;
  mean_corr.points = mean_particles;
  mean_corr.subject_id = "mean";

  // mean mesh: warp the medoid reference from its particles to the mean
  const SurfaceMesh& reference = select_medoid(cohort);
  const CorrespondenceSet* ref_pred = nullptr;
  for (std::size_t i = 0; i < cohort.meshes.size(); ++i)
    if (&cohort.meshes[i] == &reference) ref_pred = &preds[i];
  SurfaceMesh mean_mesh = reconstruct_mesh(mean_corr, *ref_pred, reference);
  mean_mesh.subject_id = "mean";

  io::CsvWriter per_subject({"subject_id", "split", "cd", "p2m", "s2s"});
  for (std::size_t i = 0; i < cohort.meshes.size(); ++i) {
    const SurfaceMesh& mesh = cohort.meshes[i];
    double cd = chamfer_distance(mesh.vertices, preds[i].points, ChamferNorm::L2);
    double p2m = point_to_mesh(preds[i].points, mesh);
    SurfaceMesh recon = reconstruct_mesh(preds[i], mean_corr, mean_mesh);
    double s2s = surface_to_surface(mesh, recon);
    per_subject.cell(mesh.subject_id).cell(to_string(cohort.split[i])).cell(cd).cell(p2m).cell(s2s);
    per_subject.end_row();
  }
  per_subject.write(args.out_dir / "per_subject.csv");

  // SSM metric curves on the training split, held-out = test (fallback val/train)
  std::vector<CorrespondenceSet> train_preds;
  for (int i : train_idx) train_preds.push_back(preds[static_cast<std::size_t>(i)]);
  CorrespondenceMatrix train_matrix = stack_correspondences(train_preds);
  PcaModel pca = fit_pca(train_matrix);

  auto held_idx = cohort.indices(Split::test);
  if (held_idx.empty()) held_idx = cohort.indices(Split::val);
  if (held_idx.empty()) held_idx = train_idx;
  std::vector<CorrespondenceSet> held_preds;
  for (int i : held_idx) held_preds.push_back(preds[static_cast<std::size_t>(i)]);
  CorrespondenceMatrix held_matrix = stack_correspondences(held_preds);

  int max_modes = static_cast<int>(std::min<long>(30, pca.rank()));
  io::CsvWriter curves({"mode", "compactness", "generalization", "specificity"});
  io::Series comp_s{"compactness", "#1f77b4", {}, {}, false};
  io::Series gen_s{"generalization", "#d62728", {}, {}, false};
  io::Series spec_s{"specificity", "#2ca02c", {}, {}, false};
  for (int m = 1; m <= max_modes; ++m) {
    double c = compactness(pca, m);
    double g = generalization(pca, held_matrix, m);
    double s = specificity(pca, train_matrix, m, args.specificity_samples,
                           mix_seed(args.seed, static_cast<std::uint64_t>(m)));
    curves.cell(m).cell(c).cell(g).cell(s);
    curves.end_row();
    comp_s.x.push_back(m);
    comp_s.y.push_back(c);
    gen_s.x.push_back(m);
    gen_s.y.push_back(g);
    spec_s.x.push_back(m);
    spec_s.y.push_back(s);
  }
  curves.write(args.out_dir / "ssm_metrics.csv");

  io::SvgChart comp_chart("Compactness", "modes", "cumulative explained variance");
  comp_chart.add(comp_s);
  comp_chart.write(args.out_dir / "compactness.svg");
  io::SvgChart gen_chart("Generalization", "modes", "reconstruction error (mm)");
  gen_chart.add(gen_s);
  gen_chart.write(args.out_dir / "generalization.svg");
  io::SvgChart spec_chart("Specificity", "modes", "distance to nearest training shape (mm)");
  spec_chart.add(spec_s);
  spec_chart.write(args.out_dir / "specificity.svg");
}

// ---- uncertainty ----

struct UncertaintyArgs {
  fs::path model;
  fs::path manifest;
  fs::path out_dir;
  int samples = 100;
  std::uint64_t seed = 0;
};

inline void run_uncertainty(const UncertaintyArgs& args) {
  ShapeModel model = load_checkpoint(args.model);
  Cohort cohort = load_cohort(args.manifest);
  require(!cohort.meshes.empty(), "uncertainty: manifest is empty");
  fs::create_directories(args.out_dir);
  write_snapshot(args.out_dir, {{"command", "uncertainty"},
                                {"model", args.model.string()},
                                {"manifest", args.manifest.string()},
                                {"samples", args.samples},
                                {"seed", args.seed}});

  io::CsvWriter scatter({"subject_id", "scalar_uncertainty", "cd", "p2m"});
  io::Series pts{"subjects", "#1f77b4", {}, {}, true};
  for (std::size_t i = 0; i < cohort.meshes.size(); ++i) {
    const SurfaceMesh& mesh = cohort.meshes[i];
    auto [mean_corr, umap] = estimate_uncertainty(model, mesh, args.samples,
                                                  mix_seed(args.seed, static_cast<std::uint64_t>(i)));
    CorrespondenceSet pred = predict(model, mesh);
    double cd = chamfer_distance(mesh.vertices, pred.points, ChamferNorm::L2);
    double p2m = point_to_mesh(pred.points, mesh);

    io::CsvWriter umap_csv({"point", "var_x", "var_y", "var_z", "scalar"});
    for (long p = 0; p < umap.per_point_variance.rows(); ++p) {
      umap_csv.cell(p)
          .cell(umap.per_point_variance(p, 0))
          .cell(umap.per_point_variance(p, 1))
          .cell(umap.per_point_variance(p, 2))
          .cell(umap.per_point_scalar(p));
      umap_csv.end_row();
    }
    umap_csv.write(args.out_dir / ("umap_" + mesh.subject_id + ".csv"));

    scatter.cell(mesh.subject_id).cell(umap.sample_scalar).cell(cd).cell(p2m);
    scatter.end_row();
    pts.x.push_back(umap.sample_scalar);
    pts.y.push_back(cd);
  }
  scatter.write(args.out_dir / "scatter.csv");
  io::SvgChart chart("Aleatoric uncertainty vs Chamfer distance", "sample uncertainty (mm^2)",
                     "CD (mm^2)");
  chart.add(pts);
  chart.write(args.out_dir / "scatter.svg");
}

// ---- analyze ----

inline std::vector<CorrespondenceSet> load_particles_for(const std::vector<ManifestEntry>& entries,
                                                         const fs::path& particles_dir) {
  std::vector<CorrespondenceSet> out;
  for (const auto& e : entries) {
    fs::path p = particles_dir / (e.subject_id + ".particles");
    CorrespondenceSet corr = io::load_particles(p);
    corr.subject_id = e.subject_id;
    out.push_back(std::move(corr));
  }
  return out;
}

struct ModesArgs {
  fs::path particles_dir;
  fs::path out_dir;
  int mode = 1;
  std::vector<double> steps{-2.0, -1.0, 0.0, 1.0, 2.0};
};

inline void run_analyze_modes(const ModesArgs& args) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(args.particles_dir))
    if (entry.path().extension() == ".particles") files.push_back(entry.path());
  require(files.size() >= 2, "analyze modes: need at least two particles files");
  std::sort(files.begin(), files.end());
  std::vector<CorrespondenceSet> sets;
  for (const auto& f : files) sets.push_back(io::load_particles(f));

  fs::create_directories(args.out_dir);
  nlohmann::json snap = {{"command", "analyze modes"},
                         {"particles", args.particles_dir.string()},
                         {"mode", args.mode},
                         {"steps", args.steps}};
  write_snapshot(args.out_dir, snap);

  PcaModel pca = fit_pca(stack_correspondences(sets));
  auto walk = modes_of_variation(pca, args.mode, args.steps);

  io::CsvWriter csv({"mode", "step", "file"});
  for (std::size_t i = 0; i < walk.size(); ++i) {
    std::string rel = "mode" + std::to_string(args.mode) + "_step" + fmt_double(args.steps[i]) +
                      ".particles";
    io::save_particles(walk[i], args.out_dir / rel);
    csv.cell(args.mode).cell(args.steps[i]).cell(rel);
    csv.end_row();
  }
  csv.write(args.out_dir / "modes.csv");

  io::CsvWriter ev({"mode", "eigenvalue"});
  for (long i = 0; i < pca.rank(); ++i) {
    ev.cell(static_cast<int>(i + 1)).cell(pca.eigenvalues(i));
    ev.end_row();
  }
  ev.write(args.out_dir / "eigenvalues.csv");
}

inline std::vector<std::string> labels_for(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> labels;
  for (const auto& e : entries) {
    require(!e.group_label.empty(),
            "manifest entry '" + e.subject_id + "' is missing a group_label");
    labels.push_back(e.group_label);
  }
  return labels;
}

struct GroupDiffArgs {
  fs::path particles_dir;
  fs::path manifest;
  fs::path out_dir;
  int permutations = 1000;
  double q = 0.05;
  std::uint64_t seed = 0;
};

inline void run_analyze_groupdiff(const GroupDiffArgs& args) {
  auto entries = load_manifest(args.manifest);
  auto sets = load_particles_for(entries, args.particles_dir);
  auto labels = labels_for(entries);
  fs::create_directories(args.out_dir);
  write_snapshot(args.out_dir, {{"command", "analyze groupdiff"},
                                {"particles", args.particles_dir.string()},
                                {"manifest", args.manifest.string()},
                                {"permutations", args.permutations},
                                {"q", args.q},
                                {"seed", args.seed}});

  auto res = group_difference(stack_correspondences(sets), labels, args.permutations, args.q,
                              args.seed);
  io::CsvWriter csv({"point", "diff_x", "diff_y", "diff_z", "diff_norm", "p", "significant",
                     "regularized"});
  for (long p = 0; p < res.p_values.size(); ++p) {
    csv.cell(p)
        .cell(res.mean_diff(p, 0))
        .cell(res.mean_diff(p, 1))
        .cell(res.mean_diff(p, 2))
        .cell(res.mean_diff.row(p).norm())
        .cell(res.p_values(p))
        .cell(res.significant[static_cast<std::size_t>(p)] ? 1 : 0)
        .cell(res.regularized[static_cast<std::size_t>(p)] ? 1 : 0);
    csv.end_row();
  }
  csv.write(args.out_dir / "group_difference.csv");
}

struct LdaArgs {
  fs::path particles_dir;
  fs::path manifest;
  fs::path out_dir;
};

inline void run_analyze_lda(const LdaArgs& args) {
  auto entries = load_manifest(args.manifest);
  auto sets = load_particles_for(entries, args.particles_dir);
  auto labels = labels_for(entries);
  fs::create_directories(args.out_dir);
  write_snapshot(args.out_dir, {{"command", "analyze lda"},
                                {"particles", args.particles_dir.string()},
                                {"manifest", args.manifest.string()}});

  auto res = lda_scores(stack_correspondences(sets), labels);
  io::CsvWriter csv({"subject_id", "group", "score"});
  for (std::size_t i = 0; i < entries.size(); ++i) {
    csv.cell(entries[i].subject_id).cell(labels[i]).cell(res.scores(static_cast<long>(i)));
    csv.end_row();
  }
  csv.write(args.out_dir / "lda_scores.csv");

  io::CsvWriter fit({"group", "mean", "std"});
  fit.cell(res.control_label).cell(res.control_fit_mean).cell(res.control_fit_std);
  fit.end_row();
  fit.cell(res.pathology_label).cell(res.pathology_fit_mean).cell(res.pathology_fit_std);
  fit.end_row();
  fit.write(args.out_dir / "lda_fit.csv");

  // fitted-density curves over the score range
  io::Series ctrl{res.control_label, "#1f77b4", {}, {}, false};
  io::Series path{res.pathology_label, "#d62728", {}, {}, false};
  double lo = res.scores.minCoeff() - 0.5, hi = res.scores.maxCoeff() + 0.5;
  auto gauss = [](double x, double m, double s) {
    if (s <= 0.0) return 0.0;
    double z = (x - m) / s;
    return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
  };
  for (int i = 0; i <= 200; ++i) {
    double x = lo + (hi - lo) * i / 200.0;
    ctrl.x.push_back(x);
    ctrl.y.push_back(gauss(x, res.control_fit_mean, res.control_fit_std));
    path.x.push_back(x);
    path.y.push_back(gauss(x, res.pathology_fit_mean, res.pathology_fit_std));
  }
  io::SvgChart chart("LDA shape scores", "score", "density");
  chart.add(ctrl);
  chart.add(path);
  chart.write(args.out_dir / "lda_scores.svg");
}

struct ClassifyArgs {
  fs::path particles_dir;
  fs::path manifest;
  fs::path out_dir;
  int folds = 5;
  std::uint64_t seed = 0;
};

inline void run_analyze_classify(const ClassifyArgs& args) {
  auto entries = load_manifest(args.manifest);
  auto sets = load_particles_for(entries, args.particles_dir);
  auto labels = labels_for(entries);
  fs::create_directories(args.out_dir);
  write_snapshot(args.out_dir, {{"command", "analyze classify"},
                                {"particles", args.particles_dir.string()},
                                {"manifest", args.manifest.string()},
                                {"folds", args.folds},
                                {"seed", args.seed}});

  auto rep = classify_correspondences(stack_correspondences(sets), labels, args.folds, args.seed);
  io::CsvWriter csv({"metric", "class", "mean", "std"});
  csv.cell("accuracy").cell("all").cell(rep.accuracy_mean).cell(rep.accuracy_std);
  csv.end_row();
  for (std::size_t c = 0; c < rep.classes.size(); ++c) {
    csv.cell("f1").cell(rep.classes[c]).cell(rep.f1_mean(static_cast<long>(c))).cell(rep.f1_std(static_cast<long>(c)));
    csv.end_row();
  }
  csv.write(args.out_dir / "classification.csv");
}

}  // namespace ssmkit::pipeline
