#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ssmkit/pipeline.hpp"

using namespace ssmkit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "ssmkit_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

int run_binary(const std::string& args, const fs::path& stderr_file) {
  std::string cmd = std::string(SSMKIT_BIN) + " " + args + " 2> " + stderr_file.string();
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

const std::string kTinySpec = R"({
  "family": "superellipsoid",
  "n_shapes": 8,
  "factor_ranges": [[0.8, 1.2], [0.8, 1.2], [0.8, 1.2]],
  "noise_sigma": 0.0,
  "seed": 5,
  "subdivisions": 1,
  "split_fractions": [0.75, 0.125, 0.125]
})";

const std::string kTinyTrainConfig = R"({
  "model": {
    "n_correspondences": 16,
    "encoder": {"k_neighbors": 5, "edgeconv_widths": [8, 12], "latent_dim": 4},
    "flow": {"latent_dim": 4, "n_layers": 2, "hidden": 6},
    "deformer": {"hidden": [12, 12], "latent_dim": 4}
  },
  "train": {
    "epochs": 6, "burn_in_epochs": 3, "batch_size": 4, "learning_rate": 0.002,
    "kl_weight": 0.001, "mask_ratio": 0.0, "template_update_every": 2,
    "template_samples": 20, "seed": 11
  }
})";

}  // namespace

TEST_CASE("full pipeline: synth, train, infer, eval, uncertainty") {
  fs::path root = fresh_dir("pipeline");
  write_text(root / "spec.json", kTinySpec);

  pipeline::run_synth({root / "spec.json", root / "cohort"});
  REQUIRE(fs::exists(root / "cohort/manifest.json"));
  REQUIRE(fs::exists(root / "cohort/factors.csv"));
  auto entries = load_manifest(root / "cohort/manifest.json");
  REQUIRE(entries.size() == 8);
  for (const auto& e : entries) CHECK(fs::exists(root / "cohort" / e.path));

  write_text(root / "train.json", kTinyTrainConfig);
  pipeline::run_train({root / "cohort/manifest.json", root / "train.json", root / "run"});
  REQUIRE(fs::exists(root / "run/checkpoint.json"));
  std::string log = slurp(root / "run/loss_log.csv");
  CHECK(log.rfind("epoch,chamfer,kl,val_chamfer", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 7);  // header + 6 epochs

  pipeline::run_infer({root / "run/checkpoint.json", root / "cohort/manifest.json", root / "pred"});
  for (const auto& e : entries)
    CHECK(fs::exists(root / "pred/particles" / (e.subject_id + ".particles")));
  auto first = io::load_particles(root / "pred/particles" / (entries[0].subject_id + ".particles"));
  CHECK(first.points.rows() == 16);

  pipeline::run_eval({root / "run/checkpoint.json", root / "cohort/manifest.json", root / "metrics",
                      20, 3});
  std::string per_subject = slurp(root / "metrics/per_subject.csv");
  CHECK(per_subject.rfind("subject_id,split,cd,p2m,s2s", 0) == 0);
  CHECK(std::count(per_subject.begin(), per_subject.end(), '\n') == 9);
  CHECK(fs::exists(root / "metrics/ssm_metrics.csv"));
  CHECK(fs::exists(root / "metrics/compactness.svg"));

  pipeline::run_uncertainty({root / "run/checkpoint.json", root / "cohort/manifest.json",
                             root / "unc", 10, 7});
  std::string scatter = slurp(root / "unc/scatter.csv");
  CHECK(std::count(scatter.begin(), scatter.end(), '\n') == 9);
  CHECK(fs::exists(root / "unc" / ("umap_" + entries[0].subject_id + ".csv")));
  CHECK(fs::exists(root / "unc/scatter.svg"));
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  fs::path root = fresh_dir("determinism");
  write_text(root / "spec.json", kTinySpec);

  pipeline::run_synth({root / "spec.json", root / "a"});
  pipeline::run_synth({root / "spec.json", root / "b"});
  CHECK(slurp(root / "a/manifest.json") == slurp(root / "b/manifest.json"));
  CHECK(slurp(root / "a/factors.csv") == slurp(root / "b/factors.csv"));
  CHECK(slurp(root / "a/meshes/shape_000.ply") == slurp(root / "b/meshes/shape_000.ply"));

  write_text(root / "train.json", kTinyTrainConfig);
  pipeline::run_train({root / "a/manifest.json", root / "train.json", root / "run_a"});
  pipeline::run_train({root / "b/manifest.json", root / "train.json", root / "run_b"});
  CHECK(slurp(root / "run_a/loss_log.csv") == slurp(root / "run_b/loss_log.csv"));

  pipeline::run_infer({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "pred_a"});
  pipeline::run_infer({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "pred_b"});
  CHECK(slurp(root / "pred_a/particles/shape_000.particles") ==
        slurp(root / "pred_b/particles/shape_000.particles"));
  CHECK(slurp(root / "pred_a/summary.csv") == slurp(root / "pred_b/summary.csv"));

  pipeline::run_eval({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "m_a", 20, 3});
  pipeline::run_eval({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "m_b", 20, 3});
  CHECK(slurp(root / "m_a/per_subject.csv") == slurp(root / "m_b/per_subject.csv"));
  CHECK(slurp(root / "m_a/ssm_metrics.csv") == slurp(root / "m_b/ssm_metrics.csv"));

  pipeline::run_uncertainty({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "u_a",
                             10, 7});
  pipeline::run_uncertainty({root / "run_a/checkpoint.json", root / "a/manifest.json", root / "u_b",
                             10, 7});
  CHECK(slurp(root / "u_a/scatter.csv") == slurp(root / "u_b/scatter.csv"));
}

TEST_CASE("analyze commands on ground-truth particles") {
  fs::path root = fresh_dir("analyze");
  // bumped cohort with labels; particles are the mesh vertices themselves
  write_text(root / "spec.json", R"({
    "family": "bumped_ellipsoid",
    "n_shapes": 12,
    "factor_ranges": [[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]],
    "bump": {"center": [1, 0, 0], "radius": 0.44, "amplitude_range": [0.0, 0.3]},
    "noise_sigma": 0.01,
    "seed": 9,
    "subdivisions": 1,
    "split_fractions": [1.0, 0.0, 0.0]
  })");
  pipeline::run_synth({root / "spec.json", root / "cohort"});
  auto entries = load_manifest(root / "cohort/manifest.json");
  REQUIRE(entries.size() == 12);
  int pathology = 0;
  for (const auto& e : entries)
    if (e.group_label == "pathology") ++pathology;
  REQUIRE(pathology >= 3);
  REQUIRE(pathology <= 9);

  fs::create_directories(root / "particles");
  for (const auto& e : entries) {
    SurfaceMesh mesh = load_mesh(root / "cohort" / e.path);
    CorrespondenceSet corr;
    corr.points = mesh.vertices;
    io::save_particles(corr, root / "particles" / (e.subject_id + ".particles"));
  }

  pipeline::ModesArgs modes{root / "particles", root / "modes", 1, {-1.0, 0.0, 1.0}};
  pipeline::run_analyze_modes(modes);
  CHECK(fs::exists(root / "modes/modes.csv"));
  CHECK(fs::exists(root / "modes/mode1_step0.particles"));
  CHECK(fs::exists(root / "modes/eigenvalues.csv"));

  pipeline::run_analyze_groupdiff({root / "particles", root / "cohort/manifest.json",
                                   root / "gd", 200, 0.05, 3});
  std::string gd = slurp(root / "gd/group_difference.csv");
  CHECK(gd.rfind("point,diff_x,diff_y,diff_z,diff_norm,p,significant,regularized", 0) == 0);
  CHECK(std::count(gd.begin(), gd.end(), '\n') == 43);  // header + 42 vertices

  pipeline::run_analyze_lda({root / "particles", root / "cohort/manifest.json", root / "lda"});
  CHECK(fs::exists(root / "lda/lda_scores.csv"));
  CHECK(fs::exists(root / "lda/lda_fit.csv"));
  CHECK(fs::exists(root / "lda/lda_scores.svg"));

  pipeline::run_analyze_classify({root / "particles", root / "cohort/manifest.json",
                                  root / "cls", 3, 5});
  std::string cls = slurp(root / "cls/classification.csv");
  CHECK(cls.rfind("metric,class,mean,std", 0) == 0);

  SECTION("analyze outputs are deterministic") {
    pipeline::run_analyze_groupdiff({root / "particles", root / "cohort/manifest.json",
                                     root / "gd2", 200, 0.05, 3});
    CHECK(slurp(root / "gd/group_difference.csv") == slurp(root / "gd2/group_difference.csv"));
    pipeline::run_analyze_classify({root / "particles", root / "cohort/manifest.json",
                                    root / "cls2", 3, 5});
    CHECK(slurp(root / "cls/classification.csv") == slurp(root / "cls2/classification.csv"));
  }
}

TEST_CASE("empty manifest infers nothing but succeeds") {
  fs::path root = fresh_dir("empty");
  write_text(root / "spec.json", kTinySpec);
  pipeline::run_synth({root / "spec.json", root / "cohort"});
  write_text(root / "train.json", kTinyTrainConfig);
  pipeline::run_train({root / "cohort/manifest.json", root / "train.json", root / "run"});

  write_text(root / "empty_manifest.json", "[]");
  pipeline::run_infer({root / "run/checkpoint.json", root / "empty_manifest.json", root / "pred"});
  std::string summary = slurp(root / "pred/summary.csv");
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1);  // header only
}

TEST_CASE("the binary reports machine-readable errors and nonzero exit") {
  fs::path root = fresh_dir("binary_errors");
  SECTION("missing manifest") {
    int code = run_binary("infer --model nope.json --manifest missing_manifest.json --out " +
                              (root / "out").string(),
                          root / "stderr.txt");
    CHECK(code != 0);
    nlohmann::json err = nlohmann::json::parse(slurp(root / "stderr.txt"));
    CHECK(err.contains("error"));
    CHECK(err["message"].get<std::string>().find("nope.json") != std::string::npos);
  }
  SECTION("invalid cohort spec") {
    write_text(root / "bad_spec.json", R"({"family": "dodecahedron"})");
    int code = run_binary("synth --spec " + (root / "bad_spec.json").string() + " --out " +
                              (root / "out").string(),
                          root / "stderr.txt");
    CHECK(code != 0);
    nlohmann::json err = nlohmann::json::parse(slurp(root / "stderr.txt"));
    CHECK(err["error"] == "validation_error");
  }
  SECTION("successful binary run") {
    write_text(root / "spec.json", kTinySpec);
    int code = run_binary("synth --spec " + (root / "spec.json").string() + " --out " +
                              (root / "cohort").string(),
                          root / "stderr.txt");
    CHECK(code == 0);
    CHECK(fs::exists(root / "cohort/manifest.json"));
  }
}
