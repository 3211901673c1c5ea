// ssmkit: build, evaluate and analyze probabilistic correspondence models
// from surface meshes. Subcommands: synth, train, infer, eval, uncertainty,
// analyze {modes, groupdiff, lda, classify}.

#include <CLI11.hpp>

#include <iostream>

#include "ssmkit/pipeline.hpp"

namespace {

std::vector<double> parse_steps(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(ssmkit::detail::parse_double(tok, "--steps"));
  }
  if (out.empty()) throw ssmkit::ValidationError("--steps: no values given");
  return out;
}

int fail_with_json(const std::string& kind, const std::string& message) {
  nlohmann::json err = {{"error", kind}, {"message", message}};
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"statistical shape modeling from surface meshes"};
  app.require_subcommand(1);

  ssmkit::pipeline::SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  synth->add_option("--spec", synth_args.spec_path, "cohort spec JSON")->required();
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();

  ssmkit::pipeline::TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a shape model");
  train->add_option("--manifest", train_args.manifest, "cohort manifest JSON")->required();
  train->add_option("--config", train_args.config, "model + training config JSON")->required();
  train->add_option("--out", train_args.out_dir, "run directory")->required();

  ssmkit::pipeline::InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "predict correspondences for a manifest");
  infer->add_option("--model", infer_args.model, "checkpoint file")->required();
  infer->add_option("--manifest", infer_args.manifest, "cohort manifest JSON")->required();
  infer->add_option("--out", infer_args.out_dir, "output directory")->required();

  ssmkit::pipeline::EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "distance and shape-model metrics");
  eval->add_option("--model", eval_args.model, "checkpoint file")->required();
  eval->add_option("--manifest", eval_args.manifest, "cohort manifest JSON")->required();
  eval->add_option("--out", eval_args.out_dir, "output directory")->required();
  eval->add_option("--specificity-samples", eval_args.specificity_samples,
                   "samples per specificity estimate");
  eval->add_option("--seed", eval_args.seed, "seed for specificity sampling");

  ssmkit::pipeline::UncertaintyArgs unc_args;
  auto* unc = app.add_subcommand("uncertainty", "aleatoric uncertainty maps and correlations");
  unc->add_option("--model", unc_args.model, "checkpoint file")->required();
  unc->add_option("--manifest", unc_args.manifest, "cohort manifest JSON")->required();
  unc->add_option("--out", unc_args.out_dir, "output directory")->required();
  unc->add_option("--samples", unc_args.samples, "posterior samples per subject");
  unc->add_option("--seed", unc_args.seed, "sampling seed");

  auto* analyze = app.add_subcommand("analyze", "downstream shape statistics");
  analyze->require_subcommand(1);

  ssmkit::pipeline::ModesArgs modes_args;
  std::string steps_csv = "-2,-1,0,1,2";
  auto* modes = analyze->add_subcommand("modes", "PCA modes of variation");
  modes->add_option("--particles", modes_args.particles_dir, "directory of .particles files")
      ->required();
  modes->add_option("--out", modes_args.out_dir, "output directory")->required();
  modes->add_option("--mode", modes_args.mode, "1-based mode index");
  modes->add_option("--steps", steps_csv, "comma-separated steps in standard deviations");

  ssmkit::pipeline::GroupDiffArgs gd_args;
  auto* groupdiff = analyze->add_subcommand("groupdiff", "pointwise group differences");
  groupdiff->add_option("--particles", gd_args.particles_dir, "directory of .particles files")
      ->required();
  groupdiff->add_option("--manifest", gd_args.manifest, "manifest with group labels")->required();
  groupdiff->add_option("--out", gd_args.out_dir, "output directory")->required();
  groupdiff->add_option("--permutations", gd_args.permutations, "permutation count");
  groupdiff->add_option("--q", gd_args.q, "FDR rate");
  groupdiff->add_option("--seed", gd_args.seed, "permutation seed");

  ssmkit::pipeline::LdaArgs lda_args;
  auto* lda = analyze->add_subcommand("lda", "LDA shape scores");
  lda->add_option("--particles", lda_args.particles_dir, "directory of .particles files")
      ->required();
  lda->add_option("--manifest", lda_args.manifest, "manifest with group labels")->required();
  lda->add_option("--out", lda_args.out_dir, "output directory")->required();

  ssmkit::pipeline::ClassifyArgs cls_args;
  auto* classify = analyze->add_subcommand("classify", "cross-validated correspondence classifier");
  classify->add_option("--particles", cls_args.particles_dir, "directory of .particles files")
      ->required();
  classify->add_option("--manifest", cls_args.manifest, "manifest with group labels")->required();
  classify->add_option("--out", cls_args.out_dir, "output directory")->required();
  classify->add_option("--folds", cls_args.folds, "cross-validation folds");
  classify->add_option("--seed", cls_args.seed, "fold and initialization seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) ssmkit::pipeline::run_synth(synth_args);
    if (*train) ssmkit::pipeline::run_train(train_args);
    if (*infer) ssmkit::pipeline::run_infer(infer_args);
    if (*eval) ssmkit::pipeline::run_eval(eval_args);
    if (*unc) ssmkit::pipeline::run_uncertainty(unc_args);
    if (*modes) {
      modes_args.steps = parse_steps(steps_csv);
      ssmkit::pipeline::run_analyze_modes(modes_args);
    }
    if (*groupdiff) ssmkit::pipeline::run_analyze_groupdiff(gd_args);
    if (*lda) ssmkit::pipeline::run_analyze_lda(lda_args);
    if (*classify) ssmkit::pipeline::run_analyze_classify(cls_args);
  } catch (const ssmkit::IoError& e) {
    return fail_with_json("io_error", e.what());
  } catch (const ssmkit::ValidationError& e) {
    return fail_with_json("validation_error", e.what());
  } catch (const ssmkit::NumericError& e) {
    return fail_with_json("numeric_error", e.what());
  } catch (const std::exception& e) {
    return fail_with_json("internal_error", e.what());
  }
  return 0;
}
