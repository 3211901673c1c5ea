#pragma once

// End-to-end optimization of encoder, flow and deformer under the dpVAE
// objective: Chamfer reconstruction plus a single-sample Monte-Carlo KL
// between the encoder posterior and the flow prior. Includes vertex
// masking/perturbation augmentation, burn-in, periodic data-informed
// template updates and checkpointing.

#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "ssmkit/deformer.hpp"
#include "ssmkit/detail/base64.hpp"
#include "ssmkit/encoder.hpp"
#include "ssmkit/flow_prior.hpp"
#include "ssmkit/mesh_core.hpp"
#include "ssmkit/optim.hpp"

namespace ssmkit {

struct ModelConfig {
  int n_correspondences = 256;
  EncoderConfig encoder;
  FlowConfig flow;
  DeformerConfig deformer;
  double proj_sigma_scale = 0.05;  // sigma = scale * template bbox diagonal
};

struct TrainConfig {
  int epochs = 300;
  int burn_in_epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double kl_weight = 1e-3;
  int kl_warmup_epochs = 10;  // linear ramp after burn-in
  double mask_ratio = 0.1;
  double perturb_sigma = 0.0;  // mm
  int template_update_every = 25;
  int template_samples = 500;  // S_t
  std::uint64_t seed = 0;
};

inline void validate_config(const TrainConfig& cfg) {
  require(cfg.epochs >= 1, "train config: epochs must be >= 1");
  require(cfg.burn_in_epochs >= 0 && cfg.burn_in_epochs < cfg.epochs,
          "train config: burn_in_epochs must be < epochs");
  require(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
  require(cfg.learning_rate >= 0 && cfg.kl_weight >= 0 && cfg.perturb_sigma >= 0,
          "train config: rates and sigmas must be >= 0");
  require(cfg.mask_ratio >= 0 && cfg.mask_ratio < 1, "train config: mask_ratio in [0, 1)");
  require(cfg.template_samples >= 1, "train config: template_samples must be >= 1");
}

struct ShapeModel {
  ModelConfig cfg;
  EncoderParams encoder;
  FlowPrior flow;
  DeformerParams deformer;
  TemplatePointCloud tpl;
  ProjectionConfig projection;
  int epoch = 0;
};

inline std::vector<NamedParam> named_params(ShapeModel& model) {
  std::vector<NamedParam> out;
  collect_params(model.encoder, "encoder.", out);
  collect_params(model.flow, "flow.", out);
  collect_params(model.deformer, "deformer.", out);
  return out;
}

/// Fresh model around an initial template; latent dimensions must agree
/// across the three networks.
inline ShapeModel make_model(ModelConfig cfg, TemplatePointCloud tpl) {
  require(cfg.encoder.latent_dim == cfg.flow.latent_dim &&
              cfg.flow.latent_dim == cfg.deformer.latent_dim,
          "model config: encoder/flow/deformer latent dimensions differ");
  require(tpl.points.rows() == cfg.n_correspondences,
          "model config: template size does not match n_correspondences");
  ShapeModel model;
  model.cfg = cfg;
  model.encoder = make_encoder(cfg.encoder);
  model.flow = make_flow(cfg.flow);
  model.deformer = make_deformer(cfg.deformer);
  model.tpl = std::move(tpl);
  Eigen::RowVector3d lo = model.tpl.points.colwise().minCoeff();
  Eigen::RowVector3d hi = model.tpl.points.colwise().maxCoeff();
  model.projection.sigma = cfg.proj_sigma_scale * (hi - lo).norm();
  require(model.projection.sigma > 0.0, "model config: degenerate template bounding box");
  return model;
}

struct ModelVars {
  EncoderVars enc;
  FlowVars flow;
  DeformerVars dec;
  std::vector<ad::Var> flat;  // aligned with named_params order
};

inline ModelVars lift(ad::Tape& tape, const ShapeModel& model) {
  ModelVars v;
  v.enc = lift(tape, model.encoder);
  v.flow = lift(tape, model.flow);
  v.dec = lift(tape, model.deformer);
  for (std::size_t l = 0; l < v.enc.w.size(); ++l) {
    v.flat.push_back(v.enc.w[l]);
    v.flat.push_back(v.enc.b[l]);
  }
  v.flat.push_back(v.enc.w_mu);
  v.flat.push_back(v.enc.b_mu);
  v.flat.push_back(v.enc.w_ls);
  v.flat.push_back(v.enc.b_ls);
  for (const auto& layer : v.flow.layers) {
    v.flat.push_back(layer.w1);
    v.flat.push_back(layer.b1);
    v.flat.push_back(layer.ws);
    v.flat.push_back(layer.bs);
    v.flat.push_back(layer.wt);
    v.flat.push_back(layer.bt);
  }
  for (std::size_t l = 0; l < v.dec.w.size(); ++l) {
    v.flat.push_back(v.dec.w[l]);
    v.flat.push_back(v.dec.b[l]);
  }
  return v;
}

struct LossParts {
  double loss = 0.0;
  double chamfer = 0.0;
  double kl = 0.0;
};

namespace detail {

struct ObjectiveGraph {
  ad::Var loss, chamfer, kl;
};

/// Builds the full objective graph. `target` supplies the Chamfer vertices;
/// `encoder_input` is the (possibly augmented) mesh the encoder sees.
inline ObjectiveGraph objective_graph(ad::Tape& tape, const ShapeModel& model,
                                      const SurfaceMesh& target, const SurfaceMesh& encoder_input,
                                      const ModelVars& vars, const Vec& eps, double kl_weight) {
  int L = model.cfg.encoder.latent_dim;
  require(eps.size() == L, "objective: eps dimension mismatch");

  PosteriorVars post = encode_tape(tape, encoder_input, model.cfg.encoder, vars.enc);
  ad::Var eps_row = tape.leaf(eps.transpose());
  ad::Var z = tape.add(post.mu, tape.cmul(eps_row, post.sigma));

  // log q(z | x) for the diagonal Gaussian posterior, z on the tape
  ad::Var delta = tape.cdiv(tape.sub(z, post.mu), post.sigma);
  ad::Var log_q = tape.add_scalar(
      tape.sub(tape.scale(tape.sum(tape.square(delta)), -0.5), tape.sum(tape.log_(post.sigma))),
      -0.5 * L * std::log(2.0 * M_PI));
  ad::Var log_p = flow_log_prob_tape(tape, model.flow, vars.flow, z);
  ad::Var kl = tape.sub(log_q, log_p);

  ad::Var corr = deform_template_tape(tape, model.tpl, z, vars.dec);
  ad::Var proj = project_to_surface_tape(tape, corr, tape.leaf(target.vertices),
                                         model.projection.sigma);
  ad::Var chamfer = chamfer_distance_tape(tape, tape.leaf(target.vertices), proj, ChamferNorm::L2);

  ad::Var loss = kl_weight != 0.0 ? tape.add(chamfer, tape.scale(kl, kl_weight)) : chamfer;
  return {loss, chamfer, kl};
}

}  // namespace detail

/// Loss and its parts for one mesh; eps is the reparameterization draw.
inline LossParts objective(const ShapeModel& model, const SurfaceMesh& mesh, const Vec& eps,
                           double kl_weight) {
  ad::Tape tape(false);
  ModelVars vars = lift(tape, model);
  detail::ObjectiveGraph g;
  try {
    g = detail::objective_graph(tape, model, mesh, mesh, vars, eps, kl_weight);
  } catch (const NumericError& e) {
    throw NumericError(std::string("objective: non-finite value (") + e.what() + ")");
  }
  return {tape.val(g.loss)(0, 0), tape.val(g.chamfer)(0, 0), tape.val(g.kl)(0, 0)};
}

/// Gradient of the objective w.r.t. every learned parameter, accumulated
/// into `grads` (aligned with named_params order).
inline LossParts objective_grad(const ShapeModel& model, const SurfaceMesh& target,
                                const SurfaceMesh& encoder_input, const Vec& eps, double kl_weight,
                                std::vector<Mat>& grads) {
  ad::Tape tape;
  ModelVars vars = lift(tape, model);
  detail::ObjectiveGraph g = detail::objective_graph(tape, model, target, encoder_input, vars, eps,
                                                     kl_weight);
  tape.backward(g.loss);
  if (grads.empty()) {
    grads.reserve(vars.flat.size());
    for (auto v : vars.flat) grads.push_back(tape.grad(v));
  } else {
    require(grads.size() == vars.flat.size(), "objective_grad: accumulator mismatch");
    for (std::size_t i = 0; i < vars.flat.size(); ++i) grads[i] += tape.grad(vars.flat[i]);
  }
  return {tape.val(g.loss)(0, 0), tape.val(g.chamfer)(0, 0), tape.val(g.kl)(0, 0)};
}

/// Vertex masking and perturbation for the encoder input only. Removes
/// floor(mask_ratio * K) uniformly chosen vertices with their incident
/// faces, then adds Gaussian noise to the survivors. Deterministic per seed.
inline SurfaceMesh augment(const SurfaceMesh& mesh, double mask_ratio, double perturb_sigma,
                           std::uint64_t seed) {
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, "augment: mask_ratio in [0, 1)");
  require(perturb_sigma >= 0.0, "augment: perturb_sigma must be >= 0");
  long k = mesh.vertex_count();
  long n_mask = static_cast<long>(std::floor(mask_ratio * static_cast<double>(k)));
  Rng rng(mix_seed(seed, 0xAA61u));

  SurfaceMesh out;
  out.subject_id = mesh.subject_id;
  if (n_mask == 0) {
    out = mesh;
  } else {
    std::vector<int> order(static_cast<std::size_t>(k));
    for (long i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    rng.shuffle(order);
    std::vector<char> removed(static_cast<std::size_t>(k), 0);
    for (long i = 0; i < n_mask; ++i) removed[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

    std::vector<int> remap(static_cast<std::size_t>(k), -1);
    long kept = 0;
    for (long i = 0; i < k; ++i)
      if (!removed[static_cast<std::size_t>(i)]) remap[static_cast<std::size_t>(i)] = static_cast<int>(kept++);
    out.vertices.resize(kept, 3);
    for (long i = 0; i < k; ++i)
      if (remap[static_cast<std::size_t>(i)] >= 0) out.vertices.row(remap[static_cast<std::size_t>(i)]) = mesh.vertices.row(i);

    std::vector<MatI::Scalar> faces;
    for (long f = 0; f < mesh.face_count(); ++f) {
      int a = remap[static_cast<std::size_t>(mesh.faces(f, 0))];
      int b = remap[static_cast<std::size_t>(mesh.faces(f, 1))];
      int c = remap[static_cast<std::size_t>(mesh.faces(f, 2))];
      if (a >= 0 && b >= 0 && c >= 0) {
        faces.push_back(a);
        faces.push_back(b);
        faces.push_back(c);
      }
    }
    if (faces.empty())
      throw ValidationError("augment: masking removed every face of mesh '" + mesh.subject_id + "'");
    out.faces.resize(static_cast<long>(faces.size() / 3), 3);
    for (long f = 0; f < out.faces.rows(); ++f)
      for (int c = 0; c < 3; ++c) out.faces(f, c) = faces[static_cast<std::size_t>(f * 3 + c)];
  }

  if (perturb_sigma > 0.0)
    for (long v = 0; v < out.vertex_count(); ++v)
      for (int c = 0; c < 3; ++c) out.vertices(v, c) += perturb_sigma * rng.normal();
  return out;
}

/// Mean of S_t prior samples decoded on the current template; the
/// data-informed template of the next training phase.
inline TemplatePointCloud update_template(const ShapeModel& model, int s_t, std::uint64_t seed) {
  require(s_t >= 1, "update_template: sample count must be >= 1");
  Mat z = sample(model.flow, s_t, seed);
  Mat acc = Mat::Zero(model.tpl.points.rows(), 3);
  for (int s = 0; s < s_t; ++s)
    acc += deform_template(model.tpl, z.row(s).transpose(), model.cfg.deformer, model.deformer).points;
  TemplatePointCloud out;
  out.points = acc / static_cast<double>(s_t);
  out.provenance = TemplateProvenance::data_informed;
  return out;
}

struct LossRow {
  int epoch = 0;
  double chamfer = 0.0;
  double kl = 0.0;
  double val_chamfer = 0.0;
};

struct TrainResult {
  ShapeModel model;  // best checkpoint by validation Chamfer
  std::vector<LossRow> log;
  std::vector<std::string> warnings;
  bool diverged = false;
  int best_epoch = -1;
};

/// Mean validation Chamfer using the posterior mean (no sampling).
inline double validation_chamfer(const ShapeModel& model, const Cohort& cohort,
                                 const std::vector<int>& idx) {
  double acc = 0.0;
  for (int i : idx) {
    const SurfaceMesh& mesh = cohort.meshes[static_cast<std::size_t>(i)];
    LatentPosterior post = encode(mesh, model.cfg.encoder, model.encoder);
    CorrespondenceSet corr = deform_template(model.tpl, post.mu, model.cfg.deformer, model.deformer,
                                             mesh.subject_id);
    corr = project_to_surface(corr, mesh, model.projection);
    acc += chamfer_distance(mesh.vertices, corr.points, ChamferNorm::L2);
  }
  return acc / static_cast<double>(idx.size());
}

/// The model exactly as train() initializes it: sub-seeds derived from the
/// training seed, template from the medoid of the training split.
inline ShapeModel initial_model(const Cohort& cohort, ModelConfig model_cfg,
                                const TrainConfig& cfg) {
  model_cfg.encoder.init_seed = mix_seed(cfg.seed, 0xE1u);
  model_cfg.flow.init_seed = mix_seed(cfg.seed, 0xF1u);
  model_cfg.deformer.init_seed = mix_seed(cfg.seed, 0xD1u);
  const SurfaceMesh& medoid = select_medoid(cohort);
  TemplatePointCloud tpl = subsample_template(medoid, model_cfg.n_correspondences);
  return make_model(model_cfg, std::move(tpl));
}

inline TrainResult train(const Cohort& cohort, ModelConfig model_cfg, const TrainConfig& cfg) {
  validate_config(cfg);
  auto train_idx = cohort.indices(Split::train);
  require(!train_idx.empty(), "train: cohort has no training meshes");
  auto val_idx = cohort.indices(Split::val);
  if (val_idx.empty()) val_idx = train_idx;  // singleton / tiny cohorts validate on train

  ShapeModel model = initial_model(cohort, model_cfg, cfg);

  TrainResult result;
  result.warnings = alignment_warnings(cohort, model.tpl.points);

  std::vector<NamedParam> params = named_params(model);
  Adam opt(cfg.learning_rate);
  opt.init(params);

  ShapeModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  ShapeModel last_good = model;

  int L = model.cfg.encoder.latent_dim;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool burn_in = epoch < cfg.burn_in_epochs;
    double kl_w = 0.0;
    if (!burn_in) {
      int past = epoch - cfg.burn_in_epochs + 1;
      double ramp = cfg.kl_warmup_epochs > 0
                        ? std::min(1.0, static_cast<double>(past) / cfg.kl_warmup_epochs)
                        : 1.0;
      kl_w = ramp * cfg.kl_weight;
    }

    std::vector<int> order = train_idx;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x50u, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_chamfer = 0.0, epoch_kl = 0.0;
    long steps = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<Mat> grads;
        int batch_n = 0;
        for (std::size_t bi = start; bi < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++bi) {
          int idx = order[bi];
          const SurfaceMesh& mesh = cohort.meshes[static_cast<std::size_t>(idx)];
          std::uint64_t step_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                             static_cast<std::uint64_t>(idx));
          SurfaceMesh enc_input =
              (cfg.mask_ratio > 0.0 || cfg.perturb_sigma > 0.0)
                  ? augment(mesh, cfg.mask_ratio, cfg.perturb_sigma, step_seed)
                  : mesh;
          Rng eps_rng(mix_seed(step_seed, 0xE5u));
          Vec eps(L);
          for (int d = 0; d < L; ++d) eps(d) = eps_rng.normal();
          LossParts parts = objective_grad(model, mesh, enc_input, eps, kl_w, grads);
          epoch_chamfer += parts.chamfer;
          epoch_kl += parts.kl;
          ++steps;
          ++batch_n;
        }
        for (auto& g : grads) g /= static_cast<double>(batch_n);
        opt.step(params, grads);
      }
    } catch (const NumericError&) {
      result.diverged = true;
      result.model = best_epoch >= 0 ? best : last_good;
      result.best_epoch = best_epoch;
      return result;
    }

    model.epoch = epoch + 1;
    last_good = model;

    if (!burn_in && cfg.template_update_every > 0 &&
        (epoch - cfg.burn_in_epochs + 1) % cfg.template_update_every == 0) {
      model.tpl = update_template(model, cfg.template_samples,
                                  mix_seed(cfg.seed, 0x71u, static_cast<std::uint64_t>(epoch)));
    }

    double val = validation_chamfer(model, cohort, val_idx);
    result.log.push_back({epoch + 1, epoch_chamfer / static_cast<double>(steps),
                          epoch_kl / static_cast<double>(steps), val});
    if (val < best_val) {
      best_val = val;
      best = model;
      best_epoch = epoch + 1;
    }
  }

  result.model = best_epoch >= 0 ? best : last_good;
  result.best_epoch = best_epoch;
  return result;
}

// ---- config (de)serialization ----

inline nlohmann::json to_json(const EncoderConfig& c) {
  return {{"k_neighbors", c.k_neighbors},
          {"edgeconv_widths", c.edgeconv_widths},
          {"latent_dim", c.latent_dim},
          {"first_block_metric", c.first_block_metric == FirstBlockMetric::geodesic ? "geodesic" : "euclidean"},
          {"init_seed", c.init_seed}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.k_neighbors = j.value("k_neighbors", c.k_neighbors);
  if (j.contains("edgeconv_widths")) c.edgeconv_widths = j["edgeconv_widths"].get<std::vector<int>>();
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  std::string metric = j.value("first_block_metric", "geodesic");
  require(metric == "geodesic" || metric == "euclidean", "config: unknown first_block_metric");
  c.first_block_metric = metric == "geodesic" ? FirstBlockMetric::geodesic : FirstBlockMetric::euclidean;
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

inline nlohmann::json to_json(const FlowConfig& c) {
  return {{"latent_dim", c.latent_dim}, {"n_layers", c.n_layers}, {"hidden", c.hidden},
          {"init_seed", c.init_seed}};
}

inline FlowConfig flow_config_from_json(const nlohmann::json& j) {
  FlowConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.hidden = j.value("hidden", c.hidden);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

inline nlohmann::json to_json(const DeformerConfig& c) {
  return {{"hidden", c.hidden}, {"latent_dim", c.latent_dim}, {"init_seed", c.init_seed}};
}

inline DeformerConfig deformer_config_from_json(const nlohmann::json& j) {
  DeformerConfig c;
  if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<int>>();
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.init_seed = j.value("init_seed", c.init_seed);
  return c;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"n_correspondences", c.n_correspondences},
          {"encoder", to_json(c.encoder)},
          {"flow", to_json(c.flow)},
          {"deformer", to_json(c.deformer)},
          {"proj_sigma_scale", c.proj_sigma_scale}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_correspondences = j.value("n_correspondences", c.n_correspondences);
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j["encoder"]);
  if (j.contains("flow")) c.flow = flow_config_from_json(j["flow"]);
  if (j.contains("deformer")) c.deformer = deformer_config_from_json(j["deformer"]);
  c.proj_sigma_scale = j.value("proj_sigma_scale", c.proj_sigma_scale);
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"burn_in_epochs", c.burn_in_epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"kl_weight", c.kl_weight},
          {"kl_warmup_epochs", c.kl_warmup_epochs},
          {"mask_ratio", c.mask_ratio},
          {"perturb_sigma", c.perturb_sigma},
          {"template_update_every", c.template_update_every},
          {"template_samples", c.template_samples},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.burn_in_epochs = j.value("burn_in_epochs", c.burn_in_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.kl_warmup_epochs = j.value("kl_warmup_epochs", c.kl_warmup_epochs);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
  c.perturb_sigma = j.value("perturb_sigma", c.perturb_sigma);
  c.template_update_every = j.value("template_update_every", c.template_update_every);
  c.template_samples = j.value("template_samples", c.template_samples);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---- checkpointing ----

inline void save_checkpoint(ShapeModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "ssmkit-checkpoint-v1";
  j["epoch"] = model.epoch;
  j["config"] = to_json(model.cfg);
  j["projection_sigma"] = model.projection.sigma;
  j["template_provenance"] =
      model.tpl.provenance == TemplateProvenance::data_informed ? "data_informed" : "medoid_subsample";
  nlohmann::json arrays = nlohmann::json::object();
  auto add_array = [&](const std::string& name, const Mat& m) {
    arrays[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", detail::encode_matrix(m)}};
  };
  for (const auto& p : named_params(model)) add_array(p.name, *p.mat);
  add_array("template.points", model.tpl.points);
  j["arrays"] = std::move(arrays);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out << j.dump() << "\n";
}

inline ShapeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint parse error in " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "ssmkit-checkpoint-v1")
    throw IoError("not an ssmkit checkpoint: " + path.string());

  ModelConfig cfg = model_config_from_json(j["config"]);
  const auto& arrays = j["arrays"];
  auto read_array = [&](const std::string& name) {
    if (!arrays.contains(name)) throw IoError("checkpoint missing array: " + name);
    const auto& a = arrays[name];
    return detail::decode_matrix(a["data"].get<std::string>(), a["rows"].get<long>(),
                                 a["cols"].get<long>());
  };

  TemplatePointCloud tpl;
  tpl.points = read_array("template.points");
  tpl.provenance = j.value("template_provenance", "medoid_subsample") == "data_informed"
                       ? TemplateProvenance::data_informed
                       : TemplateProvenance::medoid_subsample;

  ShapeModel model = make_model(cfg, std::move(tpl));
  model.epoch = j.value("epoch", 0);
  model.projection.sigma = j.value("projection_sigma", model.projection.sigma);
  for (const auto& p : named_params(model)) {
    Mat m = read_array(p.name);
    if (m.rows() != p.mat->rows() || m.cols() != p.mat->cols())
      throw IoError("checkpoint array shape mismatch: " + p.name);
    *p.mat = std::move(m);
  }
  return model;
}

}  // namespace ssmkit
