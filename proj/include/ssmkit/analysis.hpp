#pragma once

// Downstream shape statistics on correspondence populations: PCA modes of
// variation (data and latent space), pointwise Hotelling T^2 group
// differences with permutation p-values and Benjamini-Hochberg correction,
// LDA shape scores, and a fixed-architecture MLP classification harness for
// comparing correspondence quality.

#include <map>
#include <set>
#include <vector>

#include "ssmkit/detail/stats.hpp"
#include "ssmkit/metrics.hpp"
#include "ssmkit/training.hpp"

namespace ssmkit {

/// mean + step * sqrt(lambda_mode) * mode_vector for each step (steps are in
/// units of standard deviation). Mode index is 1-based.
inline std::vector<CorrespondenceSet> modes_of_variation(const PcaModel& pca, int mode,
                                                         const std::vector<double>& steps) {
  require(mode >= 1 && mode <= pca.rank(), "modes_of_variation: mode out of range");
  std::vector<CorrespondenceSet> out;
  double sd = std::sqrt(pca.eigenvalues(mode - 1));
  for (double s : steps) {
    Eigen::RowVectorXd row = pca.mean + s * sd * pca.modes.col(mode - 1).transpose();
    CorrespondenceSet c;
    c.points = unflatten(row);
    c.subject_id = "mode" + std::to_string(mode) + "_step" + fmt_double(s);
    out.push_back(std::move(c));
  }
  return out;
}

/// PCA over the posterior means of the cohort, then a latent mode walk
/// decoded through the deformer (raw decode, no projection). A mode beyond
/// the effective latent rank walks a zero direction, so all steps coincide.
inline std::vector<CorrespondenceSet> latent_modes(const ShapeModel& model, const Cohort& cohort,
                                                   int mode, const std::vector<double>& steps) {
  require(mode >= 1, "latent_modes: mode must be >= 1");
  require(cohort.meshes.size() >= 2, "latent_modes: need at least two meshes");
  int latent = model.cfg.encoder.latent_dim;
  Mat mu(static_cast<long>(cohort.meshes.size()), latent);
  for (std::size_t i = 0; i < cohort.meshes.size(); ++i)
    mu.row(static_cast<long>(i)) =
        encode(cohort.meshes[i], model.cfg.encoder, model.encoder).mu.transpose();

  CorrespondenceMatrix latent_matrix;
  latent_matrix.data = mu;
  PcaModel pca = fit_pca(latent_matrix);

  Eigen::RowVectorXd direction = Eigen::RowVectorXd::Zero(latent);
  double sd = 0.0;
  if (mode <= pca.rank()) {
    direction = pca.modes.col(mode - 1).transpose();
    sd = std::sqrt(pca.eigenvalues(mode - 1));
  }
  std::vector<CorrespondenceSet> out;
  for (double s : steps) {
    Vec z = (pca.mean + s * sd * direction).transpose();
    CorrespondenceSet c = deform_template(model.tpl, z, model.cfg.deformer, model.deformer,
                                          "latent_mode" + std::to_string(mode));
    out.push_back(std::move(c));
  }
  return out;
}

/// Benjamini-Hochberg step-up at rate q.
inline std::vector<bool> benjamini_hochberg(const Vec& p, double q) {
  long m = p.size();
  std::vector<long> order(static_cast<std::size_t>(m));
  for (long i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](long a, long b) { return p(a) < p(b); });
  long cutoff = -1;
  for (long k = m; k >= 1; --k)
    if (p(order[static_cast<std::size_t>(k - 1)]) <= q * static_cast<double>(k) / static_cast<double>(m)) {
      cutoff = k;
      break;
    }
  std::vector<bool> significant(static_cast<std::size_t>(m), false);
  for (long k = 0; k < cutoff; ++k) significant[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  return significant;
}

struct GroupDifferenceResult {
  Mat mean_diff;                   // M x 3, control mean - pathology mean
  Vec p_values;                    // M, add-one permutation estimator
  std::vector<bool> significant;   // after BH-FDR at q
  std::vector<bool> regularized;   // pooled covariance needed regularization
  std::string control_label, pathology_label;
};

namespace detail {

/// Two-sample Hotelling T^2 on 3-D points; pooled covariance, with a
/// regularized retry on singular systems.
inline double hotelling_t2(const Mat& pts, const std::vector<char>& in_first, long n1, long n2,
                           bool* used_regularization) {
  Eigen::RowVector3d m1 = Eigen::RowVector3d::Zero(), m2 = Eigen::RowVector3d::Zero();
  for (long i = 0; i < pts.rows(); ++i)
    (in_first[static_cast<std::size_t>(i)] ? m1 : m2) += pts.row(i);
  m1 /= static_cast<double>(n1);
  m2 /= static_cast<double>(n2);
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
  for (long i = 0; i < pts.rows(); ++i) {
    Eigen::RowVector3d d = pts.row(i) - (in_first[static_cast<std::size_t>(i)] ? m1 : m2);
    s += d.transpose() * d;
  }
  s /= static_cast<double>(n1 + n2 - 2);
  Eigen::RowVector3d diff = m1 - m2;
  if (diff.squaredNorm() == 0.0) return 0.0;
  double factor = static_cast<double>(n1) * static_cast<double>(n2) / static_cast<double>(n1 + n2);

  auto solve = [&](const Eigen::Matrix3d& cov) -> double {
    Eigen::LDLT<Eigen::Matrix3d> ldlt(cov);
    if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
    Eigen::Vector3d x = ldlt.solve(diff.transpose());
    double t2 = factor * diff.dot(x.transpose());
    return t2;
  };

  double t2 = solve(s);
  if (std::isfinite(t2) && t2 >= 0.0) return t2;
  if (used_regularization) *used_regularization = true;
  double eps = 1e-8 * s.trace() / 3.0;
  if (eps <= 0.0) eps = 1e-12;
  t2 = solve(s + eps * Eigen::Matrix3d::Identity());
  if (std::isfinite(t2) && t2 >= 0.0) return t2;
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Pointwise two-sample Hotelling T^2 with a shared-permutation null and
/// BH-FDR. Labels must take exactly two values; "control" (or the
/// lexicographically smaller label) is the first group.
inline GroupDifferenceResult group_difference(const CorrespondenceMatrix& x,
                                              const std::vector<std::string>& labels,
                                              int n_permutations, double q, std::uint64_t seed) {
  long n = x.data.rows();
  require(static_cast<long>(labels.size()) == n, "group_difference: label count mismatch");
  require(n_permutations >= 100, "group_difference: need at least 100 permutations");
  require(q > 0.0 && q < 1.0, "group_difference: q in (0, 1)");

  std::set<std::string> distinct(labels.begin(), labels.end());
  require(distinct.size() == 2, "group_difference: need exactly two groups");
  std::string first = *distinct.begin(), second = *std::next(distinct.begin());
  if (distinct.count("control")) {
    first = "control";
    second = first == *distinct.begin() ? *std::next(distinct.begin()) : *distinct.begin();
  }

  std::vector<char> in_first(static_cast<std::size_t>(n));
  long n1 = 0;
  for (long i = 0; i < n; ++i) {
    in_first[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == first;
    if (in_first[static_cast<std::size_t>(i)]) ++n1;
  }
  long n2 = n - n1;
  require(n1 >= 2 && n2 >= 2, "group_difference: each group needs at least two members");

  // one permutation set shared across all points
  std::vector<std::vector<char>> perms;
  perms.reserve(static_cast<std::size_t>(n_permutations));
  Rng rng(mix_seed(seed, 0x6D1Fu));
  std::vector<char> scratch = in_first;
  for (int p = 0; p < n_permutations; ++p) {
    rng.shuffle(scratch);
    perms.push_back(scratch);
  }

  long m = x.points();
  GroupDifferenceResult res;
  res.control_label = first;
  res.pathology_label = second;
  res.mean_diff.resize(m, 3);
  res.p_values.resize(m);
  res.significant.assign(static_cast<std::size_t>(m), false);
  res.regularized.assign(static_cast<std::size_t>(m), false);

  for (long pt = 0; pt < m; ++pt) {
    Mat pts(n, 3);
    for (long i = 0; i < n; ++i) pts.row(i) = x.data.block(i, pt * 3, 1, 3);

    Eigen::RowVector3d m1 = Eigen::RowVector3d::Zero(), m2 = Eigen::RowVector3d::Zero();
    for (long i = 0; i < n; ++i) (in_first[static_cast<std::size_t>(i)] ? m1 : m2) += pts.row(i);
    res.mean_diff.row(pt) = m1 / static_cast<double>(n1) - m2 / static_cast<double>(n2);

    bool reg = false;
    double observed = detail::hotelling_t2(pts, in_first, n1, n2, &reg);
    res.regularized[static_cast<std::size_t>(pt)] = reg;
    long exceed = 0;
    for (const auto& perm : perms)
      if (detail::hotelling_t2(pts, perm, n1, n2, nullptr) >= observed) ++exceed;
    res.p_values(pt) = static_cast<double>(1 + exceed) / static_cast<double>(1 + n_permutations);
  }

  res.significant = benjamini_hochberg(res.p_values, q);
  return res;
}

struct LdaResult {
  Vec discriminant;  // 3M: control mean - pathology mean
  Vec scores;        // per subject, affinely normalized
  double control_fit_mean = 0.0, control_fit_std = 0.0;
  double pathology_fit_mean = 0.0, pathology_fit_std = 0.0;
  std::string control_label, pathology_label;
};

/// Projects each subject onto the difference of group means, normalized so
/// the pathology mean maps to -1 and the control mean to +1.
inline LdaResult lda_scores(const CorrespondenceMatrix& x, const std::vector<std::string>& labels) {
  long n = x.data.rows();
  require(static_cast<long>(labels.size()) == n, "lda_scores: label count mismatch");
  std::set<std::string> distinct(labels.begin(), labels.end());
  require(distinct.size() == 2, "lda_scores: need exactly two groups");
  std::string control = distinct.count("control") ? "control" : *distinct.begin();
  std::string pathology;
  for (const auto& l : distinct)
    if (l != control) pathology = l;

  Eigen::RowVectorXd mean_c = Eigen::RowVectorXd::Zero(x.data.cols());
  Eigen::RowVectorXd mean_p = Eigen::RowVectorXd::Zero(x.data.cols());
  long nc = 0, np = 0;
  for (long i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] == control) {
      mean_c += x.data.row(i);
      ++nc;
    } else {
      mean_p += x.data.row(i);
      ++np;
    }
  }
  require(nc >= 1 && np >= 1, "lda_scores: both groups must be non-empty");
  mean_c /= static_cast<double>(nc);
  mean_p /= static_cast<double>(np);

  Eigen::RowVectorXd d = mean_c - mean_p;
  double denom = d.squaredNorm();  // raw score gap between the group means
  if (denom == 0.0) throw ValidationError("lda_scores: identical group means (degenerate discriminant)");

  LdaResult res;
  res.discriminant = d.transpose();
  res.control_label = control;
  res.pathology_label = pathology;
  double s_p = mean_p.dot(d), s_c = mean_c.dot(d);
  res.scores.resize(n);
  for (long i = 0; i < n; ++i)
    res.scores(i) = 2.0 * (x.data.row(i).dot(d) - s_p) / (s_c - s_p) - 1.0;

  auto fit = [&](const std::string& label, double& mean, double& sd) {
    std::vector<double> vals;
    for (long i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i)] == label) vals.push_back(res.scores(i));
    mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    sd = 0.0;
    if (vals.size() > 1) {
      for (double v : vals) sd += (v - mean) * (v - mean);
      sd = std::sqrt(sd / static_cast<double>(vals.size() - 1));
    }
  };
  fit(control, res.control_fit_mean, res.control_fit_std);
  fit(pathology, res.pathology_fit_mean, res.pathology_fit_std);
  return res;
}

struct ClassificationReport {
  double accuracy_mean = 0.0, accuracy_std = 0.0;
  std::vector<std::string> classes;  // sorted ascending
  Vec f1_mean, f1_std;               // per class across folds
  int folds = 0;
};

namespace detail {

struct MlpFold {
  Mat w1, b1, w2, b2;
  Eigen::RowVectorXd feat_mean, feat_std;
};

inline MlpFold train_mlp(const Mat& x, const std::vector<int>& y, int n_classes, int hidden,
                         int epochs, double lr, std::uint64_t seed) {
  long n = x.rows(), d = x.cols();
  MlpFold mlp;
  mlp.feat_mean = x.colwise().mean();
  mlp.feat_std = ((x.rowwise() - mlp.feat_mean).array().square().colwise().sum() /
                  std::max<double>(1.0, static_cast<double>(n - 1)))
                     .sqrt()
                     .matrix();
  mlp.feat_std = mlp.feat_std.cwiseMax(1e-8);
  Mat xs = (x.rowwise() - mlp.feat_mean).array().rowwise() / mlp.feat_std.array();

  Rng rng(mix_seed(seed, 0xC1A5u));
  mlp.w1 = random_normal(static_cast<int>(d), hidden, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  mlp.b1 = Mat::Zero(1, hidden);
  mlp.w2 = random_normal(hidden, n_classes, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  mlp.b2 = Mat::Zero(1, n_classes);

  Mat onehot = Mat::Zero(n, n_classes);
  for (long i = 0; i < n; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;

  std::vector<NamedParam> params{{"w1", &mlp.w1}, {"b1", &mlp.b1}, {"w2", &mlp.w2}, {"b2", &mlp.b2}};
  Adam opt(lr);
  opt.init(params);
  for (int e = 0; e < epochs; ++e) {
    ad::Tape tape;
    ad::Var xv = tape.leaf(xs);
    ad::Var w1 = tape.leaf(mlp.w1), b1 = tape.leaf(mlp.b1);
    ad::Var w2 = tape.leaf(mlp.w2), b2 = tape.leaf(mlp.b2);
    ad::Var h = tape.tanh_(tape.add(tape.matmul(xv, w1), tape.broadcast_row(b1, n)));
    ad::Var logits = tape.add(tape.matmul(h, w2), tape.broadcast_row(b2, n));
    // cross entropy with a detached row max (exact for log-sum-exp)
    ad::Var row_max = tape.leaf(tape.val(logits).rowwise().maxCoeff());
    ad::Var shifted = tape.sub(logits, tape.broadcast_col(row_max, n_classes));
    ad::Var lse = tape.add(tape.log_(tape.rowwise_sum(tape.exp_(shifted))), row_max);
    ad::Var picked = tape.rowwise_sum(tape.cmul(logits, tape.leaf(onehot)));
    ad::Var loss = tape.mean(tape.sub(lse, picked));
    tape.backward(loss);
    std::vector<Mat> grads{tape.grad(w1), tape.grad(b1), tape.grad(w2), tape.grad(b2)};
    opt.step(params, grads);
  }
  return mlp;
}

inline std::vector<int> predict_mlp(const MlpFold& mlp, const Mat& x) {
  Mat xs = (x.rowwise() - mlp.feat_mean).array().rowwise() / mlp.feat_std.array();
  Mat h = ((xs * mlp.w1).rowwise() + mlp.b1.row(0)).array().tanh();
  Mat logits = (h * mlp.w2).rowwise() + mlp.b2.row(0);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (long i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (long c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace detail

/// Stratified k-fold cross-validation of a single-hidden-layer (100 unit)
/// classifier on flattened correspondences. Deterministic per seed.
inline ClassificationReport classify_correspondences(const CorrespondenceMatrix& x,
                                                     const std::vector<std::string>& labels,
                                                     int folds, std::uint64_t seed,
                                                     int hidden = 100, int epochs = 200,
                                                     double lr = 1e-2) {
  long n = x.data.rows();
  require(static_cast<long>(labels.size()) == n, "classify: label count mismatch");
  require(folds >= 2, "classify: need at least two folds");

  std::set<std::string> class_set(labels.begin(), labels.end());
  std::vector<std::string> classes(class_set.begin(), class_set.end());
  int n_classes = static_cast<int>(classes.size());
  require(n_classes >= 2, "classify: need at least two classes");
  std::map<std::string, int> class_index;
  for (int c = 0; c < n_classes; ++c) class_index[classes[static_cast<std::size_t>(c)]] = c;

  // stratified fold assignment: shuffle within class, deal round-robin
  std::vector<int> fold_of(static_cast<std::size_t>(n), -1);
  for (int c = 0; c < n_classes; ++c) {
    std::vector<int> members;
    for (long i = 0; i < n; ++i)
      if (class_index[labels[static_cast<std::size_t>(i)]] == c) members.push_back(static_cast<int>(i));
    if (static_cast<int>(members.size()) < folds)
      throw ValidationError("classify: class '" + classes[static_cast<std::size_t>(c)] + "' has fewer members (" +
                            std::to_string(members.size()) + ") than folds");
    Rng rng(mix_seed(seed, 0xF01Du, static_cast<std::uint64_t>(c)));
    rng.shuffle(members);
    for (std::size_t i = 0; i < members.size(); ++i)
      fold_of[static_cast<std::size_t>(members[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }

  Vec acc(folds);
  Mat f1(folds, n_classes);
  for (int f = 0; f < folds; ++f) {
    std::vector<long> train_rows, test_rows;
    for (long i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);

    Mat xtr(static_cast<long>(train_rows.size()), x.data.cols());
    std::vector<int> ytr(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      xtr.row(static_cast<long>(i)) = x.data.row(train_rows[i]);
      ytr[i] = class_index[labels[static_cast<std::size_t>(train_rows[i])]];
    }
    Mat xte(static_cast<long>(test_rows.size()), x.data.cols());
    std::vector<int> yte(test_rows.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      xte.row(static_cast<long>(i)) = x.data.row(test_rows[i]);
      yte[i] = class_index[labels[static_cast<std::size_t>(test_rows[i])]];
    }

    auto mlp = detail::train_mlp(xtr, ytr, n_classes, hidden, epochs, lr,
                                 mix_seed(seed, static_cast<std::uint64_t>(f)));
    auto pred = detail::predict_mlp(mlp, xte);

    long correct = 0;
    for (std::size_t i = 0; i < yte.size(); ++i)
      if (pred[i] == yte[i]) ++correct;
    acc(f) = static_cast<double>(correct) / static_cast<double>(yte.size());

    for (int c = 0; c < n_classes; ++c) {
      long tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < yte.size(); ++i) {
        if (pred[i] == c && yte[i] == c) ++tp;
        if (pred[i] == c && yte[i] != c) ++fp;
        if (pred[i] != c && yte[i] == c) ++fn;
      }
      double denom = static_cast<double>(2 * tp + fp + fn);
      f1(f, c) = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
  }

  ClassificationReport rep;
  rep.folds = folds;
  rep.classes = classes;
  rep.accuracy_mean = acc.mean();
  rep.accuracy_std = folds > 1 ? std::sqrt((acc.array() - acc.mean()).square().sum() / (folds - 1)) : 0.0;
  rep.f1_mean.resize(n_classes);
  rep.f1_std.resize(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    rep.f1_mean(c) = f1.col(c).mean();
    rep.f1_std(c) = folds > 1
                        ? std::sqrt((f1.col(c).array() - rep.f1_mean(c)).square().sum() / (folds - 1))
                        : 0.0;
  }
  return rep;
}

}  // namespace ssmkit
