#pragma once

// Invertible map between the representation space z and the Gaussian
// sampling space z0, built from affine coupling layers. Each layer permutes
// coordinates, transforms one half conditioned on the other, and undoes the
// permutation, so an identity-initialized flow is the identity map. The
// log-determinant is the sum of the scale activations; no solver involved.

#include <vector>

#include "ssmkit/autodiff.hpp"
#include "ssmkit/common.hpp"

namespace ssmkit {

struct FlowConfig {
  int latent_dim = 32;
  int n_layers = 6;
  int hidden = 64;
  std::uint64_t init_seed = 0;
};

struct CouplingParams {
  Mat w1, b1;  // conditioner hidden layer
  Mat ws, bs;  // scale head (zero at init)
  Mat wt, bt;  // shift head (zero at init)
};

struct FlowPrior {
  FlowConfig cfg;
  std::vector<CouplingParams> layers;
  std::vector<std::vector<int>> perms;  // per layer: frame[j] = x[perm[j]]
  std::vector<char> swap_halves;        // which half of the frame conditions

  static constexpr double scale_cap = 3.0;  // s = cap * tanh(raw)

  // conditioned-half size of layer l
  int cond_size(std::size_t l) const {
    int L = cfg.latent_dim;
    return swap_halves[l] ? L - L / 2 : L / 2;
  }
};

inline FlowPrior make_flow(const FlowConfig& cfg) {
  require(cfg.latent_dim >= 2, "flow: latent_dim must be >= 2");
  require(cfg.n_layers >= 1 && cfg.hidden >= 1, "flow: invalid layer/hidden counts");
  FlowPrior flow;
  flow.cfg = cfg;
  int L = cfg.latent_dim;
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::vector<int> perm(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng prng(mix_seed(cfg.init_seed, 0xF10Fu, static_cast<std::uint64_t>(l)));
    prng.shuffle(perm);
    flow.perms.push_back(perm);
    flow.swap_halves.push_back(l % 2 == 1);

    int nc = flow.cond_size(static_cast<std::size_t>(l));
    CouplingParams p;
    Rng wrng(mix_seed(cfg.init_seed, 0xF10Eu, static_cast<std::uint64_t>(l)));
    p.w1 = random_normal(nc, cfg.hidden, wrng, 1.0 / std::sqrt(static_cast<double>(nc)));
    p.b1 = Mat::Zero(1, cfg.hidden);
    int nt = L - nc;
    p.ws = Mat::Zero(cfg.hidden, nt);
    p.bs = Mat::Zero(1, nt);
    p.wt = Mat::Zero(cfg.hidden, nt);
    p.bt = Mat::Zero(1, nt);
    flow.layers.push_back(std::move(p));
  }
  return flow;
}

namespace detail {

/// Positions of the conditioned and transformed coordinates within the
/// permuted frame of layer l.
inline std::pair<std::vector<int>, std::vector<int>> layer_split(const FlowPrior& flow,
                                                                 std::size_t l) {
  int L = flow.cfg.latent_dim;
  int half = L / 2;
  std::vector<int> front, back;
  for (int i = 0; i < half; ++i) front.push_back(i);
  for (int i = half; i < L; ++i) back.push_back(i);
  if (flow.swap_halves[l]) return {back, front};
  return {front, back};
}

}  // namespace detail

struct FlowResult {
  Vec z0;
  double logdet = 0.0;
};

namespace detail {

inline void coupling_nets(const CouplingParams& p, const Eigen::RowVectorXd& xa,
                          Eigen::RowVectorXd& s, Eigen::RowVectorXd& t) {
  Eigen::RowVectorXd h = ((xa * p.w1) + p.b1).array().tanh();
  s = FlowPrior::scale_cap * ((h * p.ws) + p.bs).array().tanh();
  t = (h * p.wt) + p.bt;
}

}  // namespace detail

/// z -> (z0, log|det dz0/dz|).
inline FlowResult flow_forward(const FlowPrior& flow, const Vec& z) {
  require(z.size() == flow.cfg.latent_dim, "flow_forward: dimension mismatch");
  if (!z.allFinite()) throw NumericError("flow_forward: non-finite input");
  Eigen::RowVectorXd x = z.transpose();
  double logdet = 0.0;
  int L = flow.cfg.latent_dim;
  for (std::size_t l = 0; l < flow.layers.size(); ++l) {
    const auto& perm = flow.perms[l];
    auto [cond, trans] = detail::layer_split(flow, l);
    Eigen::RowVectorXd xp(L);
    for (int j = 0; j < L; ++j) xp(j) = x(perm[static_cast<std::size_t>(j)]);
    Eigen::RowVectorXd xa(cond.size()), xb(trans.size());
    for (std::size_t i = 0; i < cond.size(); ++i) xa(static_cast<long>(i)) = xp(cond[i]);
    for (std::size_t i = 0; i < trans.size(); ++i) xb(static_cast<long>(i)) = xp(trans[i]);
    Eigen::RowVectorXd s, t;
    detail::coupling_nets(flow.layers[l], xa, s, t);
    Eigen::RowVectorXd yb = xb.array() * s.array().exp() + t.array();
    logdet += s.sum();
    for (std::size_t i = 0; i < trans.size(); ++i) xp(trans[i]) = yb(static_cast<long>(i));
    for (int j = 0; j < L; ++j) x(perm[static_cast<std::size_t>(j)]) = xp(j);
    if (!x.allFinite())
      throw NumericError("flow_forward: non-finite value at layer " + std::to_string(l));
  }
  return {x.transpose(), logdet};
}

/// z0 -> z; exact inverse of flow_forward.
inline Vec flow_inverse(const FlowPrior& flow, const Vec& z0) {
  require(z0.size() == flow.cfg.latent_dim, "flow_inverse: dimension mismatch");
  if (!z0.allFinite()) throw NumericError("flow_inverse: non-finite input");
  Eigen::RowVectorXd x = z0.transpose();
  int L = flow.cfg.latent_dim;
  for (std::size_t li = flow.layers.size(); li-- > 0;) {
    const auto& perm = flow.perms[li];
    auto [cond, trans] = detail::layer_split(flow, li);
    Eigen::RowVectorXd yp(L);
    for (int j = 0; j < L; ++j) yp(j) = x(perm[static_cast<std::size_t>(j)]);
    Eigen::RowVectorXd xa(cond.size()), yb(trans.size());
    for (std::size_t i = 0; i < cond.size(); ++i) xa(static_cast<long>(i)) = yp(cond[i]);
    for (std::size_t i = 0; i < trans.size(); ++i) yb(static_cast<long>(i)) = yp(trans[i]);
    Eigen::RowVectorXd s, t;
    detail::coupling_nets(flow.layers[li], xa, s, t);
    Eigen::RowVectorXd xb = (yb.array() - t.array()) * (-s.array()).exp();
    for (std::size_t i = 0; i < trans.size(); ++i) yp(trans[i]) = xb(static_cast<long>(i));
    for (int j = 0; j < L; ++j) x(perm[static_cast<std::size_t>(j)]) = yp(j);
  }
  return x.transpose();
}

/// log p_eta(z) = log N(g(z); 0, I) + log|det dg/dz|.
inline double log_prob(const FlowPrior& flow, const Vec& z) {
  FlowResult r = flow_forward(flow, z);
  int L = flow.cfg.latent_dim;
  double log_gauss = -0.5 * r.z0.squaredNorm() - 0.5 * L * std::log(2.0 * M_PI);
  return log_gauss + r.logdet;
}

/// n draws z0 ~ N(0, I) pushed through the inverse map; deterministic per seed.
inline Mat sample(const FlowPrior& flow, int n, std::uint64_t seed) {
  require(n >= 1, "flow sample: n must be >= 1");
  int L = flow.cfg.latent_dim;
  Rng rng(mix_seed(seed, 0x5A3Bu));
  Mat out(n, L);
  for (int i = 0; i < n; ++i) {
    Vec z0(L);
    for (int d = 0; d < L; ++d) z0(d) = rng.normal();
    out.row(i) = flow_inverse(flow, z0).transpose();
  }
  return out;
}

// ---- parameter registry / tape mirror ----

inline void collect_params(FlowPrior& flow, const std::string& prefix,
                           std::vector<NamedParam>& out) {
  for (std::size_t l = 0; l < flow.layers.size(); ++l) {
    auto& p = flow.layers[l];
    std::string base = prefix + "layer" + std::to_string(l) + ".";
    out.push_back({base + "w1", &p.w1});
    out.push_back({base + "b1", &p.b1});
    out.push_back({base + "ws", &p.ws});
    out.push_back({base + "bs", &p.bs});
    out.push_back({base + "wt", &p.wt});
    out.push_back({base + "bt", &p.bt});
  }
}

struct FlowVars {
  struct Layer {
    ad::Var w1, b1, ws, bs, wt, bt;
  };
  std::vector<Layer> layers;
};

inline FlowVars lift(ad::Tape& tape, const FlowPrior& flow) {
  FlowVars vars;
  for (const auto& p : flow.layers)
    vars.layers.push_back({tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.ws), tape.leaf(p.bs),
                           tape.leaf(p.wt), tape.leaf(p.bt)});
  return vars;
}

/// Differentiable log p_eta(z); z is a 1 x L row on the tape.
inline ad::Var flow_log_prob_tape(ad::Tape& tape, const FlowPrior& flow, const FlowVars& vars,
                                  ad::Var z) {
  int L = flow.cfg.latent_dim;
  ad::Var x = z;
  ad::Var logdet;
  for (std::size_t l = 0; l < flow.layers.size(); ++l) {
    const auto& perm = flow.perms[l];
    auto [cond, trans] = detail::layer_split(flow, l);
    // selection matrices straight from x to the split halves
    Mat Sa = Mat::Zero(L, static_cast<long>(cond.size()));
    Mat Sb = Mat::Zero(L, static_cast<long>(trans.size()));
    for (std::size_t i = 0; i < cond.size(); ++i)
      Sa(perm[static_cast<std::size_t>(cond[i])], static_cast<long>(i)) = 1.0;
    for (std::size_t i = 0; i < trans.size(); ++i)
      Sb(perm[static_cast<std::size_t>(trans[i])], static_cast<long>(i)) = 1.0;
    ad::Var xa = tape.matmul(x, tape.leaf(Sa));
    ad::Var xb = tape.matmul(x, tape.leaf(Sb));
    const auto& lv = vars.layers[l];
    ad::Var h = tape.tanh_(tape.add(tape.matmul(xa, lv.w1), lv.b1));
    ad::Var s = tape.scale(tape.tanh_(tape.add(tape.matmul(h, lv.ws), lv.bs)), FlowPrior::scale_cap);
    ad::Var t = tape.add(tape.matmul(h, lv.wt), lv.bt);
    ad::Var yb = tape.add(tape.cmul(xb, tape.exp_(s)), t);
    ad::Var ld = tape.sum(s);
    logdet = logdet.valid() ? tape.add(logdet, ld) : ld;
    // reassemble in the original frame: x = xa * Sa^T + yb * Sb^T
    x = tape.add(tape.matmul(xa, tape.leaf(Mat(Sa.transpose()))),
                 tape.matmul(yb, tape.leaf(Mat(Sb.transpose()))));
  }
  ad::Var log_gauss = tape.add_scalar(tape.scale(tape.sum(tape.square(x)), -0.5),
                                      -0.5 * L * std::log(2.0 * M_PI));
  return tape.add(log_gauss, logdet);
}

}  // namespace ssmkit
