#include <catch2/catch_amalgamated.hpp>

#include "ssmkit/flow_prior.hpp"
#include "test_support.hpp"

using namespace ssmkit;

namespace {

FlowPrior random_flow(int latent_dim, int n_layers, std::uint64_t seed, double head_scale = 0.4) {
  FlowConfig cfg;
  cfg.latent_dim = latent_dim;
  cfg.n_layers = n_layers;
  cfg.hidden = 8;
  cfg.init_seed = seed;
  FlowPrior flow = make_flow(cfg);
  Rng rng(mix_seed(seed, 0xABCu));
  for (auto& layer : flow.layers) {
    layer.ws = random_normal(static_cast<int>(layer.ws.rows()), static_cast<int>(layer.ws.cols()), rng, head_scale);
    layer.bs = random_normal(1, static_cast<int>(layer.bs.cols()), rng, head_scale);
    layer.wt = random_normal(static_cast<int>(layer.wt.rows()), static_cast<int>(layer.wt.cols()), rng, head_scale);
    layer.bt = random_normal(1, static_cast<int>(layer.bt.cols()), rng, head_scale);
  }
  return flow;
}

}  // namespace

TEST_CASE("identity-initialized flow is the identity map") {
  FlowConfig cfg;
  cfg.latent_dim = 6;
  FlowPrior flow = make_flow(cfg);
  Rng rng(1);
  Vec z = random_normal(6, 1, rng);
  FlowResult r = flow_forward(flow, z);
  CHECK(r.z0 == z);
  CHECK(r.logdet == 0.0);
  CHECK(flow_inverse(flow, z) == z);
}

TEST_CASE("two single-coordinate scale layers give logdet 2 log 2") {
  // construct by hand: identity permutations, each layer scales one of the
  // two coordinates by exactly 2
  FlowConfig cfg;
  cfg.latent_dim = 2;
  cfg.n_layers = 2;
  cfg.hidden = 4;
  FlowPrior flow = make_flow(cfg);
  for (int l = 0; l < 2; ++l) {
    flow.perms[static_cast<std::size_t>(l)] = {0, 1};
    flow.layers[static_cast<std::size_t>(l)].w1.setZero();
    double raw = std::atanh(std::log(2.0) / FlowPrior::scale_cap);
    flow.layers[static_cast<std::size_t>(l)].bs.setConstant(raw);
  }
  // layer 0 conditions on dim 0 and scales dim 1; layer 1 the reverse
  Vec z(2);
  z << 3.0, 5.0;
  FlowResult r = flow_forward(flow, z);
  CHECK(r.logdet == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(r.z0(0) == Catch::Approx(6.0).epsilon(1e-12));
  CHECK(r.z0(1) == Catch::Approx(10.0).epsilon(1e-12));
  Vec back = flow_inverse(flow, r.z0);
  CHECK(back(0) == Catch::Approx(3.0).epsilon(1e-12));
  CHECK(back(1) == Catch::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("logdet matches a central-difference Jacobian at L=2") {
  FlowPrior flow = random_flow(2, 4, 17);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Vec z = random_normal(2, 1, rng);
    double h = 1e-6;
    Mat jac(2, 2);
    for (int j = 0; j < 2; ++j) {
      Vec zp = z, zm = z;
      zp(j) += h;
      zm(j) -= h;
      jac.col(j) = (flow_forward(flow, zp).z0 - flow_forward(flow, zm).z0) / (2.0 * h);
    }
    double num = std::log(std::abs(jac.determinant()));
    double ana = flow_forward(flow, z).logdet;
    CHECK(std::abs(num - ana) < 1e-4);
  }
}

TEST_CASE("round trip is exact to 1e-5 on 1000 random vectors") {
  FlowPrior flow = random_flow(8, 6, 23);
  Rng rng(3);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec z = random_normal(8, 1, rng, 2.0);
    Vec back = flow_inverse(flow, flow_forward(flow, z).z0);
    worst = std::max(worst, (back - z).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("forward and inverse log-determinants cancel") {
  FlowPrior flow = random_flow(4, 5, 31);
  Rng rng(4);
  Vec z = random_normal(4, 1, rng);
  FlowResult fwd = flow_forward(flow, z);
  // inverse logdet via numerical Jacobian of the inverse map
  double h = 1e-6;
  Mat jac(4, 4);
  for (int j = 0; j < 4; ++j) {
    Vec zp = fwd.z0, zm = fwd.z0;
    zp(j) += h;
    zm(j) -= h;
    jac.col(j) = (flow_inverse(flow, zp) - flow_inverse(flow, zm)) / (2.0 * h);
  }
  double inv_logdet = std::log(std::abs(jac.determinant()));
  CHECK(std::abs(fwd.logdet + inv_logdet) < 1e-4);
}

TEST_CASE("log_prob of the identity flow is the standard normal density") {
  FlowConfig cfg;
  cfg.latent_dim = 2;
  FlowPrior flow = make_flow(cfg);
  Vec zero = Vec::Zero(2);
  CHECK(log_prob(flow, zero) == Catch::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
  Rng rng(5);
  Vec z = random_normal(2, 1, rng);
  double expect = -0.5 * z.squaredNorm() - std::log(2.0 * M_PI);
  CHECK(log_prob(flow, z) == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("density integrates to one over a 2-D grid") {
  FlowPrior flow = random_flow(2, 4, 41, 0.15);
  // support box: preimage of the +-6 sigma Gaussian box, padded
  double lo = 0.0, hi = 0.0;
  Vec z0(2);
  for (int i = 0; i <= 60; ++i)
    for (int j = 0; j <= 60; ++j) {
      z0(0) = -6.0 + 0.2 * i;
      z0(1) = -6.0 + 0.2 * j;
      Vec z = flow_inverse(flow, z0);
      lo = std::min({lo, z(0), z(1)});
      hi = std::max({hi, z(0), z(1)});
    }
  lo -= 0.2 * (hi - lo);
  hi += 0.2 * (hi - lo);
  long n = 1200;
  double step = (hi - lo) / static_cast<double>(n);
  double mass = 0.0;
  Vec z(2);
  for (long i = 0; i < n; ++i) {
    z(0) = lo + (static_cast<double>(i) + 0.5) * step;
    for (long j = 0; j < n; ++j) {
      z(1) = lo + (static_cast<double>(j) + 0.5) * step;
      mass += std::exp(log_prob(flow, z)) * step * step;
    }
  }
  CHECK(mass == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("samples are deterministic per seed and identity flow samples are Gaussian") {
  FlowConfig cfg;
  cfg.latent_dim = 3;
  FlowPrior flow = make_flow(cfg);
  Mat a = sample(flow, 5, 123);
  Mat b = sample(flow, 5, 123);
  CHECK(a == b);
  Mat c = sample(flow, 5, 124);
  CHECK(a != c);

  Mat big = sample(flow, 20000, 7);
  for (int d = 0; d < 3; ++d) {
    double m = big.col(d).mean();
    double v = (big.col(d).array() - m).square().sum() / (big.rows() - 1.0);
    CHECK(std::abs(m) < 0.03);
    CHECK(std::abs(v - 1.0) < 0.05);
  }
}

TEST_CASE("sampled density matches log_prob on the marginals") {
  FlowPrior flow = random_flow(2, 4, 59, 0.3);
  int n = 100000;
  Mat samples = sample(flow, n, 11);

  // numeric marginal cdf of the first coordinate from the density grid
  double lo = -10.0, hi = 10.0, step = 0.02;
  long nb = static_cast<long>((hi - lo) / step);
  std::vector<double> marginal(static_cast<std::size_t>(nb), 0.0);
  Vec z(2);
  for (long i = 0; i < nb; ++i) {
    z(0) = lo + (static_cast<double>(i) + 0.5) * step;
    double acc = 0.0;
    for (long j = 0; j < nb; ++j) {
      z(1) = lo + (static_cast<double>(j) + 0.5) * step;
      acc += std::exp(log_prob(flow, z)) * step;
    }
    marginal[static_cast<std::size_t>(i)] = acc;
  }
  std::vector<double> cdf(static_cast<std::size_t>(nb) + 1, 0.0);
  for (long i = 0; i < nb; ++i)
    cdf[static_cast<std::size_t>(i) + 1] = cdf[static_cast<std::size_t>(i)] + marginal[static_cast<std::size_t>(i)] * step;

  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) xs[static_cast<std::size_t>(i)] = samples(i, 0);
  std::sort(xs.begin(), xs.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = xs[static_cast<std::size_t>(i)];
    long bin = std::clamp(static_cast<long>((x - lo) / step), 0l, nb);
    double model_cdf = cdf[static_cast<std::size_t>(bin)];
    double emp_hi = static_cast<double>(i + 1) / n, emp_lo = static_cast<double>(i) / n;
    ks = std::max({ks, std::abs(emp_hi - model_cdf), std::abs(emp_lo - model_cdf)});
  }
  CHECK(ks < 0.02);
}

TEST_CASE("tape log_prob matches the plain version and its gradients check out") {
  FlowPrior flow = random_flow(3, 3, 71);
  Rng rng(6);
  Mat z = random_normal(1, 3, rng);

  ad::Tape tape;
  FlowVars vars = lift(tape, flow);
  ad::Var zv = tape.leaf(z);
  ad::Var lp = flow_log_prob_tape(tape, flow, vars, zv);
  CHECK(tape.val(lp)(0, 0) == Catch::Approx(log_prob(flow, z.row(0).transpose())).epsilon(1e-12));

  // gradient w.r.t. z and all flow parameters via the generic checker
  std::vector<Mat> leaves = {z};
  for (const auto& layer : flow.layers) {
    leaves.push_back(layer.w1);
    leaves.push_back(layer.b1);
    leaves.push_back(layer.ws);
    leaves.push_back(layer.bs);
    leaves.push_back(layer.wt);
    leaves.push_back(layer.bt);
  }
  auto res = ssmtest::check_gradients(leaves, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
    FlowVars fv;
    std::size_t idx = 1;
    for (std::size_t l = 0; l < flow.layers.size(); ++l) {
      FlowVars::Layer lv{v[idx], v[idx + 1], v[idx + 2], v[idx + 3], v[idx + 4], v[idx + 5]};
      fv.layers.push_back(lv);
      idx += 6;
    }
    return flow_log_prob_tape(t, flow, fv, v[0]);
  });
  CAPTURE(res.max_abs_err, res.max_rel_err);
  CHECK(res.ok);
}
