#include <catch2/catch_amalgamated.hpp>

#include "ssmkit/autodiff.hpp"
#include "test_support.hpp"

using namespace ssmkit;
using ssmtest::check_gradients;

namespace {

Mat randm(int r, int c, std::uint64_t seed, double scale = 1.0, double shift = 0.0) {
  Rng rng(seed);
  Mat m = random_normal(r, c, rng, scale);
  m.array() += shift;
  return m;
}

// Weighted sum so every output element receives a distinct pull.
ad::Var weighted(ad::Tape& t, ad::Var x, std::uint64_t seed) {
  Mat w = randm(static_cast<int>(t.val(x).rows()), static_cast<int>(t.val(x).cols()), seed);
  return t.sum(t.cmul(x, t.leaf(w)));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  auto check1 = [](auto op, Mat a, std::uint64_t seed) {
    auto res = check_gradients({a}, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, op(t, v[0]), seed);
    });
    CAPTURE(res.max_abs_err, res.max_rel_err);
    CHECK(res.ok);
  };

  check1([](ad::Tape& t, ad::Var a) { return t.tanh_(a); }, randm(3, 4, 1), 100);
  check1([](ad::Tape& t, ad::Var a) { return t.exp_(a); }, randm(3, 4, 2, 0.5), 101);
  check1([](ad::Tape& t, ad::Var a) { return t.log_(a); }, randm(3, 4, 3, 0.2, 2.0), 102);
  check1([](ad::Tape& t, ad::Var a) { return t.sqrt_(a); }, randm(3, 4, 4, 0.2, 2.0), 103);
  check1([](ad::Tape& t, ad::Var a) { return t.square(a); }, randm(3, 4, 5), 104);
  check1([](ad::Tape& t, ad::Var a) { return t.scale(a, -2.5); }, randm(3, 4, 6), 105);
  check1([](ad::Tape& t, ad::Var a) { return t.add_scalar(a, 3.0); }, randm(3, 4, 7), 106);
  check1([](ad::Tape& t, ad::Var a) { return t.clamp(a, -0.6, 0.6); }, randm(3, 4, 8), 107);
}

TEST_CASE("binary ops match finite differences") {
  Mat a = randm(4, 3, 10), b = randm(4, 3, 11, 0.5, 2.0);
  auto check2 = [&](auto op, std::uint64_t seed) {
    auto res = check_gradients({a, b}, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, op(t, v[0], v[1]), seed);
    });
    CAPTURE(res.max_abs_err, res.max_rel_err);
    CHECK(res.ok);
  };
  check2([](ad::Tape& t, ad::Var x, ad::Var y) { return t.add(x, y); }, 200);
  check2([](ad::Tape& t, ad::Var x, ad::Var y) { return t.sub(x, y); }, 201);
  check2([](ad::Tape& t, ad::Var x, ad::Var y) { return t.cmul(x, y); }, 202);
  check2([](ad::Tape& t, ad::Var x, ad::Var y) { return t.cdiv(x, y); }, 203);
  check2([](ad::Tape& t, ad::Var x, ad::Var y) { return t.concat_cols(x, y); }, 204);
}

TEST_CASE("matmul and transpose match finite differences") {
  Mat a = randm(4, 3, 20), b = randm(3, 5, 21);
  auto res = check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return weighted(t, t.matmul(v[0], t.transpose(t.transpose(v[1]))), 300);
  });
  CHECK(res.ok);
}

TEST_CASE("structural ops match finite differences") {
  SECTION("gather_rows with repeats") {
    Mat a = randm(5, 3, 30);
    std::vector<int> idx{0, 2, 2, 4, 1, 0};
    auto res = check_gradients({a}, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, t.gather_rows(v[0], idx), 301);
    });
    CHECK(res.ok);
  }
  SECTION("broadcast_row") {
    Mat a = randm(1, 4, 31);
    auto res = check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, t.broadcast_row(v[0], 6), 302);
    });
    CHECK(res.ok);
  }
  SECTION("broadcast_col") {
    Mat a = randm(4, 1, 32);
    auto res = check_gradients({a}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, t.broadcast_col(v[0], 5), 303);
    });
    CHECK(res.ok);
  }
}

TEST_CASE("reductions match finite differences") {
  Mat a = randm(6, 4, 40);
  auto check1 = [&](auto op, std::uint64_t seed) {
    auto res = check_gradients({a}, [&](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, op(t, v[0]), seed);
    });
    CAPTURE(res.max_abs_err, res.max_rel_err);
    CHECK(res.ok);
  };
  check1([](ad::Tape& t, ad::Var x) { return t.sum(x); }, 400);
  check1([](ad::Tape& t, ad::Var x) { return t.mean(x); }, 401);
  check1([](ad::Tape& t, ad::Var x) { return t.rowwise_sum(x); }, 402);
  check1([](ad::Tape& t, ad::Var x) { return t.colwise_sum(x); }, 403);
  check1([](ad::Tape& t, ad::Var x) { return t.colwise_max(x); }, 404);
  check1([](ad::Tape& t, ad::Var x) { return t.rowwise_min(x); }, 405);
  check1([](ad::Tape& t, ad::Var x) { return t.rowwise_max(x); }, 406);
  check1([](ad::Tape& t, ad::Var x) { return t.segment_max_rows(x, 3); }, 407);
}

TEST_CASE("edge_features matches its composed form and differentiates") {
  Mat f = randm(6, 4, 75);
  std::vector<int> center{0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5};
  std::vector<int> neigh{1, 2, 0, 3, 4, 5, 2, 0, 5, 1, 3, 0};
  ad::Tape t(false);
  ad::Var fv = t.leaf(f);
  ad::Var fused = t.edge_features(fv, center, neigh);
  ad::Var c = t.gather_rows(fv, center);
  ad::Var n = t.gather_rows(fv, neigh);
  ad::Var composed = t.concat_cols(c, t.sub(n, c));
  CHECK((t.val(fused) - t.val(composed)).cwiseAbs().maxCoeff() == 0.0);

  auto res = check_gradients({f}, [&](ad::Tape& tp, const std::vector<ad::Var>& v) {
    return weighted(tp, tp.edge_features(v[0], center, neigh), 750);
  });
  CAPTURE(res.max_abs_err, res.max_rel_err);
  CHECK(res.ok);
}

TEST_CASE("pairwise distance ops match finite differences") {
  Mat a = randm(5, 3, 70), b = randm(4, 3, 71);
  SECTION("squared") {
    auto res = check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, t.pairwise_sqdist(v[0], v[1]), 700);
    });
    CAPTURE(res.max_abs_err, res.max_rel_err);
    CHECK(res.ok);
  }
  SECTION("euclidean") {
    auto res = check_gradients({a, b}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
      return weighted(t, t.pairwise_dist(v[0], v[1]), 701);
    });
    CAPTURE(res.max_abs_err, res.max_rel_err);
    CHECK(res.ok);
  }
  SECTION("values match brute force") {
    ad::Tape t(false);
    ad::Var d = t.pairwise_dist(t.leaf(a), t.leaf(b));
    ad::Var d2 = t.pairwise_sqdist(t.leaf(a), t.leaf(b));
    for (long i = 0; i < 5; ++i)
      for (long j = 0; j < 4; ++j) {
        double expect = (a.row(i) - b.row(j)).norm();
        CHECK(t.val(d)(i, j) == Catch::Approx(expect).margin(1e-12));
        CHECK(t.val(d2)(i, j) == Catch::Approx(expect * expect).margin(1e-12));
      }
  }
}

TEST_CASE("softmin_rows matches finite differences and normalizes") {
  Mat d = randm(5, 7, 50, 0.5, 2.0).cwiseAbs();
  auto res = check_gradients({d}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    return weighted(t, t.softmin_rows(v[0], 0.3), 500);
  });
  CHECK(res.ok);

  ad::Tape t(false);
  ad::Var w = t.softmin_rows(t.leaf(d), 0.3);
  for (long i = 0; i < 5; ++i) CHECK(t.val(w).row(i).sum() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("composite expression matches finite differences") {
  // tanh(A B + b) pooled then squared: exercises chained pulls
  Mat a = randm(6, 3, 60), b = randm(3, 4, 61), bias = randm(1, 4, 62);
  auto res = check_gradients({a, b, bias}, [](ad::Tape& t, const std::vector<ad::Var>& v) {
    ad::Var h = t.tanh_(t.add(t.matmul(v[0], v[1]), t.broadcast_row(v[2], 6)));
    return t.sum(t.square(t.colwise_max(h)));
  });
  CHECK(res.ok);
}

TEST_CASE("backward on non-scalar throws") {
  ad::Tape t;
  ad::Var a = t.leaf(Mat::Zero(2, 2));
  CHECK_THROWS_AS(t.backward(a), NumericError);
}

TEST_CASE("knn_rows matches brute force with index tie-breaking") {
  Rng rng(7);
  Mat x = random_normal(20, 3, rng);
  auto got = ad::knn_rows(x, 4);
  for (long i = 0; i < x.rows(); ++i) {
    std::vector<std::pair<double, int>> d;
    for (long j = 0; j < x.rows(); ++j)
      if (j != i) d.emplace_back((x.row(i) - x.row(j)).squaredNorm(), static_cast<int>(j));
    std::sort(d.begin(), d.end());
    for (int k = 0; k < 4; ++k) CHECK(got[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] == d[static_cast<std::size_t>(k)].second);
  }
}
