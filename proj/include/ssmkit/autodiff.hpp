#pragma once

// Reverse-mode automatic differentiation over dense matrices. A Tape owns a
// flat list of nodes created in topological order; backward() replays the
// pull closures in reverse. Values are always computed; pull closures are
// only stored while the tape is recording, so the same forward code serves
// training and plain evaluation.

#include <functional>
#include <vector>

#include "ssmkit/common.hpp"

namespace ssmkit::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var leaf(Mat value) { return push(std::move(value), {}); }

  const Mat& val(Var v) const { return nodes_[check(v)].value; }

  /// Gradient of the last backward() target w.r.t. v; zero matrix if the
  /// target does not depend on v.
  Mat grad(Var v) const {
    const Node& n = nodes_[check(v)];
    if (n.has_grad) return n.grad;
    return Mat::Zero(n.value.rows(), n.value.cols());
  }

  void backward(Var scalar) {
    int root = check(scalar);
    if (nodes_[root].value.size() != 1)
      throw NumericError("backward: target must be a 1x1 scalar");
    if (!recording_)
      throw NumericError("backward: tape is not recording");
    g(root).setConstant(1.0);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.has_grad && n.pull) n.pull();
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise / arithmetic ----

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Mat v = val(a) + val(b);
    return push(std::move(v), [this, a, b](int out) {
      g(a) += g_(out);
      g(b) += g_(out);
    });
  }

  Var sub(Var a, Var b) {
    same_shape(a, b, "sub");
    Mat v = val(a) - val(b);
    return push(std::move(v), [this, a, b](int out) {
      g(a) += g_(out);
      g(b) -= g_(out);
    });
  }

  Var cmul(Var a, Var b) {
    same_shape(a, b, "cmul");
    Mat v = val(a).cwiseProduct(val(b));
    return push(std::move(v), [this, a, b](int out) {
      g(a) += g_(out).cwiseProduct(val(b));
      g(b) += g_(out).cwiseProduct(val(a));
    });
  }

  Var cdiv(Var a, Var b) {
    same_shape(a, b, "cdiv");
    Mat v = val(a).cwiseQuotient(val(b));
    return push(std::move(v), [this, a, b](int out) {
      g(a) += g_(out).cwiseQuotient(val(b));
      g(b) -= g_(out).cwiseProduct(val(a)).cwiseQuotient(val(b).cwiseProduct(val(b)));
    });
  }

  Var scale(Var a, double s) {
    Mat v = s * val(a);
    return push(std::move(v), [this, a, s](int out) { g(a) += s * g_(out); });
  }

  Var add_scalar(Var a, double s) {
    Mat v = val(a).array() + s;
    return push(std::move(v), [this, a](int out) { g(a) += g_(out); });
  }

  Var neg(Var a) { return scale(a, -1.0); }

  Var tanh_(Var a) {
    Mat v = val(a).array().tanh();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += g_(out).array() * (1.0 - val_(out).array().square());
    });
  }

  Var exp_(Var a) {
    Mat v = val(a).array().exp();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += g_(out).array() * val_(out).array();
    });
  }

  Var log_(Var a) {
    Mat v = val(a).array().log();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += g_(out).array() / val(a).array();
    });
  }

  Var sqrt_(Var a) {
    Mat v = val(a).array().sqrt();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += 0.5 * g_(out).array() / val_(out).array();
    });
  }

  Var square(Var a) {
    Mat v = val(a).array().square();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += 2.0 * g_(out).array() * val(a).array();
    });
  }

  Var clamp(Var a, double lo, double hi) {
    Mat v = val(a).array().max(lo).min(hi);
    return push(std::move(v), [this, a, lo, hi](int out) {
      const Mat& x = val(a);
      Mat mask = ((x.array() > lo) && (x.array() < hi)).cast<double>();
      g(a).array() += g_(out).array() * mask.array();
    });
  }

  // ---- linear algebra / structure ----

  Var matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows()) throw NumericError("matmul: shape mismatch");
    Mat v = val(a) * val(b);
    return push(std::move(v), [this, a, b](int out) {
      g(a).noalias() += g_(out) * val(b).transpose();
      g(b).noalias() += val(a).transpose() * g_(out);
    });
  }

  Var transpose(Var a) {
    Mat v = val(a).transpose();
    return push(std::move(v), [this, a](int out) { g(a) += g_(out).transpose(); });
  }

  Var concat_cols(Var a, Var b) {
    if (val(a).rows() != val(b).rows()) throw NumericError("concat_cols: row mismatch");
    Mat v(val(a).rows(), val(a).cols() + val(b).cols());
    v << val(a), val(b);
    long ca = val(a).cols();
    return push(std::move(v), [this, a, b, ca](int out) {
      g(a) += g_(out).leftCols(ca);
      g(b) += g_(out).rightCols(g_(out).cols() - ca);
    });
  }

  Var gather_rows(Var a, std::vector<int> idx) {
    const Mat& x = val(a);
    Mat v(static_cast<long>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) v.row(static_cast<long>(i)) = x.row(idx[i]);
    return push(std::move(v), [this, a, idx = std::move(idx)](int out) {
      Mat& ga = g(a);
      const Mat& go = g_(out);
      for (std::size_t i = 0; i < idx.size(); ++i) ga.row(idx[i]) += go.row(static_cast<long>(i));
    });
  }

  /// Replicate a 1 x m row vector into n rows.
  Var broadcast_row(Var a, long n) {
    if (val(a).rows() != 1) throw NumericError("broadcast_row: expected row vector");
    Mat v = val(a).replicate(n, 1);
    return push(std::move(v), [this, a](int out) { g(a) += g_(out).colwise().sum(); });
  }

  /// Replicate an n x 1 column vector into m columns.
  Var broadcast_col(Var a, long m) {
    if (val(a).cols() != 1) throw NumericError("broadcast_col: expected column vector");
    Mat v = val(a).replicate(1, m);
    return push(std::move(v), [this, a](int out) { g(a) += g_(out).rowwise().sum(); });
  }

  // ---- reductions ----

  Var sum(Var a) {
    Mat v(1, 1);
    v(0, 0) = val(a).sum();
    return push(std::move(v), [this, a](int out) {
      g(a).array() += g_(out)(0, 0);
    });
  }

  Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(val(a).size())); }

  Var rowwise_sum(Var a) {
    Mat v = val(a).rowwise().sum();
    return push(std::move(v), [this, a](int out) {
      g(a).colwise() += g_(out).col(0);
    });
  }

  Var colwise_sum(Var a) {
    Mat v = val(a).colwise().sum();
    return push(std::move(v), [this, a](int out) {
      g(a).rowwise() += g_(out).row(0);
    });
  }

  /// Column-wise max over all rows -> 1 x m. Ties resolve to the lowest row.
  Var colwise_max(Var a) {
    const Mat& x = val(a);
    Mat v(1, x.cols());
    std::vector<int> arg(static_cast<std::size_t>(x.cols()));
    for (long j = 0; j < x.cols(); ++j) {
      int best = 0;
      for (long i = 1; i < x.rows(); ++i)
        if (x(i, j) > x(best, j)) best = static_cast<int>(i);
      arg[static_cast<std::size_t>(j)] = best;
      v(0, j) = x(best, j);
    }
    return push(std::move(v), [this, a, arg = std::move(arg)](int out) {
      Mat& ga = g(a);
      const Mat& go = g_(out);
      for (long j = 0; j < go.cols(); ++j) ga(arg[static_cast<std::size_t>(j)], j) += go(0, j);
    });
  }

  /// Max over consecutive groups of `group` rows -> (n/group) x m.
  Var segment_max_rows(Var a, int group) {
    const Mat& x = val(a);
    if (group <= 0 || x.rows() % group != 0)
      throw NumericError("segment_max_rows: rows not divisible by group");
    long ng = x.rows() / group;
    Mat v(ng, x.cols());
    std::vector<int> arg(static_cast<std::size_t>(ng * x.cols()));
    for (long s = 0; s < ng; ++s) {
      for (long j = 0; j < x.cols(); ++j) {
        long base = s * group;
        long best = base;
        for (long i = base + 1; i < base + group; ++i)
          if (x(i, j) > x(best, j)) best = i;
        arg[static_cast<std::size_t>(s * x.cols() + j)] = static_cast<int>(best);
        v(s, j) = x(best, j);
      }
    }
    return push(std::move(v), [this, a, arg = std::move(arg)](int out) {
      Mat& ga = g(a);
      const Mat& go = g_(out);
      for (long s = 0; s < go.rows(); ++s)
        for (long j = 0; j < go.cols(); ++j)
          ga(arg[static_cast<std::size_t>(s * go.cols() + j)], j) += go(s, j);
    });
  }

  /// Row-wise min -> n x 1. Ties resolve to the lowest column.
  Var rowwise_min(Var a) {
    const Mat& x = val(a);
    Mat v(x.rows(), 1);
    std::vector<int> arg(static_cast<std::size_t>(x.rows()));
    for (long i = 0; i < x.rows(); ++i) {
      int best = 0;
      for (long j = 1; j < x.cols(); ++j)
        if (x(i, j) < x(i, best)) best = static_cast<int>(j);
      arg[static_cast<std::size_t>(i)] = best;
      v(i, 0) = x(i, best);
    }
    return push(std::move(v), [this, a, arg = std::move(arg)](int out) {
      Mat& ga = g(a);
      const Mat& go = g_(out);
      for (long i = 0; i < go.rows(); ++i) ga(i, arg[static_cast<std::size_t>(i)]) += go(i, 0);
    });
  }

  /// Row-wise max -> n x 1.
  Var rowwise_max(Var a) {
    const Mat& x = val(a);
    Mat v(x.rows(), 1);
    std::vector<int> arg(static_cast<std::size_t>(x.rows()));
    for (long i = 0; i < x.rows(); ++i) {
      int best = 0;
      for (long j = 1; j < x.cols(); ++j)
        if (x(i, j) > x(i, best)) best = static_cast<int>(j);
      arg[static_cast<std::size_t>(i)] = best;
      v(i, 0) = x(i, best);
    }
    return push(std::move(v), [this, a, arg = std::move(arg)](int out) {
      Mat& ga = g(a);
      const Mat& go = g_(out);
      for (long i = 0; i < go.rows(); ++i) ga(i, arg[static_cast<std::size_t>(i)]) += go(i, 0);
    });
  }

  /// EdgeConv input features: rows are [f_center | f_neighbor - f_center]
  /// for each (center, neighbor) pair. Fused gather keeps the loops
  /// column-major and allocates once.
  Var edge_features(Var feat, const std::vector<int>& center, const std::vector<int>& neigh) {
    const Mat& f = val(feat);
    if (center.size() != neigh.size()) throw NumericError("edge_features: index size mismatch");
    long e = static_cast<long>(center.size());
    long c = f.cols();
    Mat v(e, 2 * c);
    for (long j = 0; j < c; ++j) {
      const double* col = f.data() + j * f.rows();
      double* out_c = v.data() + j * e;
      double* out_d = v.data() + (c + j) * e;
      for (long i = 0; i < e; ++i) {
        double fc = col[center[static_cast<std::size_t>(i)]];
        out_c[i] = fc;
        out_d[i] = col[neigh[static_cast<std::size_t>(i)]] - fc;
      }
    }
    return push(std::move(v), [this, feat, center, neigh](int out) {
      const Mat& go = g_(out);
      Mat& gf = g(feat);
      long e = go.rows();
      long c = gf.cols();
      for (long j = 0; j < c; ++j) {
        const double* gc = go.data() + j * e;
        const double* gd = go.data() + (c + j) * e;
        double* col = gf.data() + j * gf.rows();
        for (long i = 0; i < e; ++i) {
          col[center[static_cast<std::size_t>(i)]] += gc[i] - gd[i];
          col[neigh[static_cast<std::size_t>(i)]] += gd[i];
        }
      }
    });
  }

  /// Pairwise squared Euclidean distances between rows: n x m.
  Var pairwise_sqdist(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    if (x.cols() != y.cols()) throw NumericError("pairwise_sqdist: column mismatch");
    Mat v = (x.rowwise().squaredNorm().replicate(1, y.rows()) +
             y.rowwise().squaredNorm().transpose().replicate(x.rows(), 1) -
             2.0 * x * y.transpose())
                .cwiseMax(0.0);
    return push(std::move(v), [this, a, b](int out) {
      const Mat& x2 = val(a);
      const Mat& y2 = val(b);
      const Mat& go = g_(out);
      Mat& ga = g(a);
      Mat& gb = g(b);
      // d/dx ||x_i - y_j||^2 = 2 (x_i - y_j)
      Vec grow = go.rowwise().sum();
      Vec gcol = go.colwise().sum();
      ga.noalias() += 2.0 * (grow.asDiagonal() * x2 - go * y2);
      gb.noalias() += 2.0 * (gcol.asDiagonal() * y2 - go.transpose() * x2);
    });
  }

  /// Pairwise Euclidean distances between rows: n x m. The backward pass
  /// guards the unit direction at coincident points, where the true
  /// derivative is undefined; the subgradient chosen vanishes there.
  Var pairwise_dist(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    if (x.cols() != y.cols()) throw NumericError("pairwise_dist: column mismatch");
    Mat v = (x.rowwise().squaredNorm().replicate(1, y.rows()) +
             y.rowwise().squaredNorm().transpose().replicate(x.rows(), 1) -
             2.0 * x * y.transpose())
                .cwiseMax(0.0)
                .cwiseSqrt();
    return push(std::move(v), [this, a, b](int out) {
      const Mat& x2 = val(a);
      const Mat& y2 = val(b);
      const Mat& d = val_(out);
      const Mat& go = g_(out);
      Mat& ga = g(a);
      Mat& gb = g(b);
      Mat w = go.cwiseQuotient(d.cwiseMax(1e-12));
      Vec wrow = w.rowwise().sum();
      Vec wcol = w.colwise().sum();
      ga.noalias() += wrow.asDiagonal() * x2 - w * y2;
      gb.noalias() += wcol.asDiagonal() * y2 - w.transpose() * x2;
    });
  }

  /// Row-wise softmax of (-d / sigma). The row minimum of d is subtracted
  /// before exponentiation; the shift cancels exactly in the softmax.
  Var softmin_rows(Var d, double sigma) {
    const Mat& x = val(d);
    Mat v(x.rows(), x.cols());
    for (long i = 0; i < x.rows(); ++i) {
      double mn = x.row(i).minCoeff();
      Eigen::ArrayXd e = (-(x.row(i).array() - mn) / sigma).exp();
      v.row(i) = (e / e.sum()).matrix();
    }
    return push(std::move(v), [this, d, sigma](int out) {
      const Mat& w = val_(out);
      const Mat& go = g_(out);
      Mat& gd = g(d);
      for (long i = 0; i < w.rows(); ++i) {
        double dot = go.row(i).dot(w.row(i));
        // d(softmax)/du pulled back, u = -d/sigma
        gd.row(i).array() += -(w.row(i).array() * (go.row(i).array() - dot)) / sigma;
      }
    });
  }

private:
  struct Node {
    Mat value;
    Mat grad;
    bool has_grad = false;
    std::function<void()> pull;
  };

  std::vector<Node> nodes_;
  bool recording_;

  int check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw NumericError("autodiff: invalid Var");
    return v.id;
  }

  const Mat& val_(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  Mat& g(Var v) { return g(check(v)); }

  Mat& g(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
    return n.grad;
  }

  const Mat& g_(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  Var push(Mat value, std::function<void(int)> pull) {
    if (!value.allFinite()) throw NumericError("autodiff: non-finite value produced");
    Node n;
    n.value = std::move(value);
    int id = static_cast<int>(nodes_.size());
    if (recording_ && pull) n.pull = [p = std::move(pull), id]() { p(id); };
    nodes_.push_back(std::move(n));
    return Var{id};
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
      throw NumericError(std::string(op) + ": shape mismatch");
  }
};

/// k nearest rows of X for each row, self excluded, squared Euclidean
/// metric, ties broken by ascending row index.
inline std::vector<std::vector<int>> knn_rows(const Mat& x, int k) {
  long n = x.rows();
  if (k >= n) throw NumericError("knn_rows: k must be < number of rows");
  std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
  Mat gram = x * x.transpose();
  Vec sq = gram.diagonal();
  std::vector<std::pair<double, int>> best(static_cast<std::size_t>(k));
  for (long i = 0; i < n; ++i) {
    const double* gcol = gram.data() + i * n;  // gram is symmetric
    int filled = 0;
    for (long j = 0; j < n; ++j) {
      if (j == i) continue;
      std::pair<double, int> cand{sq(j) + sq(i) - 2.0 * gcol[j], static_cast<int>(j)};
      if (filled == k && !(cand < best[static_cast<std::size_t>(k - 1)])) continue;
      int pos = std::min(filled, k - 1);
      while (pos > 0 && cand < best[static_cast<std::size_t>(pos - 1)]) {
        best[static_cast<std::size_t>(pos)] = best[static_cast<std::size_t>(pos - 1)];
        --pos;
      }
      best[static_cast<std::size_t>(pos)] = cand;
      if (filled < k) ++filled;
    }
    auto& row = out[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = best[static_cast<std::size_t>(j)].second;
  }
  return out;
}

}  // namespace ssmkit::ad
