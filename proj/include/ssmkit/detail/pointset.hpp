#pragma once

#include "ssmkit/common.hpp"

namespace ssmkit::detail {

/// For each row of a, the squared Euclidean distance to the nearest row of b.
inline Vec min_sqdist(const Mat& a, const Mat& b) {
  Vec out(a.rows());
  Vec bsq = b.rowwise().squaredNorm();
  for (long i = 0; i < a.rows(); ++i) {
    Vec d = bsq.array() + a.row(i).squaredNorm() - 2.0 * (b * a.row(i).transpose()).array();
    out(i) = std::max(0.0, d.minCoeff());
  }
  return out;
}

/// Symmetric Chamfer distance, mean-of-min convention, squared Euclidean.
inline double chamfer_l2(const Mat& a, const Mat& b) {
  return min_sqdist(a, b).mean() + min_sqdist(b, a).mean();
}

/// Same convention with plain Euclidean distances.
inline double chamfer_l1(const Mat& a, const Mat& b) {
  return min_sqdist(a, b).array().sqrt().mean() + min_sqdist(b, a).array().sqrt().mean();
}

}  // namespace ssmkit::detail
