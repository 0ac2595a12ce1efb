// SPDX-License-Identifier: Apache-2.0
#include "lgnn/dense_nonlocal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lgnn {

DenseForwardTrace dense_forward(const Matrix& x, const DenseNonLocalParams& p,
                                std::size_t n_cap) {
  if (x.cols() != p.w_msg.rows()) {
    throw std::invalid_argument("dense_forward: x cols != w_msg rows");
  }
  if (!p.w_msg.all_finite() || !std::isfinite(p.lambda)) {
    throw std::invalid_argument("dense_forward: non-finite parameter");
  }
  if (x.rows() > n_cap) {
    throw std::invalid_argument("dense_forward: N " + std::to_string(x.rows()) +
                                " exceeds cap " + std::to_string(n_cap));
  }
  DenseForwardTrace t;
  t.x = x;
  t.affinity = matmul_bt(x, x);
  if (p.variant == AffinityVariant::kLap) {
    t.degrees.resize(x.rows());
    for (std::size_t i = 0; i < t.affinity.rows(); ++i) {
      double* row = t.affinity.row(i);
      double degree = 0.0;
      for (std::size_t j = 0; j < t.affinity.cols(); ++j) degree += row[j];
      t.degrees[i] = degree;
      const double guarded = degree > kDegreeEpsilon ? degree : kDegreeEpsilon;
      const double inv = 1.0 / guarded;
      for (std::size_t j = 0; j < t.affinity.cols(); ++j) row[j] *= inv;
    }
  }
  t.xw = matmul(x, p.w_msg);
  t.pre_act = matmul(t.affinity, t.xw);
  t.x_tilde = apply_activation(t.pre_act, p.activation);
  t.x_aug = x;
  axpy(t.x_aug, p.lambda, t.x_tilde);
  return t;
}

std::uint64_t dense_flops(std::size_t n, std::size_t c, AffinityVariant variant) {
  if (n == 0 || c == 0) throw std::invalid_argument("dense_flops: dims must be positive");
  const unsigned __int128 n128 = n, c128 = c;
  unsigned __int128 total = 2 * n128 * n128 * c128;  // A = X X^T
  total += 2 * n128 * c128 * c128;                   // X W
  total += 2 * n128 * n128 * c128;                   // A * XW
  if (variant == AffinityVariant::kLap) total += n128 * n128;
  if (total > std::numeric_limits<std::uint64_t>::max()) {
    throw std::overflow_error("dense_flops: count overflow");
  }
  return static_cast<std::uint64_t>(total);
}

std::uint64_t dense_bytes_peak(std::size_t n, std::size_t c) {
  // Affinity (N^2) plus XW, pre-activation, x_tilde and the output.
  const std::uint64_t n64 = n, c64 = c;
  return 8 * (n64 * n64 + 4 * n64 * c64);
}

}  // namespace lgnn
