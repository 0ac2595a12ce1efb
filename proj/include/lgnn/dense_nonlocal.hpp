// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "lgnn/affinity.hpp"
#include "lgnn/matrix.hpp"

namespace lgnn {

// Brute-force fully-connected non-local block. Serves as the correctness
// oracle for the low-rank layer and as the quadratic-complexity baseline, so
// it carries the same residual wrapper.
struct DenseNonLocalParams {
  Matrix w_msg;  // c x c
  AffinityVariant variant = AffinityVariant::kSim;
  Activation activation = Activation::kRelu;
  double lambda = 0.0;
};

struct DenseForwardTrace {
  Matrix x;
  Matrix affinity;              // N x N, normalized when variant == lap
  std::vector<double> degrees;  // unnormalized row sums (lap only)
  Matrix xw;                    // X * w_msg
  Matrix pre_act;               // A * X * w_msg
  Matrix x_tilde;
  Matrix x_aug;
};

inline constexpr std::size_t kDenseDefaultCap = 8192;

// X_aug = lambda * h(A(X) X W) + X with A materialized. Throws when
// N > n_cap (the N x N buffer is N^2 doubles).
DenseForwardTrace dense_forward(const Matrix& x, const DenseNonLocalParams& p,
                                std::size_t n_cap = kDenseDefaultCap);

// Exact multiply-add count with the 2x convention:
//   2*N^2*c (A = X X^T) + 2*N*c^2 (X W) + 2*N^2*c (A * XW)
//   + N^2 normalization ops for the lap variant.
std::uint64_t dense_flops(std::size_t n, std::size_t c,
                          AffinityVariant variant = AffinityVariant::kSim);

// Analytic peak-extra-bytes estimate of dense_forward.
std::uint64_t dense_bytes_peak(std::size_t n, std::size_t c);

}  // namespace lgnn
