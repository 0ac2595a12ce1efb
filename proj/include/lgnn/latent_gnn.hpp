// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lgnn/affinity.hpp"
#include "lgnn/matrix.hpp"
#include "lgnn/rng.hpp"

namespace lgnn {

// One low-rank term of the mixture: a visible<->latent affinity and the
// latent-to-latent matrix. psi_out, when set, parametrizes the latent-to-
// visible direction separately from the visible-to-latent one; by default
// both directions share psi, which is what makes the layer equal to a
// rank-d fully-connected update.
struct KernelParams {
  PsiParams psi;
  LatentAffinity latent;
  std::optional<PsiParams> psi_out;

  std::size_t d() const { return psi.d(); }
};

// Full layer: bottleneck reduce, mixture of low-rank kernels over the reduced
// channels, shared message map, output projection, residual scale.
struct LatentGnnParams {
  Matrix w_in;                    // c x c_r
  std::vector<KernelParams> kernels;
  Matrix w_msg;                   // c_r x c_r
  std::vector<double> mixture_w;  // one weight per kernel
  Matrix w_out;                   // c_r x c
  double lambda = 0.0;
  Activation activation = Activation::kRelu;

  std::size_t c() const { return w_in.rows(); }
  std::size_t c_reduced() const { return w_in.cols(); }
};

struct KernelTrace {
  Matrix psi_pre;   // N x d, pre-activation X_r * theta
  Matrix psi;       // N x d
  Matrix z;         // d x c_r
  Matrix z_tilde;   // d x c_r
  Matrix psi_out_pre;  // only for two-psi kernels
  Matrix psi_out;
};

// Every intermediate of the stepwise forward, recorded for reverse mode.
struct ForwardTrace {
  Matrix x;          // N x c input
  Matrix x_reduced;  // N x c_r
  Matrix msg;        // N x c_r, X_r * w_msg
  std::vector<KernelTrace> kernels;
  Matrix context;    // N x c_r, pre-activation mixture sum
  Matrix activated;  // N x c_r
  Matrix x_tilde;    // N x c
  Matrix x_aug;      // N x c
};

// Three-step path: collect to latent, propagate among latents, scatter back.
// Never materializes an N x N matrix; peak extra memory is O(N*(c_r + d)).
ForwardTrace forward_stepwise(const Matrix& x, const LatentGnnParams& p);

// Reference path through the materialized mixture affinity
// A = sum_m w_m psi_m F_m psi_m^T. Quadratic in N; refuses N > n_cap.
Matrix forward_matrix_form(const Matrix& x, const LatentGnnParams& p,
                           std::size_t n_cap = 4096);

struct LayerShape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t c_r = 0;
  std::vector<std::size_t> kernel_dims;
};

// Exact multiply-add count of forward_stepwise, with the 2x multiply-add
// convention:
//   2*N*c*c_r (reduce) + 2*N*c_r^2 (message) + 2*N*c_r*c (restore)
//   + per kernel m: 2*N*c_r*d_m (psi) + 2*N*d_m*c_r (collect)
//                   + 2*d_m^2*c_r (latent) + 2*N*d_m*c_r (scatter)
// Throws std::overflow_error if the count exceeds uint64.
std::uint64_t latentgnn_flops(const LayerShape& shape);

// Learnable scalar count for the same shape, split so the bottleneck
// projections can be reported separately from the message-passing core
// (theta + latent factors + w_msg + mixture + lambda).
struct ParamCount {
  std::uint64_t core = 0;        // kernels + w_msg + mixture_w + lambda
  std::uint64_t bottleneck = 0;  // w_in + w_out
  std::uint64_t total() const { return core + bottleneck; }
};
ParamCount latentgnn_param_count(const LayerShape& shape, LatentKind kind);

// Analytic peak-extra-bytes estimate of forward_stepwise (transient buffers,
// excluding input and parameters).
std::uint64_t latentgnn_bytes_peak(const LayerShape& shape);

enum class InitScheme { kKaimingUniform, kSmallNormal };

struct LayerDims {
  std::size_t c = 0;
  std::size_t c_r = 0;
  std::vector<std::size_t> kernel_dims;
  LatentKind kind = LatentKind::kIdentity;
  Activation activation = Activation::kRelu;
  Activation psi_activation = Activation::kRelu;
};

// Draws theta and the weight matrices per scheme, sets mixture weights to
// 1/kernels and lambda to 0 so a freshly initialized layer is an exact
// identity map.
LatentGnnParams init_params(Rng& rng, const LayerDims& dims,
                            InitScheme scheme = InitScheme::kKaimingUniform);

LayerShape shape_of(const LatentGnnParams& p, std::size_t n);

void check_params(const LatentGnnParams& p);

}  // namespace lgnn
