// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgnn/dense_nonlocal.hpp"
#include "lgnn/latent_gnn.hpp"

namespace lgnn {

// Gradients of one kernel's parameters. d_latent holds dF for the free kind
// and dPhi for the symmetric-factor kind; it stays empty for identity.
struct KernelGrads {
  Matrix d_theta;
  Matrix d_latent;
  Matrix d_theta_out;  // two-psi kernels only
};

// Gradient of sum(upstream .* x_aug) w.r.t. every layer parameter and the
// input; shapes mirror LatentGnnParams field by field.
struct GradStore {
  Matrix d_w_in;
  std::vector<KernelGrads> kernels;
  Matrix d_w_msg;
  std::vector<double> d_mixture_w;
  Matrix d_w_out;
  double d_lambda = 0.0;
  Matrix d_x;
};

struct DenseGradStore {
  Matrix d_w_msg;
  double d_lambda = 0.0;
  Matrix d_x;
};

// Reverse mode through the stepwise path, replaying the recorded trace.
// The relu subgradient at exactly 0 is taken as 0.
GradStore backward(const ForwardTrace& trace, const LatentGnnParams& p,
                   const Matrix& upstream);

// Independent reverse mode through the materialized-affinity path. Recomputes
// its own forward internals; quadratic in N, same cap as forward_matrix_form.
GradStore backward_matrix_form(const Matrix& x, const LatentGnnParams& p,
                               const Matrix& upstream, std::size_t n_cap = 4096);

DenseGradStore dense_backward(const DenseForwardTrace& trace,
                              const DenseNonLocalParams& p, const Matrix& upstream);

// Named view of one contiguous parameter block. The pointers alias the
// underlying parameter storage, so writes through a view mutate the params.
struct ParamBlock {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

// Blocks in serialization order: w_in, per-kernel theta then latent factor
// (then theta_out when present), w_msg, mixture_w, w_out, lambda.
std::vector<ParamBlock> param_views(LatentGnnParams& p);
std::vector<ParamBlock> grad_views(GradStore& g);
std::vector<ParamBlock> param_views(DenseNonLocalParams& p);
std::vector<ParamBlock> grad_views(DenseGradStore& g);

struct FdBlockReport {
  std::string name;
  double max_rel_err = 0.0;
  double max_abs_diff = 0.0;
};

struct FdReport {
  std::vector<FdBlockReport> blocks;
  double max_rel_err = 0.0;
};

// Central-difference check of an analytic gradient. Perturbs every scalar
// reachable through `blocks` in place by +-h and +-2h around base step h,
// evaluates f, restores, and compares the fourth-order quotient
// (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h against the matching
// entry of `analytic` with rel = |a - n| / max(|a|, |n|, floor). The floor
// tracks the cancellation noise of the quotient, so elements the referee
// cannot resolve at this step size are not scored as disagreements. By
// default floor = max(1e-8, 2e-5 * |f|); when f is a heavily cancelling
// reduction, |f| understates its roundoff scale and the caller should pass
// denom_floor derived from the reduction's magnitude sum instead.
FdReport fd_check(const std::function<double()>& f, std::span<ParamBlock> blocks,
                  std::span<const ParamBlock> analytic, double step, double denom_floor = 0.0);

enum class LossKind { kSum, kSumOfSquares, kCrossEntropy };

struct LossResult {
  double value = 0.0;
  Matrix grad;  // d value / d input, same shape as the input
};

// kCrossEntropy: mean over rows of softmax cross-entropy against per-row
// integer targets; the other kinds ignore `targets`.
LossResult loss_eval(LossKind kind, const Matrix& y,
                     const std::vector<int>* targets = nullptr);

}  // namespace lgnn
