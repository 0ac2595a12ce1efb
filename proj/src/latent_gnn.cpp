// SPDX-License-Identifier: Apache-2.0
#include "lgnn/latent_gnn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lgnn {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw std::overflow_error("flop count overflow");
  }
  return a * b;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  if (b > std::numeric_limits<std::uint64_t>::max() - a) {
    throw std::overflow_error("flop count overflow");
  }
  return a + b;
}

// 2 * x * y * z with overflow checks
std::uint64_t term(std::uint64_t x, std::uint64_t y, std::uint64_t z) {
  return checked_mul(2, checked_mul(x, checked_mul(y, z)));
}

void fill_uniform(Rng& rng, Matrix& m, double bound) {
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
}

void fill_normal(Rng& rng, Matrix& m, double stddev) {
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
}

Matrix draw(Rng& rng, std::size_t rows, std::size_t cols, InitScheme scheme) {
  Matrix m(rows, cols);
  if (scheme == InitScheme::kKaimingUniform) {
    fill_uniform(rng, m, std::sqrt(6.0 / static_cast<double>(rows)));
  } else {
    fill_normal(rng, m, 0.02);
  }
  return m;
}

}  // namespace

void check_params(const LatentGnnParams& p) {
  if (p.w_in.rows() == 0 || p.w_in.cols() == 0) {
    throw std::invalid_argument("LatentGnnParams: empty w_in");
  }
  const std::size_t c = p.c();
  const std::size_t c_r = p.c_reduced();
  if (p.w_msg.rows() != c_r || p.w_msg.cols() != c_r) {
    throw std::invalid_argument("LatentGnnParams: w_msg must be c_r x c_r");
  }
  if (p.w_out.rows() != c_r || p.w_out.cols() != c) {
    throw std::invalid_argument("LatentGnnParams: w_out must be c_r x c");
  }
  if (p.mixture_w.size() != p.kernels.size()) {
    throw std::invalid_argument("LatentGnnParams: mixture_w length != kernels length");
  }
  if (!std::isfinite(p.lambda)) {
    throw std::invalid_argument("LatentGnnParams: non-finite lambda");
  }
  for (double w : p.mixture_w) {
    if (!std::isfinite(w)) throw std::invalid_argument("LatentGnnParams: non-finite mixture weight");
  }
  for (const KernelParams& k : p.kernels) {
    if (k.psi.theta.rows() != c_r) {
      throw std::invalid_argument("KernelParams: theta rows must equal c_r");
    }
    if (k.psi.d() == 0) throw std::invalid_argument("KernelParams: d must be >= 1");
    if (k.latent.d != k.psi.d()) {
      throw std::invalid_argument("KernelParams: latent d != psi d");
    }
    if (k.psi_out && (k.psi_out->theta.rows() != c_r || k.psi_out->d() != k.psi.d())) {
      throw std::invalid_argument("KernelParams: psi_out shape mismatch");
    }
    if (!k.psi.theta.all_finite() || (k.latent.kind == LatentKind::kFree && !k.latent.f.all_finite()) ||
        (k.latent.kind == LatentKind::kSymmetricFactor && !k.latent.phi.all_finite())) {
      throw std::invalid_argument("KernelParams: non-finite parameter");
    }
  }
  if (!p.w_in.all_finite() || !p.w_msg.all_finite() || !p.w_out.all_finite()) {
    throw std::invalid_argument("LatentGnnParams: non-finite parameter");
  }
}

// Applies F * z without materializing F for the structured kinds.
static Matrix latent_apply(const LatentAffinity& a, const Matrix& z) {
  switch (a.kind) {
    case LatentKind::kIdentity:
      return z;
    case LatentKind::kFree:
      return matmul(a.f, z);
    case LatentKind::kSymmetricFactor:
      return matmul(a.phi, matmul_at(a.phi, z));
  }
  throw std::invalid_argument("latent_apply: unknown kind");
}

ForwardTrace forward_stepwise(const Matrix& x, const LatentGnnParams& p) {
  check_params(p);
  if (x.cols() != p.c()) {
    throw std::invalid_argument("forward_stepwise: x cols " + std::to_string(x.cols()) +
                                " != c " + std::to_string(p.c()));
  }
  ForwardTrace t;
  t.x = x;
  t.x_reduced = matmul(x, p.w_in);
  t.msg = matmul(t.x_reduced, p.w_msg);
  t.context = Matrix(x.rows(), p.c_reduced());
  t.kernels.reserve(p.kernels.size());
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    KernelTrace kt;
    kt.psi_pre = matmul(t.x_reduced, k.psi.theta);
    kt.psi = apply_activation(kt.psi_pre, k.psi.activation);
    kt.z = matmul_at(kt.psi, t.msg);          // step 1: collect to latents
    kt.z_tilde = latent_apply(k.latent, kt.z);  // step 2: latent propagation
    const Matrix* scatter_psi = &kt.psi;
    if (k.psi_out) {
      kt.psi_out_pre = matmul(t.x_reduced, k.psi_out->theta);
      kt.psi_out = apply_activation(kt.psi_out_pre, k.psi_out->activation);
      scatter_psi = &kt.psi_out;
    }
    axpy(t.context, p.mixture_w[m], matmul(*scatter_psi, kt.z_tilde));  // step 3
    t.kernels.push_back(std::move(kt));
  }
  t.activated = apply_activation(t.context, p.activation);
  t.x_tilde = matmul(t.activated, p.w_out);
  t.x_aug = x;
  axpy(t.x_aug, p.lambda, t.x_tilde);
  return t;
}

Matrix forward_matrix_form(const Matrix& x, const LatentGnnParams& p, std::size_t n_cap) {
  check_params(p);
  if (x.cols() != p.c()) {
    throw std::invalid_argument("forward_matrix_form: x cols != c");
  }
  const std::size_t n = x.rows();
  if (n > n_cap) {
    throw std::invalid_argument("forward_matrix_form: N " + std::to_string(n) +
                                " exceeds cap " + std::to_string(n_cap));
  }
  const Matrix x_reduced = matmul(x, p.w_in);
  Matrix a(n, n);
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    const Matrix psi_in = psi(x_reduced, k.psi);
    const Matrix f = latent_matrix(k.latent);
    if (k.psi_out) {
      const Matrix psi_o = psi(x_reduced, *k.psi_out);
      axpy(a, p.mixture_w[m], matmul_bt(matmul(psi_o, f), psi_in));
    } else {
      axpy(a, p.mixture_w[m], expand_low_rank(psi_in, f));
    }
  }
  const Matrix context = matmul(a, matmul(x_reduced, p.w_msg));
  const Matrix x_tilde = matmul(apply_activation(context, p.activation), p.w_out);
  Matrix x_aug = x;
  axpy(x_aug, p.lambda, x_tilde);
  return x_aug;
}

std::uint64_t latentgnn_flops(const LayerShape& s) {
  if (s.n == 0 || s.c == 0 || s.c_r == 0) {
    throw std::invalid_argument("latentgnn_flops: dims must be positive");
  }
  std::uint64_t total = term(s.n, s.c, s.c_r);               // reduce
  total = checked_add(total, term(s.n, s.c_r, s.c_r));       // message map
  total = checked_add(total, term(s.n, s.c_r, s.c));         // restore
  for (std::uint64_t d : s.kernel_dims) {
    if (d == 0) throw std::invalid_argument("latentgnn_flops: d must be positive");
    total = checked_add(total, term(s.n, s.c_r, d));         // psi
    total = checked_add(total, term(s.n, d, s.c_r));         // collect
    total = checked_add(total, term(d, d, s.c_r));           // latent
    total = checked_add(total, term(s.n, d, s.c_r));         // scatter
  }
  return total;
}

ParamCount latentgnn_param_count(const LayerShape& s, LatentKind kind) {
  ParamCount pc;
  pc.bottleneck = checked_add(checked_mul(s.c, s.c_r), checked_mul(s.c_r, s.c));
  pc.core = checked_mul(s.c_r, s.c_r);  // w_msg
  for (std::uint64_t d : s.kernel_dims) {
    pc.core = checked_add(pc.core, checked_mul(s.c_r, d));  // theta
    switch (kind) {
      case LatentKind::kIdentity: break;
      case LatentKind::kFree:
      case LatentKind::kSymmetricFactor:
        pc.core = checked_add(pc.core, checked_mul(d, d));
        break;
    }
    pc.core = checked_add(pc.core, 1);  // mixture weight
  }
  pc.core = checked_add(pc.core, 1);  // lambda
  return pc;
}

std::uint64_t latentgnn_bytes_peak(const LayerShape& s) {
  // Live at the widest point: x_reduced, msg, context, activated (N x c_r each),
  // one kernel's psi (N x d_max) and z/z_tilde (d x c_r), plus the output (N x c).
  std::uint64_t d_max = 0;
  for (std::uint64_t d : s.kernel_dims) d_max = std::max(d_max, d);
  std::uint64_t doubles = checked_mul(4, checked_mul(s.n, s.c_r));
  doubles = checked_add(doubles, checked_mul(s.n, d_max));
  doubles = checked_add(doubles, checked_mul(2, checked_mul(d_max, s.c_r)));
  doubles = checked_add(doubles, checked_mul(s.n, s.c));
  return checked_mul(8, doubles);
}

LatentGnnParams init_params(Rng& rng, const LayerDims& dims, InitScheme scheme) {
  if (dims.c == 0 || dims.c_r == 0 || dims.kernel_dims.empty()) {
    throw std::invalid_argument("init_params: dims must be positive");
  }
  LatentGnnParams p;
  p.activation = dims.activation;
  p.w_in = draw(rng, dims.c, dims.c_r, scheme);
  for (std::size_t d : dims.kernel_dims) {
    KernelParams k;
    k.psi.theta = draw(rng, dims.c_r, d, scheme);
    k.psi.activation = dims.psi_activation;
    switch (dims.kind) {
      case LatentKind::kIdentity:
        k.latent = LatentAffinity::make_identity(d);
        break;
      case LatentKind::kFree:
        k.latent = LatentAffinity::make_free(draw(rng, d, d, scheme));
        break;
      case LatentKind::kSymmetricFactor:
        k.latent = LatentAffinity::make_symmetric_factor(draw(rng, d, d, scheme));
        break;
    }
    p.kernels.push_back(std::move(k));
  }
  p.w_msg = draw(rng, dims.c_r, dims.c_r, scheme);
  p.mixture_w.assign(dims.kernel_dims.size(), 1.0 / static_cast<double>(dims.kernel_dims.size()));
  p.w_out = draw(rng, dims.c_r, dims.c, scheme);
  p.lambda = 0.0;
  return p;
}

LayerShape shape_of(const LatentGnnParams& p, std::size_t n) {
  LayerShape s;
  s.n = n;
  s.c = p.c();
  s.c_r = p.c_reduced();
  for (const KernelParams& k : p.kernels) s.kernel_dims.push_back(k.d());
  return s;
}

}  // namespace lgnn
