// SPDX-License-Identifier: Apache-2.0
#include "lgnn/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace lgnn {

namespace {

// upstream .* act'(pre); the relu subgradient at 0 is 0.
Matrix activation_backprop(const Matrix& upstream, const Matrix& pre, Activation act) {
  if (act == Activation::kIdentity) return upstream;
  Matrix out(upstream.rows(), upstream.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = pre.data()[i] > 0.0 ? upstream.data()[i] : 0.0;
  }
  return out;
}

// Gradients through z_tilde = F z for each latent parametrization. Returns
// dZ and fills the kernel's d_latent.
Matrix latent_backprop(const LatentAffinity& a, const Matrix& z, const Matrix& d_z_tilde,
                       KernelGrads& grads) {
  switch (a.kind) {
    case LatentKind::kIdentity:
      return d_z_tilde;
    case LatentKind::kFree:
      grads.d_latent = matmul_bt(d_z_tilde, z);  // dF = dZt Z^T
      return matmul_at(a.f, d_z_tilde);          // dZ = F^T dZt
    case LatentKind::kSymmetricFactor: {
      const Matrix d_f = matmul_bt(d_z_tilde, z);
      grads.d_latent = matmul(add(d_f, transpose(d_f)), a.phi);
      // F symmetric: dZ = F dZt = phi (phi^T dZt)
      return matmul(a.phi, matmul_at(a.phi, d_z_tilde));
    }
  }
  throw std::invalid_argument("latent_backprop: unknown kind");
}

Matrix latent_grad_through_f(const LatentAffinity& a, const Matrix& d_f) {
  if (a.kind == LatentKind::kSymmetricFactor) {
    return matmul(add(d_f, transpose(d_f)), a.phi);
  }
  return d_f;
}

void check_upstream(const Matrix& upstream, const Matrix& x) {
  if (!upstream.same_shape(x)) {
    throw std::invalid_argument("backward: upstream shape must match x");
  }
}

}  // namespace

GradStore backward(const ForwardTrace& t, const LatentGnnParams& p, const Matrix& upstream) {
  check_params(p);
  check_upstream(upstream, t.x);
  if (t.kernels.size() != p.kernels.size() || t.x_reduced.cols() != p.c_reduced()) {
    throw std::invalid_argument("backward: trace does not match params");
  }

  GradStore g;
  g.kernels.resize(p.kernels.size());
  g.d_mixture_w.assign(p.kernels.size(), 0.0);

  g.d_lambda = dot_all(upstream, t.x_tilde);
  const Matrix d_x_tilde = scale(upstream, p.lambda);
  g.d_w_out = matmul_at(t.activated, d_x_tilde);
  const Matrix d_activated = matmul_bt(d_x_tilde, p.w_out);
  const Matrix d_context = activation_backprop(d_activated, t.context, p.activation);

  Matrix d_x_reduced(t.x_reduced.rows(), t.x_reduced.cols());
  Matrix d_msg(t.msg.rows(), t.msg.cols());

  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    const KernelTrace& kt = t.kernels[m];
    KernelGrads& kg = g.kernels[m];
    const Matrix& scatter_psi = k.psi_out ? kt.psi_out : kt.psi;

    g.d_mixture_w[m] = dot_all(d_context, matmul(scatter_psi, kt.z_tilde));
    const Matrix d_scatter_psi = scale(matmul_bt(d_context, kt.z_tilde), p.mixture_w[m]);
    const Matrix d_z_tilde = scale(matmul_at(scatter_psi, d_context), p.mixture_w[m]);

    const Matrix d_z = latent_backprop(k.latent, kt.z, d_z_tilde, kg);

    // z = psi^T msg
    const Matrix d_collect_psi = matmul_bt(t.msg, d_z);
    axpy(d_msg, 1.0, matmul(kt.psi, d_z));

    if (k.psi_out) {
      const Matrix d_s_out = activation_backprop(d_scatter_psi, kt.psi_out_pre,
                                                 k.psi_out->activation);
      kg.d_theta_out = matmul_at(t.x_reduced, d_s_out);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s_out, k.psi_out->theta));
      const Matrix d_s_in = activation_backprop(d_collect_psi, kt.psi_pre, k.psi.activation);
      kg.d_theta = matmul_at(t.x_reduced, d_s_in);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s_in, k.psi.theta));
    } else {
      const Matrix d_psi = add(d_scatter_psi, d_collect_psi);
      const Matrix d_s = activation_backprop(d_psi, kt.psi_pre, k.psi.activation);
      kg.d_theta = matmul_at(t.x_reduced, d_s);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s, k.psi.theta));
    }
  }

  // msg = x_reduced w_msg
  g.d_w_msg = matmul_at(t.x_reduced, d_msg);
  axpy(d_x_reduced, 1.0, matmul_bt(d_msg, p.w_msg));

  // x_reduced = x w_in; the residual branch adds upstream directly.
  g.d_w_in = matmul_at(t.x, d_x_reduced);
  g.d_x = matmul_bt(d_x_reduced, p.w_in);
  axpy(g.d_x, 1.0, upstream);
  return g;
}

GradStore backward_matrix_form(const Matrix& x, const LatentGnnParams& p,
                               const Matrix& upstream, std::size_t n_cap) {
  check_params(p);
  check_upstream(upstream, x);
  const std::size_t n = x.rows();
  if (n > n_cap) {
    throw std::invalid_argument("backward_matrix_form: N exceeds cap");
  }

  // Forward, keeping everything the chain rule needs.
  const Matrix x_reduced = matmul(x, p.w_in);
  const Matrix y = matmul(x_reduced, p.w_msg);
  std::vector<Matrix> psi_pre(p.kernels.size()), psi_in(p.kernels.size());
  std::vector<Matrix> psi_out_pre(p.kernels.size()), psi_out(p.kernels.size());
  std::vector<Matrix> f_mat(p.kernels.size()), expanded(p.kernels.size());
  Matrix a(n, n);
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    psi_pre[m] = matmul(x_reduced, k.psi.theta);
    psi_in[m] = apply_activation(psi_pre[m], k.psi.activation);
    f_mat[m] = latent_matrix(k.latent);
    if (k.psi_out) {
      psi_out_pre[m] = matmul(x_reduced, k.psi_out->theta);
      psi_out[m] = apply_activation(psi_out_pre[m], k.psi_out->activation);
      expanded[m] = matmul_bt(matmul(psi_out[m], f_mat[m]), psi_in[m]);
    } else {
      expanded[m] = expand_low_rank(psi_in[m], f_mat[m]);
    }
    axpy(a, p.mixture_w[m], expanded[m]);
  }
  const Matrix pre_act = matmul(a, y);
  const Matrix activated = apply_activation(pre_act, p.activation);
  const Matrix x_tilde = matmul(activated, p.w_out);

  GradStore g;
  g.kernels.resize(p.kernels.size());
  g.d_mixture_w.assign(p.kernels.size(), 0.0);

  g.d_lambda = dot_all(upstream, x_tilde);
  const Matrix d_x_tilde = scale(upstream, p.lambda);
  g.d_w_out = matmul_at(activated, d_x_tilde);
  const Matrix d_activated = matmul_bt(d_x_tilde, p.w_out);
  const Matrix d_pre = activation_backprop(d_activated, pre_act, p.activation);

  const Matrix d_a = matmul_bt(d_pre, y);
  Matrix d_y = matmul_at(a, d_pre);
  Matrix d_x_reduced(x_reduced.rows(), x_reduced.cols());

  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    KernelGrads& kg = g.kernels[m];
    const double w_m = p.mixture_w[m];
    g.d_mixture_w[m] = dot_all(d_a, expanded[m]);

    if (k.psi_out) {
      // A_m = psi_out F psi_in^T
      const Matrix d_psi_o = scale(matmul(d_a, matmul_bt(psi_in[m], f_mat[m])), w_m);
      const Matrix d_psi_i = scale(matmul_at(d_a, matmul(psi_out[m], f_mat[m])), w_m);
      const Matrix d_f = scale(matmul(matmul_at(psi_out[m], d_a), psi_in[m]), w_m);
      kg.d_latent = k.latent.kind == LatentKind::kIdentity ? Matrix()
                                                           : latent_grad_through_f(k.latent, d_f);
      const Matrix d_s_o = activation_backprop(d_psi_o, psi_out_pre[m], k.psi_out->activation);
      kg.d_theta_out = matmul_at(x_reduced, d_s_o);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s_o, k.psi_out->theta));
      const Matrix d_s_i = activation_backprop(d_psi_i, psi_pre[m], k.psi.activation);
      kg.d_theta = matmul_at(x_reduced, d_s_i);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s_i, k.psi.theta));
    } else {
      // A_m = psi F psi^T: dPsi = dA psi F^T + dA^T psi F
      const Matrix d_psi = scale(add(matmul(d_a, matmul_bt(psi_in[m], f_mat[m])),
                                     matmul_at(d_a, matmul(psi_in[m], f_mat[m]))),
                                 w_m);
      const Matrix d_f = scale(matmul(matmul_at(psi_in[m], d_a), psi_in[m]), w_m);
      kg.d_latent = k.latent.kind == LatentKind::kIdentity ? Matrix()
                                                           : latent_grad_through_f(k.latent, d_f);
      const Matrix d_s = activation_backprop(d_psi, psi_pre[m], k.psi.activation);
      kg.d_theta = matmul_at(x_reduced, d_s);
      axpy(d_x_reduced, 1.0, matmul_bt(d_s, k.psi.theta));
    }
  }

  g.d_w_msg = matmul_at(x_reduced, d_y);
  axpy(d_x_reduced, 1.0, matmul_bt(d_y, p.w_msg));

  g.d_w_in = matmul_at(x, d_x_reduced);
  g.d_x = matmul_bt(d_x_reduced, p.w_in);
  axpy(g.d_x, 1.0, upstream);
  return g;
}

DenseGradStore dense_backward(const DenseForwardTrace& t, const DenseNonLocalParams& p,
                              const Matrix& upstream) {
  check_upstream(upstream, t.x);
  DenseGradStore g;
  g.d_lambda = dot_all(upstream, t.x_tilde);
  const Matrix d_x_tilde = scale(upstream, p.lambda);
  const Matrix d_pre = activation_backprop(d_x_tilde, t.pre_act, p.activation);

  Matrix d_a = matmul_bt(d_pre, t.xw);
  const Matrix d_xw = matmul_at(t.affinity, d_pre);
  g.d_w_msg = matmul_at(t.x, d_xw);
  g.d_x = matmul_bt(d_xw, p.w_msg);

  if (p.variant == AffinityVariant::kLap) {
    // A = D^-1 M with guarded degrees; rows at the clamp treat 1/D as const.
    Matrix d_m(d_a.rows(), d_a.cols());
    for (std::size_t i = 0; i < d_a.rows(); ++i) {
      const double degree = t.degrees[i];
      const bool clamped = !(degree > kDegreeEpsilon);
      const double guarded = clamped ? kDegreeEpsilon : degree;
      const double inv = 1.0 / guarded;
      double d_degree = 0.0;
      if (!clamped) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d_a.cols(); ++j) acc += d_a(i, j) * t.affinity(i, j);
        d_degree = -inv * acc;
      }
      for (std::size_t j = 0; j < d_a.cols(); ++j) d_m(i, j) = d_a(i, j) * inv + d_degree;
    }
    d_a = std::move(d_m);
  }
  // M = X X^T
  axpy(g.d_x, 1.0, matmul(add(d_a, transpose(d_a)), t.x));
  axpy(g.d_x, 1.0, upstream);
  return g;
}

std::vector<ParamBlock> param_views(LatentGnnParams& p) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"w_in", p.w_in.data().data(), p.w_in.size()});
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    KernelParams& k = p.kernels[m];
    const std::string prefix = "kernel" + std::to_string(m) + ".";
    blocks.push_back({prefix + "theta", k.psi.theta.data().data(), k.psi.theta.size()});
    if (k.latent.kind == LatentKind::kFree) {
      blocks.push_back({prefix + "f", k.latent.f.data().data(), k.latent.f.size()});
    } else if (k.latent.kind == LatentKind::kSymmetricFactor) {
      blocks.push_back({prefix + "phi", k.latent.phi.data().data(), k.latent.phi.size()});
    }
    if (k.psi_out) {
      blocks.push_back({prefix + "theta_out", k.psi_out->theta.data().data(),
                        k.psi_out->theta.size()});
    }
  }
  blocks.push_back({"w_msg", p.w_msg.data().data(), p.w_msg.size()});
  blocks.push_back({"mixture_w", p.mixture_w.data(), p.mixture_w.size()});
  blocks.push_back({"w_out", p.w_out.data().data(), p.w_out.size()});
  blocks.push_back({"lambda", &p.lambda, 1});
  return blocks;
}

std::vector<ParamBlock> grad_views(GradStore& g) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"w_in", g.d_w_in.data().data(), g.d_w_in.size()});
  for (std::size_t m = 0; m < g.kernels.size(); ++m) {
    KernelGrads& k = g.kernels[m];
    const std::string prefix = "kernel" + std::to_string(m) + ".";
    blocks.push_back({prefix + "theta", k.d_theta.data().data(), k.d_theta.size()});
    if (!k.d_latent.empty()) {
      blocks.push_back({prefix + "latent", k.d_latent.data().data(), k.d_latent.size()});
    }
    if (!k.d_theta_out.empty()) {
      blocks.push_back({prefix + "theta_out", k.d_theta_out.data().data(), k.d_theta_out.size()});
    }
  }
  blocks.push_back({"w_msg", g.d_w_msg.data().data(), g.d_w_msg.size()});
  blocks.push_back({"mixture_w", g.d_mixture_w.data(), g.d_mixture_w.size()});
  blocks.push_back({"w_out", g.d_w_out.data().data(), g.d_w_out.size()});
  blocks.push_back({"lambda", &g.d_lambda, 1});
  return blocks;
}

std::vector<ParamBlock> param_views(DenseNonLocalParams& p) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"w_msg", p.w_msg.data().data(), p.w_msg.size()});
  blocks.push_back({"lambda", &p.lambda, 1});
  return blocks;
}

std::vector<ParamBlock> grad_views(DenseGradStore& g) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"w_msg", g.d_w_msg.data().data(), g.d_w_msg.size()});
  blocks.push_back({"lambda", &g.d_lambda, 1});
  return blocks;
}

FdReport fd_check(const std::function<double()>& f, std::span<ParamBlock> blocks,
                  std::span<const ParamBlock> analytic, double step, double denom_floor) {
  if (step <= 0.0) throw std::invalid_argument("fd_check: step must be positive");
  if (denom_floor < 0.0 || !std::isfinite(denom_floor)) {
    throw std::invalid_argument("fd_check: denom_floor must be finite and non-negative");
  }
  if (blocks.size() != analytic.size()) {
    throw std::invalid_argument("fd_check: block count mismatch");
  }
  // The five-point stencil below is exact for polynomials of degree <= 4,
  // which covers every scalar here away from relu kinks (each parameter
  // enters the forward map with per-coordinate degree <= 3). What remains
  // is cancellation noise of order eps*scale/step, so the denominator is
  // floored at that resolution instead of scoring roundoff in f itself.
  const double scale_floor =
      denom_floor > 0.0 ? std::max(1e-8, denom_floor) : std::max(1e-8, 2e-5 * std::fabs(f()));
  FdReport report;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    ParamBlock& blk = blocks[b];
    const ParamBlock& ana = analytic[b];
    if (blk.size != ana.size) throw std::invalid_argument("fd_check: block size mismatch");
    FdBlockReport br;
    br.name = blk.name;
    for (std::size_t i = 0; i < blk.size; ++i) {
      const double saved = blk.data[i];
      blk.data[i] = saved + step;
      const double up1 = f();
      blk.data[i] = saved - step;
      const double down1 = f();
      blk.data[i] = saved + 2.0 * step;
      const double up2 = f();
      blk.data[i] = saved - 2.0 * step;
      const double down2 = f();
      blk.data[i] = saved;
      const double numeric = (8.0 * (up1 - down1) - (up2 - down2)) / (12.0 * step);
      const double a = ana.data[i];
      const double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), scale_floor});
      if (rel > br.max_rel_err) {
        br.max_rel_err = rel;
        br.max_abs_diff = std::fabs(a - numeric);
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, br.max_rel_err);
    report.blocks.push_back(std::move(br));
  }
  return report;
}

LossResult loss_eval(LossKind kind, const Matrix& y, const std::vector<int>* targets) {
  LossResult r;
  switch (kind) {
    case LossKind::kSum: {
      r.grad = Matrix::filled(y.rows(), y.cols(), 1.0);
      double acc = 0.0;
      for (double v : y.data()) acc += v;
      r.value = acc;
      return r;
    }
    case LossKind::kSumOfSquares: {
      r.grad = scale(y, 2.0);
      double acc = 0.0;
      for (double v : y.data()) acc += v * v;
      r.value = acc;
      return r;
    }
    case LossKind::kCrossEntropy: {
      if (targets == nullptr || targets->size() != y.rows()) {
        throw std::invalid_argument("loss_eval: cross-entropy needs one target per row");
      }
      r.grad = Matrix(y.rows(), y.cols());
      const double inv_n = 1.0 / static_cast<double>(y.rows());
      double acc = 0.0;
      for (std::size_t i = 0; i < y.rows(); ++i) {
        const double* row = y.row(i);
        double row_max = row[0];
        for (std::size_t j = 1; j < y.cols(); ++j) row_max = std::max(row_max, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) denom += std::exp(row[j] - row_max);
        const int t = (*targets)[i];
        if (t < 0 || static_cast<std::size_t>(t) >= y.cols()) {
          throw std::invalid_argument("loss_eval: target out of range");
        }
        acc += -(row[t] - row_max - std::log(denom));
        for (std::size_t j = 0; j < y.cols(); ++j) {
          const double softmax = std::exp(row[j] - row_max) / denom;
          r.grad(i, j) = inv_n * (softmax - (static_cast<int>(j) == t ? 1.0 : 0.0));
        }
      }
      r.value = acc * inv_n;
      return r;
    }
  }
  throw std::invalid_argument("loss_eval: unknown kind");
}

}  // namespace lgnn
