// SPDX-License-Identifier: Apache-2.0
#include "lgnn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "lgnn/autograd.hpp"
#include "lgnn/rng.hpp"

namespace lgnn {

namespace {

constexpr std::uint64_t kGradSuiteStream = 0x67726164ULL;  // "grad"
constexpr std::uint64_t kUpstreamStream = 0x75707374ULL;   // "upst"

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

double kink_margin(const ForwardTrace& t, const LatentGnnParams& p) {
  double margin = 1e300;
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    if (p.kernels[m].psi.activation != Activation::kRelu) continue;
    for (double v : t.kernels[m].psi_pre.data()) margin = std::min(margin, std::abs(v));
  }
  if (p.activation == Activation::kRelu)
    for (double v : t.context.data()) margin = std::min(margin, std::abs(v));
  return margin;
}

struct SuiteResult {
  std::size_t failures = 0;
  double max_err = 0.0;
  std::uint64_t worst_seed = 0;

  void update(double err, std::uint64_t seed, double tolerance) {
    if (err > max_err) {
      max_err = err;
      worst_seed = seed;
    }
    if (!(err <= tolerance)) ++failures;
  }

  void merge(const SuiteResult& other) {
    failures += other.failures;
    if (other.max_err > max_err) {
      max_err = other.max_err;
      worst_seed = other.worst_seed;
    }
  }
};

double grad_path_diff(GradStore& a, GradStore& b) {
  const auto va = grad_views(a);
  const auto vb = grad_views(b);
  if (va.size() != vb.size()) throw std::logic_error("grad view mismatch between paths");
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].size != vb[i].size) throw std::logic_error("grad block mismatch between paths");
    for (std::size_t j = 0; j < va[i].size; ++j)
      worst = std::max(worst, std::abs(va[i].data[j] - vb[i].data[j]));
  }
  worst = std::max(worst, max_abs_diff(a.d_x, b.d_x));
  return worst;
}

// Runs fn(trial) for every index in [0, trials) split across `threads`.
template <typename Fn>
void parallel_trials(std::size_t trials, std::size_t threads, Fn&& fn) {
  if (threads <= 1) {
    for (std::size_t t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t tid = 0; tid < threads; ++tid) {
    pool.emplace_back([tid, trials, threads, &fn] {
      for (std::size_t t = tid; t < trials; t += threads) fn(t);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Instance random_instance(std::uint64_t seed, std::size_t max_n, std::size_t max_c) {
  if (max_n < 2 || max_c < 1) throw std::invalid_argument("random_instance: bounds too small");
  Rng rng(seed);
  const std::size_t n = 2 + rng.below(max_n - 1);
  const std::size_t c = 1 + rng.below(max_c);
  const std::size_t c_r = 1 + rng.below(c);
  const std::size_t kernels = 1 + rng.below(3);

  LayerDims dims;
  dims.c = c;
  dims.c_r = c_r;
  for (std::size_t m = 0; m < kernels; ++m) {
    const bool oversize = rng.uniform() < 0.15;
    dims.kernel_dims.push_back(oversize ? n + rng.below(4) : 1 + rng.below(8));
  }
  dims.kind = LatentKind::kFree;
  dims.activation = rng.below(2) == 0 ? Activation::kRelu : Activation::kIdentity;
  dims.psi_activation = Activation::kRelu;

  Instance inst;
  inst.params = init_params(rng, dims);
  for (std::size_t m = 0; m < kernels; ++m) {
    KernelParams& k = inst.params.kernels[m];
    const std::size_t d = k.psi.d();
    switch (rng.below(3)) {
      case 0:
        k.latent = LatentAffinity::make_identity(d);
        break;
      case 1:
        k.latent = LatentAffinity::make_free(random_matrix(rng, d, d, 0.5));
        break;
      default: {
        const std::size_t rank = 1 + rng.below(d);
        k.latent = LatentAffinity::make_symmetric_factor(random_matrix(rng, d, rank, 0.5));
        break;
      }
    }
    k.psi.activation = rng.below(2) == 0 ? Activation::kRelu : Activation::kIdentity;
  }
  // Mixture magnitudes stay within one decade of each other so no kernel's
  // gradient block is crushed below the FD referee's noise floor.
  for (double& w : inst.params.mixture_w) {
    w = rng.uniform(0.1, 1.0) * (rng.below(2) == 0 ? 1.0 : -1.0);
  }
  inst.params.lambda = rng.uniform(-1.0, 1.0);
  inst.x = random_matrix(rng, n, c, 0.5);

  // Tail draws (small c_r kaiming bounds, deep multiplicative chains) can
  // push outputs to 1e5+, where absolute tolerances in the 1e-10 range sit
  // below double resolution. Mixture weights scale the context linearly,
  // so rescaling them bounds the output without changing anything else.
  const double peak = max_abs(forward_stepwise(inst.x, inst.params).context);
  const double factor = std::max(1.0, peak / 8.0);
  for (double& w : inst.params.mixture_w) w /= factor;
  return inst;
}

Instance kink_guarded_instance(std::uint64_t seed, std::size_t max_n, std::size_t max_c,
                               double margin) {
  for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
    Instance inst = random_instance(Rng::mix(seed, attempt), max_n, max_c);
    const ForwardTrace t = forward_stepwise(inst.x, inst.params);
    if (kink_margin(t, inst.params) > margin) return inst;
  }
  throw std::runtime_error("kink_guarded_instance: exhausted resampling attempts");
}

VerifyReport run_verify(const VerifyOptions& opts) {
  if (opts.trials == 0) throw std::invalid_argument("verify: trials must be >= 1");
  if (opts.threads == 0) throw std::invalid_argument("verify: threads must be >= 1");

  VerifyReport rep;
  rep.equiv_trials = opts.trials;
  rep.grad_trials = std::max<std::size_t>(1, opts.trials / 4);

  const std::size_t threads = std::min(opts.threads, rep.equiv_trials);

  {
    std::vector<SuiteResult> partial(std::max<std::size_t>(threads, 1));
    parallel_trials(rep.equiv_trials, threads, [&](std::size_t trial) {
      const std::uint64_t inst_seed = Rng::mix(opts.seed, trial);
      const Instance inst = random_instance(inst_seed, opts.max_n, opts.max_c);
      const ForwardTrace t = forward_stepwise(inst.x, inst.params);
      const Matrix ref = forward_matrix_form(inst.x, inst.params);
      const double err = max_abs_diff(t.x_aug, ref);
      partial[trial % std::max<std::size_t>(threads, 1)].update(err, inst_seed, opts.tolerance);
    });
    SuiteResult total;
    for (const auto& p : partial) total.merge(p);
    rep.equiv_failures = total.failures;
    rep.equiv_max_err = total.max_err;
    rep.equiv_worst_seed = total.worst_seed;
  }

  {
    const std::size_t grad_threads = std::min(threads, rep.grad_trials);
    std::vector<SuiteResult> fd_partial(std::max<std::size_t>(grad_threads, 1));
    std::vector<SuiteResult> path_partial(std::max<std::size_t>(grad_threads, 1));
    const std::size_t max_n = std::min<std::size_t>(opts.max_n, 20);
    const std::size_t max_c = std::min<std::size_t>(opts.max_c, 8);

    parallel_trials(rep.grad_trials, grad_threads, [&](std::size_t trial) {
      const std::uint64_t inst_seed = Rng::mix(Rng::mix(opts.seed, kGradSuiteStream), trial);
      Instance inst = kink_guarded_instance(inst_seed, max_n, max_c, 3e-3);

      Rng up_rng(Rng::mix(inst_seed, kUpstreamStream));
      const Matrix upstream =
          random_matrix(up_rng, inst.x.rows(), inst.x.cols(), 1.0);

      const ForwardTrace t = forward_stepwise(inst.x, inst.params);
      GradStore g = backward(t, inst.params, upstream);
      GradStore gm = backward_matrix_form(inst.x, inst.params, upstream);
      path_partial[trial % std::max<std::size_t>(grad_threads, 1)].update(
          grad_path_diff(g, gm), inst_seed, opts.path_tolerance);

      auto blocks = param_views(inst.params);
      blocks.push_back({"x", inst.x.data().data(), inst.x.size()});
      auto analytic = grad_views(g);
      analytic.push_back({"x", g.d_x.data().data(), g.d_x.size()});

      const auto f = [&inst, &upstream] {
        return dot_all(upstream, forward_stepwise(inst.x, inst.params).x_aug);
      };
      // f is a cancelling reduction: its roundoff scale is the magnitude
      // sum of the dot, not |f| itself.
      double mag_sum = 0.0;
      {
        const auto us = upstream.data();
        const auto ys = t.x_aug.data();
        for (std::size_t i = 0; i < us.size(); ++i) mag_sum += std::abs(us[i]) * std::abs(ys[i]);
      }
      const FdReport fd = fd_check(f, blocks, analytic, opts.fd_step, 5e-5 * mag_sum);
      fd_partial[trial % std::max<std::size_t>(grad_threads, 1)].update(
          fd.max_rel_err, inst_seed, opts.grad_tolerance);
    });

    SuiteResult fd_total, path_total;
    for (const auto& p : fd_partial) fd_total.merge(p);
    for (const auto& p : path_partial) path_total.merge(p);
    rep.grad_failures = fd_total.failures;
    rep.grad_max_rel = fd_total.max_err;
    rep.grad_worst_seed = fd_total.worst_seed;
    rep.path_failures = path_total.failures;
    rep.path_max_err = path_total.max_err;
    rep.path_worst_seed = path_total.worst_seed;
  }

  return rep;
}

void print_verify_report(std::ostream& out, const VerifyReport& r, const VerifyOptions& opts) {
  const auto line = [&out](const char* name, std::size_t trials, double err, double tol,
                           std::size_t failures, std::uint64_t worst) {
    out << name << ": " << trials << " trials, max err " << err << " (tolerance " << tol << ") ";
    if (failures == 0) {
      out << "[ok]\n";
    } else {
      out << "[FAIL " << failures << " trials, worst seed " << worst << "]\n";
    }
  };
  line("equivalence stepwise-vs-matrix", r.equiv_trials, r.equiv_max_err, opts.tolerance,
       r.equiv_failures, r.equiv_worst_seed);
  line("gradient analytic-vs-central-fd", r.grad_trials, r.grad_max_rel, opts.grad_tolerance,
       r.grad_failures, r.grad_worst_seed);
  line("gradient stepwise-vs-matrix", r.grad_trials, r.path_max_err, opts.path_tolerance,
       r.path_failures, r.path_worst_seed);
}

}  // namespace lgnn
