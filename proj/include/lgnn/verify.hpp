// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>

#include "lgnn/latent_gnn.hpp"

namespace lgnn {

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 200;      // equivalence instances; gradient suite runs trials/4
  double tolerance = 1e-10;      // stepwise vs matrix-form, max abs
  double grad_tolerance = 1e-6;  // analytic vs central differences, max rel
  double path_tolerance = 1e-9;  // stepwise grads vs matrix-form grads, max abs
  double fd_step = 1e-5;
  std::size_t threads = 1;
  std::size_t max_n = 64;
  std::size_t max_c = 16;
};

struct VerifyReport {
  std::size_t equiv_trials = 0;
  std::size_t equiv_failures = 0;
  double equiv_max_err = 0.0;
  std::uint64_t equiv_worst_seed = 0;

  std::size_t grad_trials = 0;
  std::size_t grad_failures = 0;
  double grad_max_rel = 0.0;
  std::uint64_t grad_worst_seed = 0;

  std::size_t path_failures = 0;
  double path_max_err = 0.0;
  std::uint64_t path_worst_seed = 0;

  bool ok() const { return equiv_failures == 0 && grad_failures == 0 && path_failures == 0; }
};

struct Instance {
  Matrix x;
  LatentGnnParams params;
};

// Deterministic random layer + input covering 1..3 kernels, all latent
// kinds, both activations, random mixture weights and lambda, and
// occasionally d >= N. Never uses the two-psi variant, which is excluded
// from the equivalence contract.
Instance random_instance(std::uint64_t seed, std::size_t max_n, std::size_t max_c);

// Like random_instance but resampled until no relu argument sits within
// `margin` of the kink, so central differences stay valid.
Instance kink_guarded_instance(std::uint64_t seed, std::size_t max_n, std::size_t max_c,
                               double margin);

// Runs the equivalence suite (trials instances) and the gradient suite
// (trials/4 instances, min 1). Deterministic for fixed options; the thread
// count only partitions work. Per-trial seed is Rng::mix(seed, trial index).
VerifyReport run_verify(const VerifyOptions& opts);

void print_verify_report(std::ostream& out, const VerifyReport& r, const VerifyOptions& opts);

}  // namespace lgnn
