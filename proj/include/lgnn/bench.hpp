// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgnn/dense_nonlocal.hpp"
#include "lgnn/latent_gnn.hpp"

namespace lgnn {

// One timed configuration. Wall times come from the monotonic clock, taken
// as the median of `repeats` (>= 5) runs after one discarded warmup run.
struct BenchRecord {
  std::string variant;  // "latentgnn" | "dense"
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t c_r = 0;                  // latentgnn only
  std::vector<std::size_t> kernel_dims; // latentgnn only
  std::size_t kernels = 0;              // latentgnn only
  std::size_t repeats = 0;
  std::uint64_t wall_ns_median = 0;
  std::uint64_t wall_ns_min = 0;
  std::uint64_t wall_ns_max = 0;
  std::uint64_t analytic_flops = 0;
  std::uint64_t bytes_peak = 0;
};

BenchRecord bench_latentgnn(std::size_t n, const LayerDims& dims, std::size_t repeats,
                            std::uint64_t seed);
BenchRecord bench_dense(std::size_t n, std::size_t c, AffinityVariant variant,
                        std::size_t repeats, std::uint64_t seed,
                        std::size_t n_cap = kDenseDefaultCap);

// Least-squares slope of ln(median wall time) against ln(N), after dropping
// the record with the smallest N (timer noise floor). Needs >= 3 records
// with distinct N.
double fit_scaling_slope(const std::vector<BenchRecord>& records);

// '#'-prefixed config comment, header row, one line per record. kernel_dims
// is ';'-joined inside its cell.
void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records,
                     const std::string& comment);

}  // namespace lgnn
