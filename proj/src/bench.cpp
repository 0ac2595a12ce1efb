// SPDX-License-Identifier: Apache-2.0
#include "lgnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "lgnn/rng.hpp"

namespace lgnn {

namespace {

// Keeps the optimizer from discarding a timed computation.
void escape(const void* p) { asm volatile("" : : "g"(p) : "memory"); }

Matrix random_input(std::uint64_t seed, std::size_t n, std::size_t c) {
  Rng rng(seed);
  Matrix x(n, c);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

template <typename F>
void time_runs(BenchRecord& rec, std::size_t repeats, F&& run) {
  if (repeats < 5) throw std::invalid_argument("bench: need at least 5 repeats");
  run();  // warmup, discarded
  std::vector<std::uint64_t> ns;
  ns.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const auto t1 = std::chrono::steady_clock::now();
    ns.push_back(static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
  }
  std::sort(ns.begin(), ns.end());
  rec.repeats = repeats;
  rec.wall_ns_min = ns.front();
  rec.wall_ns_max = ns.back();
  rec.wall_ns_median = ns.size() % 2 == 1 ? ns[ns.size() / 2]
                                          : (ns[ns.size() / 2 - 1] + ns[ns.size() / 2]) / 2;
}

}  // namespace

BenchRecord bench_latentgnn(std::size_t n, const LayerDims& dims, std::size_t repeats,
                            std::uint64_t seed) {
  Rng init_rng(Rng::mix(seed, 1));
  const LatentGnnParams params = init_params(init_rng, dims);
  const Matrix x = random_input(Rng::mix(seed, 2), n, dims.c);

  BenchRecord rec;
  rec.variant = "latentgnn";
  rec.n = n;
  rec.c = dims.c;
  rec.c_r = dims.c_r;
  rec.kernel_dims = dims.kernel_dims;
  rec.kernels = dims.kernel_dims.size();
  rec.analytic_flops = latentgnn_flops(shape_of(params, n));
  rec.bytes_peak = latentgnn_bytes_peak(shape_of(params, n));
  time_runs(rec, repeats, [&] {
    const ForwardTrace t = forward_stepwise(x, params);
    escape(t.x_aug.data().data());
  });
  return rec;
}

BenchRecord bench_dense(std::size_t n, std::size_t c, AffinityVariant variant,
                        std::size_t repeats, std::uint64_t seed, std::size_t n_cap) {
  DenseNonLocalParams params;
  Rng init_rng(Rng::mix(seed, 1));
  params.w_msg = Matrix(c, c);
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(c));
    for (double& v : params.w_msg.data()) v = init_rng.uniform(-bound, bound);
  }
  params.variant = variant;
  params.lambda = 1.0;
  const Matrix x = random_input(Rng::mix(seed, 2), n, c);

  BenchRecord rec;
  rec.variant = "dense";
  rec.n = n;
  rec.c = c;
  rec.analytic_flops = dense_flops(n, c, variant);
  rec.bytes_peak = dense_bytes_peak(n, c);
  time_runs(rec, repeats, [&] {
    const DenseForwardTrace t = dense_forward(x, params, n_cap);
    escape(t.x_aug.data().data());
  });
  return rec;
}

double fit_scaling_slope(const std::vector<BenchRecord>& records) {
  std::vector<const BenchRecord*> pts;
  pts.reserve(records.size());
  for (const auto& r : records) pts.push_back(&r);
  std::sort(pts.begin(), pts.end(),
            [](const BenchRecord* a, const BenchRecord* b) { return a->n < b->n; });
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i]->n == pts[i - 1]->n)
      throw std::invalid_argument("fit_scaling_slope: duplicate N");
  if (pts.size() < 3)
    throw std::invalid_argument("fit_scaling_slope: need at least 3 records");
  pts.erase(pts.begin());  // smallest N sits at the timer noise floor

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto m = static_cast<double>(pts.size());
  for (const auto* r : pts) {
    const double lx = std::log(static_cast<double>(r->n));
    const double ly = std::log(static_cast<double>(r->wall_ns_median));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = m * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_scaling_slope: degenerate N values");
  return (m * sxy - sx * sy) / denom;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records,
                     const std::string& comment) {
  out << "# " << comment << '\n';
  out << "variant,n,c,c_r,kernel_dims,kernels,repeats,"
         "wall_ns_median,wall_ns_min,wall_ns_max,analytic_flops,bytes_peak\n";
  for (const auto& r : records) {
    out << r.variant << ',' << r.n << ',' << r.c << ',';
    if (r.variant == "latentgnn") out << r.c_r;
    out << ',';
    for (std::size_t i = 0; i < r.kernel_dims.size(); ++i) {
      if (i > 0) out << ';';
      out << r.kernel_dims[i];
    }
    out << ',';
    if (r.variant == "latentgnn") out << r.kernels;
    out << ',' << r.repeats << ',' << r.wall_ns_median << ',' << r.wall_ns_min << ','
        << r.wall_ns_max << ',' << r.analytic_flops << ',' << r.bytes_peak << '\n';
  }
}

}  // namespace lgnn
