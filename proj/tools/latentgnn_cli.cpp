// SPDX-License-Identifier: Apache-2.0
//
// Command-line harness: equivalence verification, scaling benchmarks, FLOP
// accounting, and toy training runs. Exit codes: 0 success, 1 verification
// failure, 2 usage error.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lgnn/bench.hpp"
#include "lgnn/serialize.hpp"
#include "lgnn/tasks.hpp"
#include "lgnn/train.hpp"
#include "lgnn/verify.hpp"
#include "lgnn/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitUsage = 2;

std::vector<std::size_t> parse_size_list(const std::string& csv, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v == 0)
      throw CLI::ValidationError(std::string(what) + ": expected positive integers, got '" + tok + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw CLI::ValidationError(std::string(what) + ": empty list");
  return out;
}

struct VerifyArgs {
  lgnn::VerifyOptions opts;
};

int cmd_verify(const VerifyArgs& args) {
  const lgnn::VerifyReport rep = lgnn::run_verify(args.opts);
  lgnn::print_verify_report(std::cout, rep, args.opts);
  if (!rep.ok()) {
    std::cout << "verify: FAILED\n";
    return kExitVerifyFail;
  }
  std::cout << "verify: ok\n";
  return kExitOk;
}

struct BenchArgs {
  std::string n_list = "1024,2048,4096,8192";
  std::size_t c = 64;
  std::size_t c_r = 16;
  std::string d_list = "16";
  std::size_t kernels = 1;
  std::size_t repeats = 5;
  std::string affinity = "sim";
  std::string variant = "both";  // latentgnn | dense | both
  std::string out_path;
  std::uint64_t seed = 1;
};

std::string bench_comment(const BenchArgs& a) {
  std::ostringstream c;
  c << lgnn::kVersionString << " cmd=bench seed=" << a.seed << " n=" << a.n_list
    << " c=" << a.c << " cr=" << a.c_r << " d=" << a.d_list << " kernels=" << a.kernels
    << " repeats=" << a.repeats << " affinity=" << a.affinity << " variant=" << a.variant;
  return c.str();
}

int cmd_bench(const BenchArgs& args) {
  const auto ns = parse_size_list(args.n_list, "--n");
  auto dims_list = parse_size_list(args.d_list, "--d");
  if (args.kernels == 0) throw CLI::ValidationError("--kernels must be positive");
  if (dims_list.size() == 1 && args.kernels > 1)
    dims_list.assign(args.kernels, dims_list[0]);
  if (dims_list.size() != args.kernels)
    throw CLI::ValidationError("--d list length must equal --kernels");
  const lgnn::AffinityVariant affinity = lgnn::affinity_variant_from_string(args.affinity);
  if (args.variant != "latentgnn" && args.variant != "dense" && args.variant != "both")
    throw CLI::ValidationError("--variant must be latentgnn|dense|both");

  lgnn::LayerDims dims;
  dims.c = args.c;
  dims.c_r = args.c_r;
  dims.kernel_dims = dims_list;
  dims.kind = lgnn::LatentKind::kFree;

  std::vector<lgnn::BenchRecord> latent_records, dense_records;
  for (const std::size_t n : ns) {
    if (args.variant != "dense") {
      latent_records.push_back(lgnn::bench_latentgnn(n, dims, args.repeats, args.seed));
      const auto& r = latent_records.back();
      std::cout << "latentgnn n=" << n << " median_ns=" << r.wall_ns_median
                << " flops=" << r.analytic_flops << '\n';
    }
    if (args.variant != "latentgnn") {
      if (n > lgnn::kDenseDefaultCap) {
        std::cout << "dense n=" << n << " skipped (above N cap " << lgnn::kDenseDefaultCap
                  << ")\n";
      } else {
        dense_records.push_back(lgnn::bench_dense(n, args.c, affinity, args.repeats, args.seed));
        const auto& r = dense_records.back();
        std::cout << "dense n=" << n << " median_ns=" << r.wall_ns_median
                  << " flops=" << r.analytic_flops << '\n';
      }
    }
  }

  for (const auto* recs : {&latent_records, &dense_records}) {
    if (recs->size() >= 3) {
      std::cout << (*recs)[0].variant << " log-log slope (excluding smallest N): "
                << lgnn::fit_scaling_slope(*recs) << '\n';
    }
  }

  std::vector<lgnn::BenchRecord> all = latent_records;
  all.insert(all.end(), dense_records.begin(), dense_records.end());
  if (!args.out_path.empty()) {
    std::ofstream out(args.out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw CLI::ValidationError("--out: cannot open for writing: " + args.out_path);
    lgnn::write_bench_csv(out, all, bench_comment(args));
    if (!out.flush()) throw CLI::ValidationError("--out: write failed: " + args.out_path);
    std::cout << "wrote " << args.out_path << '\n';
  } else {
    lgnn::write_bench_csv(std::cout, all, bench_comment(args));
  }
  return kExitOk;
}

struct FlopsArgs {
  std::size_t n = 16384;
  std::size_t c = 64;
  std::size_t c_r = 16;
  std::string d_list = "16";
  std::size_t kernels = 1;
  std::string affinity = "sim";
  std::string kind = "free";
};

int cmd_flops(const FlopsArgs& args) {
  auto dims = parse_size_list(args.d_list, "--d");
  if (args.kernels == 0) throw CLI::ValidationError("--kernels must be positive");
  if (dims.size() == 1 && args.kernels > 1) dims.assign(args.kernels, dims[0]);
  if (dims.size() != args.kernels)
    throw CLI::ValidationError("--d list length must equal --kernels");
  const auto affinity = lgnn::affinity_variant_from_string(args.affinity);
  const auto kind = lgnn::latent_kind_from_string(args.kind);

  lgnn::LayerShape shape;
  shape.n = args.n;
  shape.c = args.c;
  shape.c_r = args.c_r;
  shape.kernel_dims = dims;

  const std::uint64_t lat = lgnn::latentgnn_flops(shape);
  const std::uint64_t den = lgnn::dense_flops(args.n, args.c, affinity);
  const lgnn::ParamCount params = lgnn::latentgnn_param_count(shape, kind);

  std::cout << "n=" << args.n << " c=" << args.c << " c_r=" << args.c_r << " d=" << args.d_list
            << " kernels=" << args.kernels << " affinity=" << args.affinity << '\n';
  std::cout << "latentgnn_flops " << lat << '\n';
  std::cout << "dense_flops " << den << '\n';
  std::cout << "dense_to_latentgnn_ratio "
            << (lat ? static_cast<double>(den) / static_cast<double>(lat) : 0.0) << '\n';
  std::cout << "latentgnn_params_core " << params.core << '\n';
  std::cout << "latentgnn_params_bottleneck " << params.bottleneck << '\n';
  std::cout << "latentgnn_params_total " << params.total() << '\n';
  std::cout << "latentgnn_bytes_peak " << lgnn::latentgnn_bytes_peak(shape) << '\n';
  std::cout << "dense_bytes_peak " << lgnn::dense_bytes_peak(args.n, args.c) << '\n';
  return kExitOk;
}

struct TrainArgs {
  lgnn::TrainConfig cfg;
  std::string task = "beacon";
  std::string variant = "latentgnn";
  std::string optimizer = "adam";
  std::string d_list = "8";
  std::size_t kernels = 1;
  std::string kind = "free";
  std::string preset;
  std::size_t preset_scale = 1;
  std::string out_path;
  std::string weights_path;
  double lambda_init = 0.0;
  bool lambda_fixed = false;
};

std::string train_comment(const TrainArgs& a) {
  std::ostringstream c;
  c << lgnn::kVersionString << " cmd=train seed=" << a.cfg.seed << " task=" << a.task
    << " variant=" << a.variant << " optimizer=" << a.optimizer << " steps=" << a.cfg.steps
    << " batch=" << a.cfg.batch << " lr=" << a.cfg.lr << " hidden=" << a.cfg.model.hidden
    << " cr=" << a.cfg.model.c_r << " d=";
  for (std::size_t i = 0; i < a.cfg.model.kernel_dims.size(); ++i) {
    if (i > 0) c << ';';
    c << a.cfg.model.kernel_dims[i];
  }
  return c.str();
}

int cmd_train(TrainArgs& args) {
  args.cfg.task = lgnn::task_from_string(args.task);
  args.cfg.model.variant = lgnn::model_variant_from_string(args.variant);
  args.cfg.optimizer = lgnn::optimizer_from_string(args.optimizer);
  args.cfg.model.kind = lgnn::latent_kind_from_string(args.kind);
  args.cfg.model.lambda_init = args.lambda_init;
  args.cfg.model.lambda_fixed = args.lambda_fixed;

  if (!args.preset.empty()) {
    args.cfg.model.kernel_dims = lgnn::scaled_preset(args.preset, args.preset_scale);
  } else {
    auto dims = parse_size_list(args.d_list, "--d");
    if (args.kernels == 0) throw CLI::ValidationError("--kernels must be positive");
    if (dims.size() == 1 && args.kernels > 1) dims.assign(args.kernels, dims[0]);
    if (dims.size() != args.kernels)
      throw CLI::ValidationError("--d list length must equal --kernels");
    args.cfg.model.kernel_dims = dims;
  }

  const lgnn::TrainResult result = lgnn::train(args.cfg);

  if (!args.out_path.empty()) {
    std::ofstream out(args.out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw CLI::ValidationError("--out: cannot open for writing: " + args.out_path);
    lgnn::write_train_csv(out, result, train_comment(args));
    if (!out.flush()) throw CLI::ValidationError("--out: write failed: " + args.out_path);
  } else {
    lgnn::write_train_csv(std::cout, result, train_comment(args));
  }
  if (!args.weights_path.empty()) lgnn::save_model(result.model, args.weights_path);

  std::cout << "final_eval_accuracy " << result.final_accuracy << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LatentGNN reference harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lgnn::kVersionString);

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "check stepwise-vs-matrix equivalence and gradients");
  verify->add_option("--seed", verify_args.opts.seed, "base seed");
  verify->add_option("--trials", verify_args.opts.trials, "equivalence trials (gradient suite runs trials/4)")
      ->check(CLI::PositiveNumber);
  verify->add_option("--tolerance", verify_args.opts.tolerance, "max-abs equivalence tolerance");
  verify->add_option("--grad-tolerance", verify_args.opts.grad_tolerance, "max relative FD tolerance");
  verify->add_option("--threads", verify_args.opts.threads, "worker threads for trials")
      ->check(CLI::PositiveNumber);

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "time forward passes and fit scaling slopes");
  bench->add_option("--seed", bench_args.seed, "input/init seed");
  bench->add_option("--n", bench_args.n_list, "comma list of node counts");
  bench->add_option("--c", bench_args.c, "channels")->check(CLI::PositiveNumber);
  bench->add_option("--cr", bench_args.c_r, "reduced channels")->check(CLI::PositiveNumber);
  bench->add_option("--d", bench_args.d_list, "comma list of latent dims (one per kernel)");
  bench->add_option("--kernels", bench_args.kernels, "kernel count");
  bench->add_option("--repeats", bench_args.repeats, "timed repeats per point (>= 5)");
  bench->add_option("--affinity", bench_args.affinity, "dense affinity: sim|lap");
  bench->add_option("--variant", bench_args.variant, "latentgnn|dense|both");
  bench->add_option("--out", bench_args.out_path, "CSV output path");

  FlopsArgs flops_args;
  auto* flops = app.add_subcommand("flops", "print analytic FLOP and parameter counts");
  flops->add_option("--n", flops_args.n, "nodes")->check(CLI::PositiveNumber);
  flops->add_option("--c", flops_args.c, "channels")->check(CLI::PositiveNumber);
  flops->add_option("--cr", flops_args.c_r, "reduced channels")->check(CLI::PositiveNumber);
  flops->add_option("--d", flops_args.d_list, "comma list of latent dims (one per kernel)");
  flops->add_option("--kernels", flops_args.kernels, "kernel count");
  flops->add_option("--affinity", flops_args.affinity, "dense affinity: sim|lap");
  flops->add_option("--kind", flops_args.kind, "latent kind: identity|free|symmetric-factor");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a toy node classifier");
  train->add_option("--task", train_args.task, "beacon|clusters");
  train->add_option("--variant", train_args.variant, "local-only|latentgnn|dense-nl");
  train->add_option("--optimizer", train_args.optimizer, "sgd|adam");
  train->add_option("--steps", train_args.cfg.steps, "optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--batch", train_args.cfg.batch, "samples per step")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_args.cfg.lr, "learning rate");
  train->add_option("--momentum", train_args.cfg.momentum, "SGD momentum");
  train->add_option("--seed", train_args.cfg.seed, "run seed");
  train->add_option("--train-count", train_args.cfg.train_count, "training samples");
  train->add_option("--eval-count", train_args.cfg.eval_count, "held-out samples");
  train->add_option("--eval-every", train_args.cfg.eval_every, "evaluation period in steps");
  train->add_option("--hidden", train_args.cfg.model.hidden, "hidden width");
  train->add_option("--cr", train_args.cfg.model.c_r, "reduced channels");
  train->add_option("--d", train_args.d_list, "comma list of latent dims (one per kernel)");
  train->add_option("--kernels", train_args.kernels, "kernel count");
  train->add_option("--kind", train_args.kind, "latent kind: identity|free|symmetric-factor");
  train->add_option("--preset", train_args.preset, "latent-dim preset: image|pointcloud");
  train->add_option("--preset-scale", train_args.preset_scale, "divide preset dims by this");
  train->add_option("--lambda", train_args.lambda_init, "initial residual weight");
  train->add_flag("--fixed-lambda", train_args.lambda_fixed, "do not learn lambda");
  train->add_option("--out", train_args.out_path, "loss-curve CSV path");
  train->add_option("--weights-out", train_args.weights_path, "model weights path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_args);
    if (bench->parsed()) return cmd_bench(bench_args);
    if (flops->parsed()) return cmd_flops(flops_args);
    if (train->parsed()) return cmd_train(train_args);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitVerifyFail;
  }
  return kExitUsage;
}
