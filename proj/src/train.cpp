// SPDX-License-Identifier: Apache-2.0
#include "lgnn/train.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lgnn/rng.hpp"
#include "lgnn/serialize.hpp"

namespace lgnn {

namespace {

constexpr std::uint64_t kTrainDataStream = 1;
constexpr std::uint64_t kEvalDataStream = 2;
constexpr std::uint64_t kModelStream = 3;
constexpr std::uint64_t kBatchStream = 4;
constexpr std::uint64_t kLayerStream = 0x6c617965ULL;  // "laye"

Matrix kaiming_uniform(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

void add_bias_rows(Matrix& m, const std::vector<double>& b) {
  if (m.cols() != b.size()) throw std::invalid_argument("bias length does not match columns");
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) row[j] += b[j];
  }
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double* row = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += row[j];
  }
  return s;
}

// dE_pre = dE where pre > 0, else 0.
Matrix relu_backprop(const Matrix& upstream, const Matrix& pre) {
  Matrix out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (pre.data()[i] <= 0.0) out.data()[i] = 0.0;
  return out;
}

struct LayerForward {
  Matrix out;
  ForwardTrace gnn;        // kLatentGnn
  DenseForwardTrace dense; // kDenseNl
};

LayerForward layer_forward(const TaskModel& model, const Matrix& hidden) {
  LayerForward f;
  switch (model.variant) {
    case ModelVariant::kLocalOnly:
      f.out = hidden;
      break;
    case ModelVariant::kLatentGnn:
      f.gnn = forward_stepwise(hidden, model.gnn);
      f.out = f.gnn.x_aug;
      break;
    case ModelVariant::kDenseNl:
      f.dense = dense_forward(hidden, model.dense);
      f.out = f.dense.x_aug;
      break;
  }
  return f;
}

void add_scaled_blocks(std::vector<ParamBlock> dst, std::vector<ParamBlock> src, double w) {
  if (dst.size() != src.size()) throw std::logic_error("gradient view mismatch");
  for (std::size_t b = 0; b < dst.size(); ++b) {
    if (dst[b].size != src[b].size) throw std::logic_error("gradient block mismatch");
    for (std::size_t i = 0; i < dst[b].size; ++i) dst[b].data[i] += w * src[b].data[i];
  }
}

struct OptimizerState {
  std::vector<std::vector<double>> velocity;  // SGD momentum / Adam first moment
  std::vector<std::vector<double>> second;    // Adam second moment
  std::size_t t = 0;

  void init(const std::vector<ParamBlock>& params, bool adam) {
    velocity.clear();
    second.clear();
    for (const auto& p : params) velocity.emplace_back(p.size, 0.0);
    if (adam)
      for (const auto& p : params) second.emplace_back(p.size, 0.0);
    t = 0;
  }
};

// v = momentum * v + g; p -= lr * v
void sgd_momentum_step(OptimizerState& st, std::vector<ParamBlock>& params,
                       const std::vector<ParamBlock>& grads, double lr, double momentum) {
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& v = st.velocity[b];
    for (std::size_t i = 0; i < params[b].size; ++i) {
      v[i] = momentum * v[i] + grads[b].data[i];
      params[b].data[i] -= lr * v[i];
    }
  }
}

void adam_step(OptimizerState& st, std::vector<ParamBlock>& params,
               const std::vector<ParamBlock>& grads, const TrainConfig& cfg) {
  ++st.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = st.velocity[b];
    auto& v = st.second[b];
    for (std::size_t i = 0; i < params[b].size; ++i) {
      const double g = grads[b].data[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mh = m[i] / corr1;
      const double vh = v[i] / corr2;
      params[b].data[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
}

}  // namespace

const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::kLocalOnly: return "local-only";
    case ModelVariant::kLatentGnn: return "latentgnn";
    case ModelVariant::kDenseNl: return "dense-nl";
  }
  return "?";
}

const char* to_string(TaskKind t) {
  return t == TaskKind::kBeacon ? "beacon" : "clusters";
}

const char* to_string(OptimizerKind o) {
  return o == OptimizerKind::kSgdMomentum ? "sgd" : "adam";
}

ModelVariant model_variant_from_string(const std::string& s) {
  if (s == "local-only") return ModelVariant::kLocalOnly;
  if (s == "latentgnn") return ModelVariant::kLatentGnn;
  if (s == "dense-nl") return ModelVariant::kDenseNl;
  throw std::invalid_argument("unknown model variant: " + s);
}

TaskKind task_from_string(const std::string& s) {
  if (s == "beacon") return TaskKind::kBeacon;
  if (s == "clusters") return TaskKind::kClusters;
  throw std::invalid_argument("unknown task: " + s);
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgdMomentum;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

TaskModel init_model(std::uint64_t seed, const ModelConfig& cfg) {
  if (cfg.c_in == 0 || cfg.hidden == 0 || cfg.classes == 0)
    throw std::invalid_argument("init_model: c_in, hidden, classes must be positive");

  TaskModel model;
  model.variant = cfg.variant;

  Rng base(seed);
  model.w_embed = kaiming_uniform(base, cfg.c_in, cfg.hidden);
  model.b_embed.assign(cfg.hidden, 0.0);
  model.w_head = kaiming_uniform(base, cfg.hidden, cfg.classes);
  model.b_head.assign(cfg.classes, 0.0);

  Rng layer(Rng::mix(seed, kLayerStream));
  if (cfg.variant == ModelVariant::kLatentGnn) {
    LayerDims dims;
    dims.c = cfg.hidden;
    dims.c_r = cfg.c_r;
    dims.kernel_dims = cfg.kernel_dims;
    dims.kind = cfg.kind;
    dims.activation = cfg.activation;
    dims.psi_activation = cfg.psi_activation;
    model.gnn = init_params(layer, dims);
    model.gnn.lambda = cfg.lambda_init;
  } else if (cfg.variant == ModelVariant::kDenseNl) {
    model.dense.w_msg = kaiming_uniform(layer, cfg.hidden, cfg.hidden);
    model.dense.variant = cfg.dense_variant;
    model.dense.activation = cfg.activation;
    model.dense.lambda = cfg.lambda_init;
  }
  return model;
}

ModelGrads zero_grads(const TaskModel& model) {
  ModelGrads g;
  g.d_w_embed = Matrix(model.w_embed.rows(), model.w_embed.cols());
  g.d_b_embed.assign(model.b_embed.size(), 0.0);
  g.d_w_head = Matrix(model.w_head.rows(), model.w_head.cols());
  g.d_b_head.assign(model.b_head.size(), 0.0);

  if (model.variant == ModelVariant::kLatentGnn) {
    const LatentGnnParams& p = model.gnn;
    g.gnn.d_w_in = Matrix(p.w_in.rows(), p.w_in.cols());
    g.gnn.kernels.resize(p.kernels.size());
    for (std::size_t m = 0; m < p.kernels.size(); ++m) {
      const KernelParams& k = p.kernels[m];
      KernelGrads& kg = g.gnn.kernels[m];
      kg.d_theta = Matrix(k.psi.theta.rows(), k.psi.theta.cols());
      if (k.latent.kind == LatentKind::kFree)
        kg.d_latent = Matrix(k.latent.f.rows(), k.latent.f.cols());
      else if (k.latent.kind == LatentKind::kSymmetricFactor)
        kg.d_latent = Matrix(k.latent.phi.rows(), k.latent.phi.cols());
      if (k.psi_out)
        kg.d_theta_out = Matrix(k.psi_out->theta.rows(), k.psi_out->theta.cols());
    }
    g.gnn.d_w_msg = Matrix(p.w_msg.rows(), p.w_msg.cols());
    g.gnn.d_mixture_w.assign(p.mixture_w.size(), 0.0);
    g.gnn.d_w_out = Matrix(p.w_out.rows(), p.w_out.cols());
  } else if (model.variant == ModelVariant::kDenseNl) {
    g.dense.d_w_msg = Matrix(model.dense.w_msg.rows(), model.dense.w_msg.cols());
  }
  return g;
}

std::vector<ParamBlock> model_param_views(TaskModel& model) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"embed_w", model.w_embed.data().data(), model.w_embed.size()});
  blocks.push_back({"embed_b", model.b_embed.data(), model.b_embed.size()});
  if (model.variant == ModelVariant::kLatentGnn) {
    for (auto& b : param_views(model.gnn)) blocks.push_back(b);
  } else if (model.variant == ModelVariant::kDenseNl) {
    for (auto& b : param_views(model.dense)) blocks.push_back(b);
  }
  blocks.push_back({"head_w", model.w_head.data().data(), model.w_head.size()});
  blocks.push_back({"head_b", model.b_head.data(), model.b_head.size()});
  return blocks;
}

std::vector<ParamBlock> model_grad_views(ModelGrads& g, const TaskModel& model) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"embed_w", g.d_w_embed.data().data(), g.d_w_embed.size()});
  blocks.push_back({"embed_b", g.d_b_embed.data(), g.d_b_embed.size()});
  if (model.variant == ModelVariant::kLatentGnn) {
    for (auto& b : grad_views(g.gnn)) blocks.push_back(b);
  } else if (model.variant == ModelVariant::kDenseNl) {
    for (auto& b : grad_views(g.dense)) blocks.push_back(b);
  }
  blocks.push_back({"head_w", g.d_w_head.data().data(), g.d_w_head.size()});
  blocks.push_back({"head_b", g.d_b_head.data(), g.d_b_head.size()});
  return blocks;
}

Matrix model_logits(const TaskModel& model, const Matrix& features) {
  if (features.cols() != model.c_in())
    throw std::invalid_argument("model_logits: feature channels do not match the model");
  Matrix pre = matmul(features, model.w_embed);
  add_bias_rows(pre, model.b_embed);
  const Matrix hidden = relu(pre);
  Matrix logits = matmul(layer_forward(model, hidden).out, model.w_head);
  add_bias_rows(logits, model.b_head);
  return logits;
}

double model_loss_and_grads(const TaskModel& model, const Sample& sample,
                            ModelGrads& grads, double weight) {
  if (sample.features.cols() != model.c_in())
    throw std::invalid_argument("model_loss_and_grads: feature channels do not match the model");

  Matrix embed_pre = matmul(sample.features, model.w_embed);
  add_bias_rows(embed_pre, model.b_embed);
  const Matrix hidden = relu(embed_pre);

  LayerForward layer = layer_forward(model, hidden);

  Matrix logits = matmul(layer.out, model.w_head);
  add_bias_rows(logits, model.b_head);

  const LossResult loss = loss_eval(LossKind::kCrossEntropy, logits, &sample.targets);

  axpy(grads.d_w_head, weight, matmul_at(layer.out, loss.grad));
  const auto head_bias = column_sums(loss.grad);
  for (std::size_t j = 0; j < head_bias.size(); ++j) grads.d_b_head[j] += weight * head_bias[j];

  const Matrix d_out = matmul_bt(loss.grad, model.w_head);

  Matrix d_hidden;
  switch (model.variant) {
    case ModelVariant::kLocalOnly:
      d_hidden = d_out;
      break;
    case ModelVariant::kLatentGnn: {
      GradStore g = backward(layer.gnn, model.gnn, d_out);
      add_scaled_blocks(grad_views(grads.gnn), grad_views(g), weight);
      d_hidden = std::move(g.d_x);
      break;
    }
    case ModelVariant::kDenseNl: {
      DenseGradStore g = dense_backward(layer.dense, model.dense, d_out);
      add_scaled_blocks(grad_views(grads.dense), grad_views(g), weight);
      d_hidden = std::move(g.d_x);
      break;
    }
  }

  const Matrix d_embed_pre = relu_backprop(d_hidden, embed_pre);
  axpy(grads.d_w_embed, weight, matmul_at(sample.features, d_embed_pre));
  const auto embed_bias = column_sums(d_embed_pre);
  for (std::size_t j = 0; j < embed_bias.size(); ++j) grads.d_b_embed[j] += weight * embed_bias[j];

  return loss.value;
}

double eval_accuracy(const TaskModel& model, const Dataset& data) {
  std::size_t hits = 0, total = 0;
  for (const auto& s : data.samples) {
    if (s.targets.size() != s.features.rows())
      throw std::invalid_argument("eval_accuracy: targets do not match features");
    const Matrix logits = model_logits(model, s.features);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const double* row = logits.row(i);
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (row[j] > row[best]) best = j;
      if (static_cast<int>(best) == s.targets[i]) ++hits;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("eval_accuracy: empty dataset");
  return static_cast<double>(hits) / static_cast<double>(total);
}

void check_config(const TrainConfig& cfg) {
  if (cfg.steps == 0) throw std::invalid_argument("train: steps must be positive");
  if (cfg.batch == 0) throw std::invalid_argument("train: batch must be positive");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr))
    throw std::invalid_argument("train: lr must be finite and >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 > 0.0 && cfg.adam_beta2 < 1.0)) {
    throw std::invalid_argument("train: adam betas must be in (0, 1)");
  }
  if (cfg.train_count == 0 || cfg.eval_count == 0)
    throw std::invalid_argument("train: dataset sizes must be positive");
  if (cfg.eval_every == 0) throw std::invalid_argument("train: eval_every must be positive");
  if (cfg.model.hidden == 0 || cfg.model.c_r == 0)
    throw std::invalid_argument("train: model dims must be positive");
  for (std::size_t d : cfg.model.kernel_dims)
    if (d == 0) throw std::invalid_argument("train: kernel dims must be positive");
  if (cfg.model.kernel_dims.empty())
    throw std::invalid_argument("train: need at least one kernel");
}

TrainResult train(const TrainConfig& cfg) {
  check_config(cfg);

  Dataset train_ds, eval_ds;
  if (cfg.task == TaskKind::kBeacon) {
    train_ds = gen_grid_beacon(Rng::mix(cfg.seed, kTrainDataStream), cfg.train_count, cfg.beacon);
    eval_ds = gen_grid_beacon(Rng::mix(cfg.seed, kEvalDataStream), cfg.eval_count, cfg.beacon);
  } else {
    train_ds = gen_point_clusters(Rng::mix(cfg.seed, kTrainDataStream), cfg.train_count, cfg.clusters);
    eval_ds = gen_point_clusters(Rng::mix(cfg.seed, kEvalDataStream), cfg.eval_count, cfg.clusters);
  }

  ModelConfig mcfg = cfg.model;
  if (mcfg.c_in == 0) mcfg.c_in = train_ds.channels;
  if (mcfg.classes == 0) mcfg.classes = train_ds.classes;

  TrainResult result;
  result.model = init_model(Rng::mix(cfg.seed, kModelStream), mcfg);
  TaskModel& model = result.model;

  auto params = model_param_views(model);
  OptimizerState opt;
  opt.init(params, cfg.optimizer == OptimizerKind::kAdam);

  Rng batch_rng(Rng::mix(cfg.seed, kBatchStream));
  result.curve.reserve(cfg.steps);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    ModelGrads grads = zero_grads(model);
    double loss_sum = 0.0;
    try {
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        const std::size_t idx = batch_rng.below(train_ds.samples.size());
        loss_sum += model_loss_and_grads(model, train_ds.samples[idx], grads,
                                         1.0 / static_cast<double>(cfg.batch));
      }
    } catch (const std::invalid_argument&) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (non-finite parameters)";
      throw std::runtime_error(msg.str());
    }
    const double loss = loss_sum / static_cast<double>(cfg.batch);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << " (loss " << loss << ")";
      throw std::runtime_error(msg.str());
    }

    auto grad_blocks = model_grad_views(grads, model);
    if (cfg.model.lambda_fixed) {
      for (auto& b : grad_blocks)
        if (b.name == "lambda")
          for (std::size_t i = 0; i < b.size; ++i) b.data[i] = 0.0;
    }
    if (cfg.optimizer == OptimizerKind::kAdam) {
      adam_step(opt, params, grad_blocks, cfg);
    } else {
      sgd_momentum_step(opt, params, grad_blocks, cfg.lr, cfg.momentum);
    }

    TrainRecord rec;
    rec.step = step;
    rec.loss = loss;
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      rec.eval_accuracy = eval_accuracy(model, eval_ds);
      rec.has_eval = true;
      result.final_accuracy = rec.eval_accuracy;
    }
    result.curve.push_back(rec);
  }
  return result;
}

void write_train_csv(std::ostream& out, const TrainResult& r, const std::string& comment) {
  out << "# " << comment << '\n';
  out << "step,loss,eval_accuracy\n";
  std::ostringstream row;
  row.precision(std::numeric_limits<double>::max_digits10);
  for (const auto& rec : r.curve) {
    row.str("");
    row << rec.step << ',' << rec.loss << ',';
    if (rec.has_eval) row << rec.eval_accuracy;
    out << row.str() << '\n';
  }
}

namespace {

constexpr const char* kModelMagic = "latentgnn-model v1";

[[noreturn]] void model_parse_error(const std::string& what) {
  throw std::runtime_error("model parse error: " + what);
}

std::string model_line(const std::string& bytes, std::size_t& pos) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string::npos) model_parse_error("truncated manifest");
  std::string line = bytes.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

std::vector<ParamBlock> base_blocks(TaskModel& m) {
  std::vector<ParamBlock> blocks;
  blocks.push_back({"embed_w", m.w_embed.data().data(), m.w_embed.size()});
  blocks.push_back({"embed_b", m.b_embed.data(), m.b_embed.size()});
  blocks.push_back({"head_w", m.w_head.data().data(), m.w_head.size()});
  blocks.push_back({"head_b", m.b_head.data(), m.b_head.size()});
  if (m.variant == ModelVariant::kDenseNl)
    for (auto& b : param_views(m.dense)) blocks.push_back(b);
  return blocks;
}

}  // namespace

std::string encode_model(const TaskModel& model) {
  std::ostringstream man;
  man << kModelMagic << '\n';
  man << "variant " << to_string(model.variant) << '\n';
  man << "c_in " << model.c_in() << '\n';
  man << "hidden " << model.hidden() << '\n';
  man << "classes " << model.classes() << '\n';
  if (model.variant == ModelVariant::kDenseNl) {
    man << "dense_variant " << to_string(model.dense.variant) << '\n';
    man << "dense_activation " << to_string(model.dense.activation) << '\n';
  }

  TaskModel copy = model;
  auto blocks = base_blocks(copy);
  std::size_t count = 0;
  for (const auto& b : blocks) count += b.size;
  man << "blob_f64 " << count << '\n';

  std::string out = man.str();
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < b.size; ++i) io::append_f64_le(out, b.data[i]);

  if (model.variant == ModelVariant::kLatentGnn) {
    const std::string gnn = encode_weights(model.gnn);
    out += "gnn_bytes " + std::to_string(gnn.size()) + "\n";
    out += gnn;
  }
  return out;
}

TaskModel decode_model(const std::string& bytes) {
  std::size_t pos = 0;
  if (model_line(bytes, pos) != kModelMagic) model_parse_error("bad magic line");

  auto field = [&](const char* key) -> std::string {
    std::istringstream in(model_line(bytes, pos));
    std::string k, v;
    if (!(in >> k >> v) || k != key) model_parse_error(std::string("expected ") + key);
    return v;
  };

  TaskModel m;
  m.variant = model_variant_from_string(field("variant"));
  const auto c_in = static_cast<std::size_t>(std::stoull(field("c_in")));
  const auto hidden = static_cast<std::size_t>(std::stoull(field("hidden")));
  const auto classes = static_cast<std::size_t>(std::stoull(field("classes")));
  m.w_embed = Matrix(c_in, hidden);
  m.b_embed.assign(hidden, 0.0);
  m.w_head = Matrix(hidden, classes);
  m.b_head.assign(classes, 0.0);
  if (m.variant == ModelVariant::kDenseNl) {
    m.dense.variant = affinity_variant_from_string(field("dense_variant"));
    m.dense.activation = activation_from_string(field("dense_activation"));
    m.dense.w_msg = Matrix(hidden, hidden);
  }

  const auto count = static_cast<std::size_t>(std::stoull(field("blob_f64")));
  auto blocks = base_blocks(m);
  std::size_t expected = 0;
  for (const auto& b : blocks) expected += b.size;
  if (count != expected) model_parse_error("blob_f64 count does not match shapes");
  if (bytes.size() - pos < count * 8) model_parse_error("payload too small");
  for (const auto& b : blocks)
    for (std::size_t i = 0; i < b.size; ++i) {
      b.data[i] = io::read_f64_le(bytes.data() + pos);
      pos += 8;
    }

  if (m.variant == ModelVariant::kLatentGnn) {
    std::istringstream in(model_line(bytes, pos));
    std::string k;
    std::size_t n = 0;
    if (!(in >> k >> n) || k != "gnn_bytes") model_parse_error("expected gnn_bytes");
    if (bytes.size() - pos != n) model_parse_error("gnn payload size mismatch");
    m.gnn = decode_weights(bytes.substr(pos, n));
    pos += n;
    if (m.gnn.c() != hidden) model_parse_error("gnn channel width does not match hidden");
  } else if (pos != bytes.size()) {
    model_parse_error("trailing bytes");
  }
  return m;
}

void save_model(const TaskModel& model, const std::string& path) {
  io::write_file(path, encode_model(model));
}

TaskModel load_model(const std::string& path) {
  return decode_model(io::read_file(path));
}

}  // namespace lgnn
