// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgnn/autograd.hpp"
#include "lgnn/dense_nonlocal.hpp"
#include "lgnn/latent_gnn.hpp"
#include "lgnn/tasks.hpp"

namespace lgnn {

enum class ModelVariant { kLocalOnly, kLatentGnn, kDenseNl };
enum class TaskKind { kBeacon, kClusters };
enum class OptimizerKind { kSgdMomentum, kAdam };

const char* to_string(ModelVariant v);
const char* to_string(TaskKind t);
const char* to_string(OptimizerKind o);
ModelVariant model_variant_from_string(const std::string& s);
TaskKind task_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

// Node classifier: per-node embed MLP, an optional non-local layer on the
// hidden features, and a per-node linear head. The local-only variant has no
// cross-node path at all, so any held-out gain over it is attributable to the
// non-local layer.
struct TaskModel {
  ModelVariant variant = ModelVariant::kLocalOnly;
  Matrix w_embed;               // c_in x hidden
  std::vector<double> b_embed;  // hidden
  LatentGnnParams gnn;          // kLatentGnn only
  DenseNonLocalParams dense;    // kDenseNl only
  Matrix w_head;                // hidden x classes
  std::vector<double> b_head;   // classes

  std::size_t c_in() const { return w_embed.rows(); }
  std::size_t hidden() const { return w_embed.cols(); }
  std::size_t classes() const { return w_head.cols(); }
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::kLatentGnn;
  std::size_t c_in = 0;     // filled from the task when 0
  std::size_t hidden = 16;
  std::size_t classes = 0;  // filled from the task when 0
  std::size_t c_r = 8;
  std::vector<std::size_t> kernel_dims = {8};
  LatentKind kind = LatentKind::kFree;
  Activation activation = Activation::kRelu;
  Activation psi_activation = Activation::kRelu;
  AffinityVariant dense_variant = AffinityVariant::kSim;
  double lambda_init = 0.0;
  bool lambda_fixed = false;
};

// Base weights (embed, head) are drawn before the non-local layer from the
// same stream, so every variant with one seed shares them bit-exactly; with
// lambda_init 0 the non-local variants therefore predict exactly like the
// local-only model at step 0.
TaskModel init_model(std::uint64_t seed, const ModelConfig& cfg);

struct ModelGrads {
  Matrix d_w_embed;
  std::vector<double> d_b_embed;
  GradStore gnn;
  DenseGradStore dense;
  Matrix d_w_head;
  std::vector<double> d_b_head;
};

ModelGrads zero_grads(const TaskModel& model);

// Flat named views over all learnable scalars, in a fixed order shared by
// the two functions. The optimizer walks these pairwise.
std::vector<ParamBlock> model_param_views(TaskModel& model);
std::vector<ParamBlock> model_grad_views(ModelGrads& g, const TaskModel& model);

Matrix model_logits(const TaskModel& model, const Matrix& features);

// Mean softmax cross-entropy over nodes; accumulates parameter gradients
// into `grads` (scaled by `weight`).
double model_loss_and_grads(const TaskModel& model, const Sample& sample,
                            ModelGrads& grads, double weight);

// Fraction of nodes whose argmax logit matches the target, over all samples.
double eval_accuracy(const TaskModel& model, const Dataset& data);

// Defaults favor Adam: the residual gate lambda starts at 0 while its
// gradient scales with the unnormalized context, a mismatch plain SGD
// handles poorly at any single learning rate.
struct TrainConfig {
  TaskKind task = TaskKind::kBeacon;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  double lr = 0.01;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t train_count = 2000;
  std::size_t eval_count = 500;
  std::size_t eval_every = 250;
  GridBeaconSpec beacon;
  PointCloudSpec clusters;
  ModelConfig model;
};

void check_config(const TrainConfig& cfg);

struct TrainRecord {
  std::size_t step = 0;  // 1-based
  double loss = 0.0;
  double eval_accuracy = 0.0;
  bool has_eval = false;
};

struct TrainResult {
  std::vector<TrainRecord> curve;  // one record per step
  double final_accuracy = 0.0;
  TaskModel model;
};

// Deterministic given cfg; throws std::runtime_error naming the step when
// the loss turns non-finite.
TrainResult train(const TrainConfig& cfg);

// CSV: '#'-prefixed config comment, then step,loss,eval_accuracy rows (the
// accuracy cell is empty on steps without an evaluation).
void write_train_csv(std::ostream& out, const TrainResult& r, const std::string& comment);

std::string encode_model(const TaskModel& model);
TaskModel decode_model(const std::string& bytes);
void save_model(const TaskModel& model, const std::string& path);
TaskModel load_model(const std::string& path);

}  // namespace lgnn
