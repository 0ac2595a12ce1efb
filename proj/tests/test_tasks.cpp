// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgnn/matrix.hpp"
#include "lgnn/rng.hpp"
#include "lgnn/serialize.hpp"
#include "lgnn/tasks.hpp"
#include "lgnn/train.hpp"

using namespace lgnn;

namespace {

GridBeaconSpec tiny_beacon() {
  GridBeaconSpec spec;
  spec.height = 4;
  spec.width = 4;
  spec.channels = 6;
  spec.classes = 4;
  return spec;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.task = TaskKind::kBeacon;
  cfg.beacon = tiny_beacon();
  cfg.steps = 30;
  cfg.batch = 4;
  cfg.lr = 0.01;
  cfg.train_count = 40;
  cfg.eval_count = 16;
  cfg.eval_every = 10;
  cfg.seed = 3;
  cfg.model.hidden = 8;
  cfg.model.c_r = 4;
  cfg.model.kernel_dims = {4};
  return cfg;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.task != b.task || a.classes != b.classes || a.nodes != b.nodes ||
      a.channels != b.channels || a.samples.size() != b.samples.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (a.samples[i].targets != b.samples[i].targets) return false;
    if (max_abs_diff(a.samples[i].features, b.samples[i].features) != 0.0) return false;
  }
  return true;
}

// Decodes a beacon sample by its exact one-hot signature: the beacon row is
// the only one whose first `classes` channels are all zero except one gain.
int decode_beacon(const Sample& s, const GridBeaconSpec& spec) {
  for (std::size_t i = 0; i < s.features.rows(); ++i) {
    int hit = -1;
    bool clean = true;
    for (std::size_t j = 0; j < spec.classes; ++j) {
      const double v = s.features(i, j);
      if (v == spec.gain && hit < 0) {
        hit = static_cast<int>(j);
      } else if (v != 0.0) {
        clean = false;
        break;
      }
    }
    if (clean && hit >= 0) return hit;
  }
  return -1;
}

}  // namespace

TEST_SUITE("tasks") {

TEST_CASE("beacon samples are deterministic in seed and index") {
  GridBeaconSpec spec = tiny_beacon();
  GridBeaconSample a = grid_beacon_sample(5, 9, spec);
  GridBeaconSample b = grid_beacon_sample(5, 9, spec);
  CHECK(max_abs_diff(a.sample.features, b.sample.features) == 0.0);
  CHECK(a.beacon_pos == b.beacon_pos);
  CHECK(a.beacon_class == b.beacon_class);

  GridBeaconSample c = grid_beacon_sample(5, 10, spec);
  CHECK(max_abs_diff(a.sample.features, c.sample.features) > 0.0);
  GridBeaconSample d = grid_beacon_sample(6, 9, spec);
  CHECK(max_abs_diff(a.sample.features, d.sample.features) > 0.0);
}

TEST_CASE("beacon structure carries the label") {
  GridBeaconSpec spec = tiny_beacon();
  for (std::uint64_t index = 0; index < 50; ++index) {
    GridBeaconSample g = grid_beacon_sample(11, index, spec);
    REQUIRE(g.sample.features.rows() == 16);
    REQUIRE(g.sample.features.cols() == 6);
    REQUIRE(g.sample.targets.size() == 16);
    for (int t : g.sample.targets) CHECK(t == g.beacon_class);
    for (std::size_t j = 0; j < spec.classes; ++j) {
      const double expected = j == static_cast<std::size_t>(g.beacon_class) ? spec.gain : 0.0;
      CHECK(g.sample.features(g.beacon_pos, j) == expected);
    }
    CHECK(decode_beacon(g.sample, spec) == g.beacon_class);
  }
}

TEST_CASE("beacon positions and classes cover their ranges") {
  GridBeaconSpec spec = tiny_beacon();
  std::set<std::size_t> positions;
  std::set<int> classes;
  for (std::uint64_t index = 0; index < 200; ++index) {
    GridBeaconSample g = grid_beacon_sample(17, index, spec);
    positions.insert(g.beacon_pos);
    classes.insert(g.beacon_class);
  }
  CHECK(positions.size() > 8);
  CHECK(classes.size() == 4);
}

TEST_CASE("generated beacon datasets match per index sampling") {
  GridBeaconSpec spec = tiny_beacon();
  Dataset d = gen_grid_beacon(21, 12, spec);
  CHECK(d.task == "beacon");
  CHECK(d.classes == 4);
  CHECK(d.nodes == 16);
  CHECK(d.channels == 6);
  REQUIRE(d.samples.size() == 12);
  for (std::uint64_t i = 0; i < 12; ++i) {
    GridBeaconSample g = grid_beacon_sample(21, i, spec);
    CHECK(max_abs_diff(d.samples[i].features, g.sample.features) == 0.0);
    CHECK(d.samples[i].targets == g.sample.targets);
  }
}

TEST_CASE("point cloud labels recount from the assignments") {
  PointCloudSpec spec;
  spec.points = 24;
  spec.clusters = 3;
  for (std::uint64_t index = 0; index < 30; ++index) {
    PointCloudSample s = point_cloud_sample(7, index, spec);
    REQUIRE(s.assignments.size() == 24);
    std::vector<std::size_t> counts(3, 0);
    for (int a : s.assignments) {
      REQUIRE(a >= 0);
      REQUIRE(a < 3);
      ++counts[static_cast<std::size_t>(a)];
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (counts[k] > counts[best]) best = k;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(counts[k] > 0);
      if (k != best) CHECK(counts[k] < counts[best]);
    }
    for (int t : s.sample.targets) CHECK(t == static_cast<int>(best));
  }
}

TEST_CASE("task preconditions are enforced") {
  GridBeaconSpec bad = tiny_beacon();
  bad.channels = 3;
  CHECK_THROWS_AS(grid_beacon_sample(1, 0, bad), std::invalid_argument);
  bad = tiny_beacon();
  bad.classes = 1;
  CHECK_THROWS_AS(grid_beacon_sample(1, 0, bad), std::invalid_argument);

  PointCloudSpec pbad;
  pbad.channels = 2;
  CHECK_THROWS_AS(point_cloud_sample(1, 0, pbad), std::invalid_argument);
  pbad = PointCloudSpec{};
  pbad.points = 4;
  CHECK_THROWS_AS(point_cloud_sample(1, 0, pbad), std::invalid_argument);

  CHECK_THROWS_AS(scaled_preset("unknown", 1), std::invalid_argument);
  CHECK_THROWS_AS(scaled_preset("image", 0), std::invalid_argument);
}

TEST_CASE("stage presets scale down with a floor of one") {
  CHECK(scaled_preset("image", 1) == std::vector<std::size_t>{150, 100, 50});
  CHECK(scaled_preset("pointcloud", 1) == std::vector<std::size_t>{80, 40, 20, 10});
  CHECK(scaled_preset("pointcloud", 8) == std::vector<std::size_t>{10, 5, 2, 1});
  CHECK(scaled_preset("pointcloud", 160) == std::vector<std::size_t>{1, 1, 1, 1});
}

TEST_CASE("dataset container round trips exactly") {
  Dataset d = gen_grid_beacon(33, 6, tiny_beacon());
  Dataset back = decode_dataset(encode_dataset(d));
  CHECK(datasets_equal(d, back));

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lgnn_tasks_test";
  fs::create_directories(dir);
  const std::string path = (dir / "beacon.ds").string();
  save_dataset(d, path);
  Dataset loaded = load_dataset(path);
  CHECK(datasets_equal(d, loaded));
  fs::remove_all(dir);

  PointCloudSpec pspec;
  pspec.points = 12;
  pspec.clusters = 3;
  Dataset pc = gen_point_clusters(8, 5, pspec);
  CHECK(datasets_equal(pc, decode_dataset(encode_dataset(pc))));
}

TEST_CASE("malformed dataset containers are rejected") {
  Dataset d = gen_grid_beacon(2, 2, tiny_beacon());
  std::string bytes = encode_dataset(d);
  SUBCASE("bad magic") {
    bytes[0] = 'Z';
    CHECK_THROWS_AS(decode_dataset(bytes), std::runtime_error);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_AS(decode_dataset(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
  }
}

TEST_CASE("training is deterministic") {
  TrainConfig cfg = tiny_train_config();
  TrainResult a = train(cfg);
  TrainResult b = train(cfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].loss == b.curve[i].loss);
    CHECK(a.curve[i].has_eval == b.curve[i].has_eval);
    if (a.curve[i].has_eval) CHECK(a.curve[i].eval_accuracy == b.curve[i].eval_accuracy);
  }
  CHECK(a.final_accuracy == b.final_accuracy);
}

TEST_CASE("zero learning rate leaves the model where it started") {
  TrainConfig cfg = tiny_train_config();
  cfg.lr = 0.0;
  for (OptimizerKind opt : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
    cfg.optimizer = opt;
    TrainResult r = train(cfg);
    double first_eval = -1.0;
    for (const TrainRecord& rec : r.curve) {
      if (!rec.has_eval) continue;
      if (first_eval < 0.0) first_eval = rec.eval_accuracy;
      CHECK(rec.eval_accuracy == first_eval);
    }
    CHECK(r.final_accuracy == first_eval);
  }
}

TEST_CASE("variants share base weights and step zero predictions at lambda zero") {
  ModelConfig base;
  base.c_in = 6;
  base.classes = 4;
  base.hidden = 8;
  base.c_r = 4;
  base.kernel_dims = {4};
  base.lambda_init = 0.0;

  ModelConfig local = base;
  local.variant = ModelVariant::kLocalOnly;
  ModelConfig gnn = base;
  gnn.variant = ModelVariant::kLatentGnn;
  ModelConfig dense = base;
  dense.variant = ModelVariant::kDenseNl;

  TaskModel m_local = init_model(77, local);
  TaskModel m_gnn = init_model(77, gnn);
  TaskModel m_dense = init_model(77, dense);
  CHECK(max_abs_diff(m_local.w_embed, m_gnn.w_embed) == 0.0);
  CHECK(max_abs_diff(m_local.w_head, m_dense.w_head) == 0.0);

  Dataset probe = gen_grid_beacon(4, 3, tiny_beacon());
  for (const Sample& s : probe.samples) {
    Matrix base_logits = model_logits(m_local, s.features);
    CHECK(max_abs_diff(model_logits(m_gnn, s.features), base_logits) == 0.0);
    CHECK(max_abs_diff(model_logits(m_dense, s.features), base_logits) == 0.0);
  }
}

TEST_CASE("a hand built decoder scores every node") {
  // Locally decodable dataset: the features of every node are exactly the
  // one-hot code of its label, so an identity readout is a perfect oracle.
  const std::size_t classes = 4;
  Dataset d;
  d.task = "beacon";
  d.classes = classes;
  d.nodes = 8;
  d.channels = classes;
  Rng rng(15);
  for (std::size_t s = 0; s < 5; ++s) {
    Sample sample;
    sample.features = Matrix(8, classes);
    for (std::size_t i = 0; i < 8; ++i) {
      const int t = static_cast<int>(rng.below(classes));
      sample.targets.push_back(t);
      sample.features(i, static_cast<std::size_t>(t)) = 1.0;
    }
    d.samples.push_back(std::move(sample));
  }

  TaskModel oracle;
  oracle.variant = ModelVariant::kLocalOnly;
  oracle.w_embed = Matrix::identity(classes);
  oracle.b_embed.assign(classes, 0.0);
  oracle.w_head = Matrix::identity(classes);
  oracle.b_head.assign(classes, 0.0);
  CHECK(eval_accuracy(oracle, d) == 1.0);
}

TEST_CASE("an untrained model sits near chance") {
  GridBeaconSpec spec;  // full 16x16 grid, targets uniform over 4 classes
  Dataset d = gen_grid_beacon(29, 100, spec);
  ModelConfig cfg;
  cfg.variant = ModelVariant::kLocalOnly;
  cfg.c_in = 6;
  cfg.classes = 4;
  cfg.hidden = 8;
  TaskModel m = init_model(5, cfg);
  const double acc = eval_accuracy(m, d);
  CHECK(acc >= 0.20);
  CHECK(acc <= 0.30);
}

TEST_CASE("model containers round trip bitwise") {
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 5;
  for (ModelVariant variant :
       {ModelVariant::kLocalOnly, ModelVariant::kLatentGnn, ModelVariant::kDenseNl}) {
    cfg.model.variant = variant;
    TrainResult r = train(cfg);
    const std::string bytes = encode_model(r.model);
    TaskModel back = decode_model(bytes);
    CHECK(encode_model(back) == bytes);

    Dataset probe = gen_grid_beacon(9, 2, tiny_beacon());
    for (const Sample& s : probe.samples) {
      CHECK(max_abs_diff(model_logits(back, s.features),
                         model_logits(r.model, s.features)) == 0.0);
    }
  }
}

TEST_CASE("model containers survive the disk") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lgnn_model_test";
  fs::create_directories(dir);
  const std::string path_a = (dir / "a.model").string();
  const std::string path_b = (dir / "b.model").string();

  TrainConfig cfg = tiny_train_config();
  cfg.steps = 3;
  TrainResult r = train(cfg);
  save_model(r.model, path_a);
  TaskModel back = load_model(path_a);
  save_model(back, path_b);
  CHECK(io::read_file(path_a) == io::read_file(path_b));
  fs::remove_all(dir);
}

TEST_CASE("bad training configs are rejected") {
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 0;
  CHECK_THROWS_AS(check_config(cfg), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.batch = 0;
  CHECK_THROWS_AS(check_config(cfg), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.lr = -1.0;
  CHECK_THROWS_AS(check_config(cfg), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(check_config(cfg), std::invalid_argument);
  cfg = tiny_train_config();
  cfg.eval_every = 0;
  CHECK_THROWS_AS(check_config(cfg), std::invalid_argument);
}

TEST_CASE("divergence is reported with the failing step") {
  TrainConfig cfg = tiny_train_config();
  cfg.optimizer = OptimizerKind::kSgdMomentum;
  cfg.lr = 1e10;
  cfg.steps = 200;
  bool threw = false;
  try {
    train(cfg);
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("diverged at step") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("training csv has the documented shape") {
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 12;
  cfg.eval_every = 5;
  TrainResult r = train(cfg);
  std::ostringstream out;
  write_train_csv(out, r, "cfg comment");
  std::istringstream in(out.str());
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "# cfg comment");
  REQUIRE(std::getline(in, line));
  CHECK(line == "step,loss,eval_accuracy");
  std::size_t rows = 0;
  std::size_t evals = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.back() != ',') ++evals;
  }
  CHECK(rows == 12);
  // Evaluations at steps 5 and 10 plus the forced final one.
  CHECK(evals == 3);
}

TEST_CASE("model gradients match central differences on the smooth blocks") {
  // The fixed embed relu sits between the inputs and everything else, so the
  // check covers the head and a kink-free identity-activation layer.
  ModelConfig mcfg;
  mcfg.variant = ModelVariant::kLatentGnn;
  mcfg.c_in = 6;
  mcfg.classes = 4;
  mcfg.hidden = 8;
  mcfg.c_r = 4;
  mcfg.kernel_dims = {3};
  mcfg.activation = Activation::kIdentity;
  mcfg.psi_activation = Activation::kIdentity;
  mcfg.lambda_init = 0.3;
  TaskModel model = init_model(41, mcfg);

  GridBeaconSpec spec = tiny_beacon();
  GridBeaconSample g = grid_beacon_sample(13, 0, spec);

  ModelGrads grads = zero_grads(model);
  model_loss_and_grads(model, g.sample, grads, 1.0);

  std::vector<ParamBlock> params = model_param_views(model);
  std::vector<ParamBlock> analytic = model_grad_views(grads, model);
  REQUIRE(params.size() == analytic.size());
  std::vector<ParamBlock> smooth_params;
  std::vector<ParamBlock> smooth_analytic;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name.rfind("embed", 0) == 0) continue;
    smooth_params.push_back(params[i]);
    smooth_analytic.push_back(analytic[i]);
  }
  auto f = [&]() {
    ModelGrads scratch = zero_grads(model);
    return model_loss_and_grads(model, g.sample, scratch, 1.0);
  };
  FdReport report = fd_check(f, smooth_params, smooth_analytic, 1e-5);
  CHECK(report.max_rel_err <= 1e-6);
}

}  // TEST_SUITE
