// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lgnn/matrix.hpp"

namespace lgnn {

// Per-stage latent dimensions used in the reference experiments; offered as
// named presets, optionally divided down for toy-scale runs.
inline constexpr std::array<std::size_t, 3> kStagePresetImage = {150, 100, 50};
inline constexpr std::array<std::size_t, 4> kStagePresetPointCloud = {80, 40, 20, 10};

std::vector<std::size_t> scaled_preset(const std::string& name, std::size_t divisor);

struct Sample {
  Matrix features;           // N x c
  std::vector<int> targets;  // N, values in [0, classes)
};

struct Dataset {
  std::string task;  // "beacon" | "clusters"
  std::size_t classes = 0;
  std::size_t nodes = 0;
  std::size_t channels = 0;
  std::vector<Sample> samples;
};

// Grid task: every node carries i.i.d. noise; one beacon node carries a
// one-hot class code (value `gain` in feature channel `beacon_class`, zero in
// the rest of the first `classes` channels). Every node's label equals the
// beacon's class, so no per-node function can beat chance away from the
// beacon; solving the task requires reading one distant node.
struct GridBeaconSpec {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 6;  // >= classes
  std::size_t classes = 4;
  double gain = 5.0;
};

struct GridBeaconSample {
  Sample sample;
  std::size_t beacon_pos = 0;
  int beacon_class = 0;
};

GridBeaconSample grid_beacon_sample(std::uint64_t seed, std::uint64_t index,
                                    const GridBeaconSpec& spec);
Dataset gen_grid_beacon(std::uint64_t seed, std::size_t count, const GridBeaconSpec& spec);

// Point-cloud task: K Gaussian clusters of randomized sizes (every cluster
// nonempty, largest strictly unique); every point is labeled with the index
// of the largest cluster, a global property no single point determines.
struct PointCloudSpec {
  std::size_t points = 64;
  std::size_t clusters = 4;
  std::size_t channels = 6;  // >= 3, first three are coordinates
  double center_spread = 2.0;
  double cluster_sigma = 0.6;
};

struct PointCloudSample {
  Sample sample;
  std::vector<int> assignments;  // cluster index per point
};

PointCloudSample point_cloud_sample(std::uint64_t seed, std::uint64_t index,
                                    const PointCloudSpec& spec);
Dataset gen_point_clusters(std::uint64_t seed, std::size_t count, const PointCloudSpec& spec);

// Container: text manifest, one little-endian f32 feature blob, one
// little-endian i32 label blob. Feature values are generated at f32
// precision, so save -> load reproduces a generated dataset exactly.
std::string encode_dataset(const Dataset& d);
Dataset decode_dataset(const std::string& bytes);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace lgnn
