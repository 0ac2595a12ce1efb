// SPDX-License-Identifier: Apache-2.0
#include "lgnn/tasks.hpp"

#include <cstring>
#include <sstream>
#include <stdexcept>

#include "lgnn/rng.hpp"
#include "lgnn/serialize.hpp"

namespace lgnn {

namespace {

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

constexpr std::uint64_t kBeaconStream = 0x626561636f6eULL;   // "beacon"
constexpr std::uint64_t kClusterStream = 0x636c757374ULL;    // "clust"

}  // namespace

std::vector<std::size_t> scaled_preset(const std::string& name, std::size_t divisor) {
  if (divisor == 0) throw std::invalid_argument("scaled_preset: divisor must be positive");
  std::vector<std::size_t> base;
  if (name == "image") {
    base.assign(kStagePresetImage.begin(), kStagePresetImage.end());
  } else if (name == "pointcloud") {
    base.assign(kStagePresetPointCloud.begin(), kStagePresetPointCloud.end());
  } else {
    throw std::invalid_argument("unknown preset: " + name + " (expected image|pointcloud)");
  }
  for (auto& d : base) d = d / divisor > 0 ? d / divisor : 1;
  return base;
}

GridBeaconSample grid_beacon_sample(std::uint64_t seed, std::uint64_t index,
                                    const GridBeaconSpec& spec) {
  const std::size_t n = spec.height * spec.width;
  if (n < 2) throw std::invalid_argument("grid_beacon_sample: need at least 2 nodes");
  if (spec.classes < 2) throw std::invalid_argument("grid_beacon_sample: need K >= 2");
  if (spec.channels < spec.classes)
    throw std::invalid_argument("grid_beacon_sample: channels must be >= classes");

  Rng rng(Rng::mix(Rng::mix(seed, kBeaconStream), index));
  GridBeaconSample out;
  out.beacon_pos = rng.below(n);
  out.beacon_class = static_cast<int>(rng.below(spec.classes));

  Matrix f(n, spec.channels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < spec.channels; ++j) f(i, j) = f32(rng.normal());
  for (std::size_t j = 0; j < spec.classes; ++j)
    f(out.beacon_pos, j) = j == static_cast<std::size_t>(out.beacon_class) ? f32(spec.gain) : 0.0;

  out.sample.features = std::move(f);
  out.sample.targets.assign(n, out.beacon_class);
  return out;
}

Dataset gen_grid_beacon(std::uint64_t seed, std::size_t count, const GridBeaconSpec& spec) {
  Dataset d;
  d.task = "beacon";
  d.classes = spec.classes;
  d.nodes = spec.height * spec.width;
  d.channels = spec.channels;
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    d.samples.push_back(grid_beacon_sample(seed, i, spec).sample);
  return d;
}

PointCloudSample point_cloud_sample(std::uint64_t seed, std::uint64_t index,
                                    const PointCloudSpec& spec) {
  const std::size_t n = spec.points;
  const std::size_t k = spec.clusters;
  if (k < 2) throw std::invalid_argument("point_cloud_sample: need K >= 2");
  if (n < 2 * k) throw std::invalid_argument("point_cloud_sample: need N >= 2K");
  if (spec.channels < 3) throw std::invalid_argument("point_cloud_sample: need channels >= 3");

  Rng rng(Rng::mix(Rng::mix(seed, kClusterStream), index));

  Matrix centers(k, 3);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < 3; ++j) centers(c, j) = rng.normal(0.0, spec.center_spread);

  // Redraw whole assignments until every cluster is nonempty and the largest
  // is strictly unique, so the target label is well defined.
  std::vector<int> assign(n);
  std::vector<std::size_t> counts;
  int target = -1;
  for (int attempt = 0; attempt < 10000 && target < 0; ++attempt) {
    counts.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(rng.below(k));
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    std::size_t best = 0;
    bool tie = false, empty = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) empty = true;
      if (c > 0 && counts[c] == counts[best]) tie = true;
      if (counts[c] > counts[best]) {
        best = c;
        tie = false;
      }
    }
    if (!tie && !empty) target = static_cast<int>(best);
  }
  if (target < 0) throw std::runtime_error("point_cloud_sample: could not draw a unique largest cluster");

  PointCloudSample out;
  out.assignments = assign;

  Matrix f(n, spec.channels);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assign[i]);
    for (std::size_t j = 0; j < 3; ++j)
      f(i, j) = f32(centers(c, j) + rng.normal(0.0, spec.cluster_sigma));
    for (std::size_t j = 3; j < spec.channels; ++j) f(i, j) = f32(rng.normal());
  }

  out.sample.features = std::move(f);
  out.sample.targets.assign(n, target);
  return out;
}

Dataset gen_point_clusters(std::uint64_t seed, std::size_t count, const PointCloudSpec& spec) {
  Dataset d;
  d.task = "clusters";
  d.classes = spec.clusters;
  d.nodes = spec.points;
  d.channels = spec.channels;
  d.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    d.samples.push_back(point_cloud_sample(seed, i, spec).sample);
  return d;
}

namespace {

void append_f32_le(std::string& out, float v) {
  std::uint32_t bits = 0;
  static_assert(sizeof bits == sizeof v);
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

float read_f32_le(const char* bytes) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i)
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  float v = 0.0f;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

[[noreturn]] void parse_error(const std::string& what) {
  throw std::runtime_error("dataset parse error: " + what);
}

std::string next_line(const std::string& bytes, std::size_t& pos) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string::npos) parse_error("truncated manifest");
  std::string line = bytes.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

std::size_t field_value(const std::string& line, const char* key) {
  std::istringstream in(line);
  std::string k;
  unsigned long long v = 0;
  if (!(in >> k >> v) || k != key) parse_error(std::string("expected '") + key + " <n>'");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string encode_dataset(const Dataset& d) {
  for (const auto& s : d.samples) {
    if (s.features.rows() != d.nodes || s.features.cols() != d.channels ||
        s.targets.size() != d.nodes) {
      throw std::invalid_argument("encode_dataset: sample shape mismatch");
    }
  }
  std::ostringstream man;
  man << "latentgnn-dataset v1\n";
  man << "task " << d.task << '\n';
  man << "classes " << d.classes << '\n';
  man << "samples " << d.samples.size() << '\n';
  man << "nodes " << d.nodes << '\n';
  man << "channels " << d.channels << '\n';
  const std::size_t feat_count = d.samples.size() * d.nodes * d.channels;
  const std::size_t label_count = d.samples.size() * d.nodes;
  man << "blob_f32 " << feat_count << '\n';
  man << "blob_i32 " << label_count << '\n';

  std::string out = man.str();
  out.reserve(out.size() + feat_count * 4 + label_count * 4);
  for (const auto& s : d.samples)
    for (double v : s.features.data()) append_f32_le(out, static_cast<float>(v));
  for (const auto& s : d.samples)
    for (int t : s.targets) io::append_i32_le(out, t);
  return out;
}

Dataset decode_dataset(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_line(bytes, pos) != "latentgnn-dataset v1") parse_error("bad magic line");

  Dataset d;
  {
    std::istringstream in(next_line(bytes, pos));
    std::string k;
    if (!(in >> k >> d.task) || k != "task") parse_error("expected task line");
  }
  d.classes = field_value(next_line(bytes, pos), "classes");
  const std::size_t count = field_value(next_line(bytes, pos), "samples");
  d.nodes = field_value(next_line(bytes, pos), "nodes");
  d.channels = field_value(next_line(bytes, pos), "channels");
  const std::size_t feat_count = field_value(next_line(bytes, pos), "blob_f32");
  const std::size_t label_count = field_value(next_line(bytes, pos), "blob_i32");
  if (feat_count != count * d.nodes * d.channels || label_count != count * d.nodes)
    parse_error("blob sizes do not match manifest shape");
  if (bytes.size() - pos != feat_count * 4 + label_count * 4) parse_error("payload size mismatch");

  d.samples.resize(count);
  for (auto& s : d.samples) {
    s.features = Matrix(d.nodes, d.channels);
    for (double& v : s.features.data()) {
      v = static_cast<double>(read_f32_le(bytes.data() + pos));
      pos += 4;
    }
  }
  for (auto& s : d.samples) {
    s.targets.resize(d.nodes);
    for (int& t : s.targets) {
      t = io::read_i32_le(bytes.data() + pos);
      pos += 4;
    }
  }
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  io::write_file(path, encode_dataset(d));
}

Dataset load_dataset(const std::string& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace lgnn
