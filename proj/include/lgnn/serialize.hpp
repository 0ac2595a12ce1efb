// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "lgnn/latent_gnn.hpp"

namespace lgnn {

// Weights container: a text manifest (version, dims, kernel kinds,
// activations, mixture length) followed by one raw little-endian f64 blob
// holding every parameter in a fixed order: w_in, per-kernel theta then
// latent factor (then theta_out when present), w_msg, mixture_w, w_out,
// lambda. Doubles are stored as raw bit patterns, so save -> load -> save is
// byte-identical.
std::string encode_weights(const LatentGnnParams& p);
LatentGnnParams decode_weights(const std::string& bytes);

void save_weights(const LatentGnnParams& p, const std::string& path);
LatentGnnParams load_weights(const std::string& path);

namespace io {

void append_f64_le(std::string& out, double v);
double read_f64_le(const char* bytes);
void append_i32_le(std::string& out, std::int32_t v);
std::int32_t read_i32_le(const char* bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace io

}  // namespace lgnn
