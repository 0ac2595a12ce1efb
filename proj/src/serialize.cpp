// SPDX-License-Identifier: Apache-2.0
#include "lgnn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "lgnn/autograd.hpp"

namespace lgnn {
namespace io {

void append_f64_le(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double read_f64_le(const char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void append_i32_le(std::string& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

std::int32_t read_i32_le(const char* bytes) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i)
    u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
  return static_cast<std::int32_t>(u);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace io

namespace {

constexpr const char* kMagic = "latentgnn-weights v1";

[[noreturn]] void parse_error(const std::string& what) {
  throw std::runtime_error("weights parse error: " + what);
}

// Returns the next manifest line and advances pos past its newline.
std::string next_line(const std::string& bytes, std::size_t& pos) {
  const auto nl = bytes.find('\n', pos);
  if (nl == std::string::npos) parse_error("truncated manifest");
  std::string line = bytes.substr(pos, nl - pos);
  pos = nl + 1;
  return line;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> toks;
  std::string t;
  while (in >> t) toks.push_back(t);
  return toks;
}

std::size_t parse_size(const std::string& tok) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &used);
  } catch (const std::exception&) {
    parse_error("expected integer, got '" + tok + "'");
  }
  if (used != tok.size()) parse_error("expected integer, got '" + tok + "'");
  return static_cast<std::size_t>(v);
}

std::size_t expect_field(const std::vector<std::string>& toks, const char* key) {
  if (toks.size() != 2 || toks[0] != key) parse_error(std::string("expected '") + key + " <n>'");
  return parse_size(toks[1]);
}

}  // namespace

std::string encode_weights(const LatentGnnParams& p) {
  check_params(p);
  std::ostringstream man;
  man << kMagic << '\n';
  man << "c " << p.w_in.rows() << '\n';
  man << "c_r " << p.w_in.cols() << '\n';
  man << "activation " << to_string(p.activation) << '\n';
  man << "kernels " << p.kernels.size() << '\n';
  for (std::size_t m = 0; m < p.kernels.size(); ++m) {
    const KernelParams& k = p.kernels[m];
    man << "kernel " << m << " d " << k.psi.d() << " kind " << to_string(k.latent.kind)
        << " psi " << to_string(k.psi.activation);
    if (k.latent.kind == LatentKind::kSymmetricFactor) man << " rank " << k.latent.phi.cols();
    if (k.psi_out) man << " psi_out " << to_string(k.psi_out->activation);
    man << '\n';
  }
  man << "mixture_len " << p.mixture_w.size() << '\n';

  LatentGnnParams copy = p;
  const auto views = param_views(copy);
  std::size_t count = 0;
  for (const auto& v : views) count += v.size;
  man << "blob_f64 " << count << '\n';

  std::string out = man.str();
  out.reserve(out.size() + count * 8);
  for (const auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) io::append_f64_le(out, v.data[i]);
  return out;
}

LatentGnnParams decode_weights(const std::string& bytes) {
  std::size_t pos = 0;
  if (next_line(bytes, pos) != kMagic) parse_error("bad magic line");

  const std::size_t c = expect_field(split_ws(next_line(bytes, pos)), "c");
  const std::size_t cr = expect_field(split_ws(next_line(bytes, pos)), "c_r");

  const auto act_toks = split_ws(next_line(bytes, pos));
  if (act_toks.size() != 2 || act_toks[0] != "activation") parse_error("expected activation line");
  LatentGnnParams p;
  p.activation = activation_from_string(act_toks[1]);
  p.w_in = Matrix(c, cr);
  p.w_msg = Matrix(cr, cr);
  p.w_out = Matrix(cr, c);

  const std::size_t n_kernels = expect_field(split_ws(next_line(bytes, pos)), "kernels");
  p.kernels.reserve(n_kernels);
  for (std::size_t m = 0; m < n_kernels; ++m) {
    const auto toks = split_ws(next_line(bytes, pos));
    if (toks.size() < 8 || toks[0] != "kernel") parse_error("expected kernel line");
    if (parse_size(toks[1]) != m) parse_error("kernel lines out of order");
    if (toks[2] != "d" || toks[4] != "kind" || toks[6] != "psi") parse_error("bad kernel line");
    const std::size_t d = parse_size(toks[3]);
    const LatentKind kind = latent_kind_from_string(toks[5]);
    KernelParams k;
    k.psi.theta = Matrix(cr, d);
    k.psi.activation = activation_from_string(toks[7]);
    std::size_t rank = d;
    std::size_t at = 8;
    if (at < toks.size() && toks[at] == "rank") {
      if (at + 1 >= toks.size()) parse_error("rank without value");
      rank = parse_size(toks[at + 1]);
      at += 2;
    }
    switch (kind) {
      case LatentKind::kIdentity: k.latent = LatentAffinity::make_identity(d); break;
      case LatentKind::kFree: k.latent = LatentAffinity::make_free(Matrix(d, d)); break;
      case LatentKind::kSymmetricFactor:
        k.latent = LatentAffinity::make_symmetric_factor(Matrix(d, rank));
        break;
    }
    if (at < toks.size()) {
      if (toks[at] != "psi_out" || at + 1 >= toks.size()) parse_error("bad kernel suffix");
      PsiParams po;
      po.theta = Matrix(cr, d);
      po.activation = activation_from_string(toks[at + 1]);
      k.psi_out = std::move(po);
      at += 2;
    }
    if (at != toks.size()) parse_error("trailing tokens on kernel line");
    p.kernels.push_back(std::move(k));
  }

  const std::size_t mix_len = expect_field(split_ws(next_line(bytes, pos)), "mixture_len");
  if (mix_len != n_kernels) parse_error("mixture_len does not match kernels");
  p.mixture_w.assign(mix_len, 0.0);

  const std::size_t count = expect_field(split_ws(next_line(bytes, pos)), "blob_f64");
  const auto views = param_views(p);
  std::size_t expected = 0;
  for (const auto& v : views) expected += v.size;
  if (count != expected) parse_error("blob_f64 count does not match manifest shapes");
  if (bytes.size() - pos != count * 8) parse_error("blob size mismatch");

  for (const auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) {
      v.data[i] = io::read_f64_le(bytes.data() + pos);
      pos += 8;
    }
  check_params(p);
  return p;
}

void save_weights(const LatentGnnParams& p, const std::string& path) {
  io::write_file(path, encode_weights(p));
}

LatentGnnParams load_weights(const std::string& path) {
  return decode_weights(io::read_file(path));
}

}  // namespace lgnn
