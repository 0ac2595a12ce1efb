// SPDX-License-Identifier: Apache-2.0
#include "lgnn/affinity.hpp"

#include <stdexcept>

namespace lgnn {

Matrix apply_activation(const Matrix& m, Activation act) {
  switch (act) {
    case Activation::kIdentity:
      return m;
    case Activation::kRelu:
      return relu(m);
  }
  throw std::invalid_argument("apply_activation: unknown activation");
}

const char* to_string(Activation act) {
  return act == Activation::kRelu ? "relu" : "identity";
}

const char* to_string(AffinityVariant v) {
  return v == AffinityVariant::kSim ? "sim" : "lap";
}

const char* to_string(LatentKind k) {
  switch (k) {
    case LatentKind::kIdentity: return "identity";
    case LatentKind::kFree: return "free";
    case LatentKind::kSymmetricFactor: return "symmetric-factor";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation: " + s);
}

AffinityVariant affinity_variant_from_string(const std::string& s) {
  if (s == "sim") return AffinityVariant::kSim;
  if (s == "lap") return AffinityVariant::kLap;
  throw std::invalid_argument("unknown affinity variant: " + s);
}

LatentKind latent_kind_from_string(const std::string& s) {
  if (s == "identity") return LatentKind::kIdentity;
  if (s == "free") return LatentKind::kFree;
  if (s == "symmetric-factor") return LatentKind::kSymmetricFactor;
  throw std::invalid_argument("unknown latent kind: " + s);
}

LatentAffinity LatentAffinity::make_identity(std::size_t d) {
  LatentAffinity a;
  a.kind = LatentKind::kIdentity;
  a.d = d;
  return a;
}

LatentAffinity LatentAffinity::make_free(Matrix f) {
  if (f.rows() != f.cols()) throw std::invalid_argument("LatentAffinity: F must be square");
  LatentAffinity a;
  a.kind = LatentKind::kFree;
  a.d = f.rows();
  a.f = std::move(f);
  return a;
}

LatentAffinity LatentAffinity::make_symmetric_factor(Matrix phi) {
  LatentAffinity a;
  a.kind = LatentKind::kSymmetricFactor;
  a.d = phi.rows();
  a.phi = std::move(phi);
  return a;
}

DenseAffinity dense_affinity(const Matrix& x, AffinityVariant variant) {
  DenseAffinity out;
  out.variant = variant;
  out.a = matmul_bt(x, x);  // M = X X^T, exactly symmetric
  if (variant == AffinityVariant::kLap) {
    for (std::size_t i = 0; i < out.a.rows(); ++i) {
      double* row = out.a.row(i);
      double degree = 0.0;
      for (std::size_t j = 0; j < out.a.cols(); ++j) degree += row[j];
      const double guarded = degree > kDegreeEpsilon ? degree : kDegreeEpsilon;
      const double inv = 1.0 / guarded;
      for (std::size_t j = 0; j < out.a.cols(); ++j) row[j] *= inv;
    }
  }
  return out;
}

Matrix psi(const Matrix& x, const PsiParams& p) {
  return apply_activation(matmul(x, p.theta), p.activation);
}

Matrix latent_matrix(const LatentAffinity& a) {
  switch (a.kind) {
    case LatentKind::kIdentity:
      return Matrix::identity(a.d);
    case LatentKind::kFree:
      return a.f;
    case LatentKind::kSymmetricFactor:
      return matmul_bt(a.phi, a.phi);
  }
  throw std::invalid_argument("latent_matrix: unknown kind");
}

Matrix expand_low_rank(const Matrix& psi_mat, const Matrix& f) {
  if (f.rows() != psi_mat.cols() || f.cols() != psi_mat.cols()) {
    throw std::invalid_argument("expand_low_rank: F must be d x d with d = psi cols");
  }
  return matmul_bt(matmul(psi_mat, f), psi_mat);
}

}  // namespace lgnn
