// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "lgnn/matrix.hpp"

namespace lgnn {

enum class Activation { kIdentity, kRelu };

enum class AffinityVariant { kSim, kLap };

enum class LatentKind { kIdentity, kFree, kSymmetricFactor };

// Clamp floor for the degree normalization of the lap variant. A row whose
// degree falls below this keeps its unnormalized scale divided by the floor;
// for non-negative affinities that means a zero-degree row stays a zero row.
inline constexpr double kDegreeEpsilon = 1e-12;

Matrix apply_activation(const Matrix& m, Activation act);

const char* to_string(Activation act);
const char* to_string(AffinityVariant v);
const char* to_string(LatentKind k);
Activation activation_from_string(const std::string& s);
AffinityVariant affinity_variant_from_string(const std::string& s);
LatentKind latent_kind_from_string(const std::string& s);

// Visible-to-latent affinity: column k of theta parametrizes latent node k,
// and psi(X) = activation(X * theta) row i holds node i's affinity to every
// latent node.
struct PsiParams {
  Matrix theta;  // c x d
  Activation activation = Activation::kRelu;

  std::size_t d() const { return theta.cols(); }
};

// Latent-to-latent affinity F (d x d). Three parametrizations: implicit
// identity, a free matrix, or a symmetric PSD product phi * phi^T.
struct LatentAffinity {
  LatentKind kind = LatentKind::kIdentity;
  std::size_t d = 0;
  Matrix f;    // kind == kFree: d x d
  Matrix phi;  // kind == kSymmetricFactor: d x r

  static LatentAffinity make_identity(std::size_t d);
  static LatentAffinity make_free(Matrix f);
  static LatentAffinity make_symmetric_factor(Matrix phi);
};

struct DenseAffinity {
  AffinityVariant variant = AffinityVariant::kSim;
  Matrix a;  // N x N
};

// sim: A = X X^T. lap: A = D^-1 M with D_ii = sum_j M_ij, degree-guarded.
DenseAffinity dense_affinity(const Matrix& x, AffinityVariant variant);

// psi(X) = activation(X * theta), N x d.
Matrix psi(const Matrix& x, const PsiParams& p);

// Materializes F for any kind.
Matrix latent_matrix(const LatentAffinity& a);

// Dense N x N expansion psi * F * psi^T; rank <= d by construction. Intended
// for oracles and small N only.
Matrix expand_low_rank(const Matrix& psi_mat, const Matrix& f);

}  // namespace lgnn
