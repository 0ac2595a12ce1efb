// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "lgnn/affinity.hpp"
#include "lgnn/matrix.hpp"
#include "lgnn/rng.hpp"
#include "oracles.hpp"

using lgnn::Activation;
using lgnn::AffinityVariant;
using lgnn::LatentAffinity;
using lgnn::LatentKind;
using lgnn::Matrix;
using lgnn::Rng;

TEST_SUITE_BEGIN("affinity");

TEST_CASE("sim affinity hand examples") {
  const Matrix eye = Matrix::identity(2);
  const auto a1 = lgnn::dense_affinity(eye, AffinityVariant::kSim);
  CHECK(lgnn::max_abs_diff(a1.a, Matrix::identity(2)) == 0.0);

  const Matrix x(3, 2, {1, 0, 0, 1, 1, 1});
  const auto a2 = lgnn::dense_affinity(x, AffinityVariant::kSim);
  const Matrix expect(3, 3, {1, 0, 1, 0, 1, 1, 1, 1, 2});
  CHECK(lgnn::max_abs_diff(a2.a, expect) == 0.0);
}

TEST_CASE("sim affinity is exactly symmetric") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const Matrix x = oracles::random_matrix(rng, 2 + rng.below(20), 1 + rng.below(8));
    const auto a = lgnn::dense_affinity(x, AffinityVariant::kSim);
    CHECK(lgnn::max_abs_diff(a.a, lgnn::transpose(a.a)) == 0.0);
  }
}

TEST_CASE("lap affinity rows sum to one when degrees are healthy") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    // Nonnegative features make every pairwise product nonnegative, so
    // degrees stay clearly above the guard.
    Matrix x = oracles::random_matrix(rng, 2 + rng.below(16), 2 + rng.below(6));
    for (double& v : x.data()) v = std::abs(v) + 0.1;
    const auto a = lgnn::dense_affinity(x, AffinityVariant::kLap);
    for (double s : lgnn::row_sums(a.a)) CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("lap affinity zero-degree row stays a zero row") {
  // Row 0 is all zeros: its products with every row (itself included) are 0,
  // so its degree hits the guard and the normalized row stays zero.
  Matrix x(3, 4, {0, 0, 0, 0,
                  1, 0, 0, 0,
                  0, 1, 0, 0});
  const auto a = lgnn::dense_affinity(x, AffinityVariant::kLap);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a.a(0, j) == 0.0);
}

TEST_CASE("psi identity and relu passthrough") {
  Rng rng(3);
  const Matrix x = oracles::random_matrix(rng, 6, 4);
  lgnn::PsiParams p;
  p.theta = Matrix::identity(4);
  p.activation = Activation::kIdentity;
  CHECK(lgnn::max_abs_diff(lgnn::psi(x, p), x) == 0.0);

  Matrix nonneg = x;
  for (double& v : nonneg.data()) v = std::abs(v);
  p.activation = Activation::kRelu;
  CHECK(lgnn::max_abs_diff(lgnn::psi(nonneg, p), nonneg) == 0.0);
}

TEST_CASE("psi matches a scalar dot-product oracle") {
  Rng rng(5);
  const Matrix x = oracles::random_matrix(rng, 7, 5);
  lgnn::PsiParams p;
  p.theta = oracles::random_matrix(rng, 5, 3);
  p.activation = Activation::kRelu;
  const Matrix got = lgnn::psi(x, p);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      double dot = 0.0;
      for (std::size_t t = 0; t < 5; ++t) dot += x(i, t) * p.theta(t, k);
      if (dot < 0.0) dot = 0.0;
      CHECK(got(i, k) == doctest::Approx(dot).epsilon(1e-14));
    }
}

TEST_CASE("psi is positively homogeneous under relu") {
  Rng rng(7);
  const Matrix x = oracles::random_matrix(rng, 6, 4);
  lgnn::PsiParams p;
  p.theta = oracles::random_matrix(rng, 4, 5);
  p.activation = Activation::kRelu;
  // Powers of two scale without rounding, so the identity is exact.
  for (const double alpha : {2.0, 0.5, 4.0}) {
    const Matrix left = lgnn::psi(lgnn::scale(x, alpha), p);
    const Matrix right = lgnn::scale(lgnn::psi(x, p), alpha);
    CHECK(lgnn::max_abs_diff(left, right) == 0.0);
  }
}

TEST_CASE("latent matrix kinds") {
  CHECK(lgnn::max_abs_diff(lgnn::latent_matrix(LatentAffinity::make_identity(4)),
                           Matrix::identity(4)) == 0.0);

  Rng rng(9);
  const Matrix f = oracles::random_matrix(rng, 3, 3);
  CHECK(lgnn::max_abs_diff(lgnn::latent_matrix(LatentAffinity::make_free(f)), f) == 0.0);

  const Matrix phi = oracles::random_matrix(rng, 5, 2);
  const Matrix sym = lgnn::latent_matrix(LatentAffinity::make_symmetric_factor(phi));
  CHECK(lgnn::max_abs_diff(sym, lgnn::transpose(sym)) == 0.0);
}

TEST_CASE("symmetric-factor latent matrix is positive semidefinite") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t d = 2 + rng.below(6);
    const std::size_t r = 1 + rng.below(d);
    const Matrix phi = oracles::random_matrix(rng, d, r);
    const Matrix f = lgnn::latent_matrix(LatentAffinity::make_symmetric_factor(phi));
    Rng power_rng(seed + 100);
    CHECK(oracles::min_eig_oracle(f, power_rng) >= -1e-9 * std::max(1.0, lgnn::max_abs(f)));
  }
}

TEST_CASE("expand_low_rank hand cases") {
  const Matrix ones_col = Matrix::filled(4, 1, 1.0);
  const Matrix a = lgnn::expand_low_rank(ones_col, Matrix::identity(1));
  CHECK(lgnn::max_abs_diff(a, Matrix::filled(4, 4, 1.0)) == 0.0);

  Rng rng(11);
  const Matrix f = oracles::random_matrix(rng, 4, 4);
  const Matrix b = lgnn::expand_low_rank(Matrix::identity(4), f);
  CHECK(lgnn::max_abs_diff(b, f) == 0.0);
}

TEST_CASE("expand_low_rank has numerical rank at most d") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Rng rng(seed);
    const std::size_t n = 8 + rng.below(9);
    const std::size_t d = 1 + rng.below(4);
    const Matrix psi_mat = oracles::random_matrix(rng, n, d);
    const Matrix f = oracles::random_matrix(rng, d, d);
    const Matrix a = lgnn::expand_low_rank(psi_mat, f);
    const auto sv = oracles::singular_values_oracle(a);
    REQUIRE(sv.size() == n);
    const double top = sv[0];
    for (std::size_t i = d; i < n; ++i) CHECK(sv[i] <= 1e-7 * std::max(top, 1.0));
  }
}

TEST_CASE("string round trips") {
  CHECK(lgnn::activation_from_string("relu") == Activation::kRelu);
  CHECK(lgnn::activation_from_string("identity") == Activation::kIdentity);
  CHECK(lgnn::affinity_variant_from_string("sim") == AffinityVariant::kSim);
  CHECK(lgnn::affinity_variant_from_string("lap") == AffinityVariant::kLap);
  CHECK(lgnn::latent_kind_from_string("symmetric-factor") == LatentKind::kSymmetricFactor);
  CHECK_THROWS_AS((void)lgnn::activation_from_string("gelu"), std::invalid_argument);
  CHECK_THROWS_AS((void)lgnn::latent_kind_from_string("nope"), std::invalid_argument);
}

TEST_SUITE_END();
