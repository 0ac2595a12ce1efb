// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "lgnn/matrix.hpp"
#include "lgnn/rng.hpp"
#include "oracles.hpp"

using lgnn::Matrix;
using lgnn::Rng;

TEST_SUITE_BEGIN("matrix");

TEST_CASE("matmul identity cases") {
  Rng rng(1);
  const Matrix b = oracles::random_matrix(rng, 3, 5);
  CHECK(lgnn::max_abs_diff(lgnn::matmul(Matrix::identity(3), b), b) == 0.0);

  const Matrix a(2, 2, {1, 2, 3, 4});
  const Matrix result = lgnn::matmul(a, Matrix::identity(2));
  CHECK(result(0, 0) == 1.0);
  CHECK(result(0, 1) == 2.0);
  CHECK(result(1, 0) == 3.0);
  CHECK(result(1, 1) == 4.0);
}

TEST_CASE("matmul matches the triple-loop reference") {
  Rng rng(7);
  const Matrix a = oracles::random_matrix(rng, 5, 4);
  const Matrix b = oracles::random_matrix(rng, 4, 3);
  CHECK(lgnn::max_abs_diff(lgnn::matmul(a, b), oracles::matmul_oracle(a, b)) <= 1e-13);

  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    Rng r(seed);
    const std::size_t m = 1 + r.below(9);
    const std::size_t k = 1 + r.below(9);
    const std::size_t n = 1 + r.below(9);
    const Matrix x = oracles::random_matrix(r, m, k);
    const Matrix y = oracles::random_matrix(r, k, n);
    CHECK(lgnn::max_abs_diff(lgnn::matmul(x, y), oracles::matmul_oracle(x, y)) <= 1e-13);
  }
}

TEST_CASE("matmul shape mismatch throws") {
  const Matrix a(2, 3);
  const Matrix b(2, 3);
  CHECK_THROWS_AS((void)lgnn::matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)lgnn::add(a, Matrix(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS((void)lgnn::hadamard(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("transpose variants avoid materialization but match it") {
  Rng rng(11);
  const Matrix a = oracles::random_matrix(rng, 6, 4);
  const Matrix b = oracles::random_matrix(rng, 6, 5);
  const Matrix c = oracles::random_matrix(rng, 7, 4);

  CHECK(lgnn::max_abs_diff(lgnn::matmul_at(a, b),
                           oracles::matmul_oracle(lgnn::transpose(a), b)) <= 1e-13);
  CHECK(lgnn::max_abs_diff(lgnn::matmul_bt(a, c),
                           oracles::matmul_oracle(a, lgnn::transpose(c))) <= 1e-13);
}

TEST_CASE("transpose is an involution") {
  Rng rng(13);
  const Matrix a = oracles::random_matrix(rng, 4, 7);
  CHECK(lgnn::max_abs_diff(lgnn::transpose(lgnn::transpose(a)), a) == 0.0);
}

TEST_CASE("elementwise operations") {
  Rng rng(17);
  const Matrix a = oracles::random_matrix(rng, 5, 5);
  const Matrix b = oracles::random_matrix(rng, 5, 5);

  const Matrix sum = lgnn::add(a, b);
  const Matrix diff = lgnn::sub(sum, b);
  CHECK(lgnn::max_abs_diff(diff, a) <= 1e-15);

  CHECK(lgnn::max_abs(lgnn::scale(a, 0.0)) == 0.0);

  const Matrix h = lgnn::hadamard(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(h(i, j) == a(i, j) * b(i, j));
}

TEST_CASE("relu basics and absolute-value identity") {
  const Matrix m(1, 2, {-1.0, 2.0});
  const Matrix r = lgnn::relu(m);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 2.0);

  Rng rng(19);
  Matrix x = oracles::random_matrix(rng, 4, 4);
  const Matrix nonneg = lgnn::relu(x);
  CHECK(lgnn::max_abs_diff(lgnn::relu(nonneg), nonneg) == 0.0);

  const Matrix lhs = lgnn::add(lgnn::relu(x), lgnn::relu(lgnn::scale(x, -1.0)));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) CHECK(lhs(i, j) == std::abs(x(i, j)));
}

TEST_CASE("axpy, row_sums, dot_all") {
  Rng rng(23);
  const Matrix x = oracles::random_matrix(rng, 3, 4);
  Matrix y = oracles::random_matrix(rng, 3, 4);
  const Matrix y0 = y;
  lgnn::axpy(y, 2.0, x);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y.data()[i] == y0.data()[i] + 2.0 * x.data()[i]);

  const Matrix ones = Matrix::filled(2, 3, 1.0);
  const auto sums = lgnn::row_sums(ones);
  REQUIRE(sums.size() == 2);
  CHECK(sums[0] == 3.0);
  CHECK(sums[1] == 3.0);

  double expect = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) expect += x.data()[i] * y.data()[i];
  CHECK(lgnn::dot_all(x, y) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("matmul associativity within tolerance") {
  for (std::uint64_t seed = 40; seed < 45; ++seed) {
    Rng rng(seed);
    const Matrix a = oracles::random_matrix(rng, 16, 12);
    const Matrix b = oracles::random_matrix(rng, 12, 14);
    const Matrix c = oracles::random_matrix(rng, 14, 10);
    const Matrix left = lgnn::matmul(lgnn::matmul(a, b), c);
    const Matrix right = lgnn::matmul(a, lgnn::matmul(b, c));
    const double scale = std::max(1.0, std::max(lgnn::max_abs(left), lgnn::max_abs(right)));
    CHECK(lgnn::max_abs_diff(left, right) <= 1e-9 * scale);
  }
}

TEST_CASE("determinism: repeated calls are bit-identical") {
  Rng rng(29);
  const Matrix a = oracles::random_matrix(rng, 33, 17);
  const Matrix b = oracles::random_matrix(rng, 17, 21);
  const Matrix first = lgnn::matmul(a, b);
  const Matrix second = lgnn::matmul(a, b);
  CHECK(lgnn::max_abs_diff(first, second) == 0.0);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Matrix m(2, 2, {1.0, 2.0, 3.0, 4.0});
  CHECK(m.all_finite());
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
  m(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(m.all_finite());
}

TEST_CASE("rng determinism and distribution sanity") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(5);
  double mean = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += r.normal();
  mean /= n;
  CHECK(std::abs(mean) < 0.05);

  Rng u(6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    const auto k = u.below(7);
    CHECK(k < 7);
  }

  CHECK(Rng::mix(1, 0) != Rng::mix(1, 1));
  CHECK(Rng::mix(1, 0) != Rng::mix(2, 0));
}

TEST_SUITE_END();
