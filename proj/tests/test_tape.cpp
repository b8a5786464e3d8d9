#include <doctest.h>

#include <cmath>

#include "amrt/error.hpp"
#include "amrt/kernels.hpp"
#include "amrt/random.hpp"
#include "amrt/tape.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace amrt;

namespace {

using gradcheck::Id;
using gradcheck::random_matrix;

// Direct triple loop softmax(QK^T / sqrt d) V.
Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out(q.rows, v.cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  for (std::size_t i = 0; i < q.rows; ++i) {
    std::vector<double> s(k.rows);
    double m = -1e300;
    for (std::size_t j = 0; j < k.rows; ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < q.cols; ++d) dot += q(i, d) * k(j, d);
      s[j] = dot * scale;
      m = std::max(m, s[j]);
    }
    double z = 0.0;
    for (auto& x : s) z += (x = std::exp(x - m));
    for (std::size_t j = 0; j < k.rows; ++j)
      for (std::size_t d = 0; d < v.cols; ++d) out(i, d) += s[j] / z * v(j, d);
  }
  return out;
}

}  // namespace

TEST_CASE("matrix construction") {
  CHECK_THROWS_AS(Matrix(2, 3, std::vector<double>(5)), ShapeError);
  Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m(1, 0) == 4.0);
}

TEST_CASE("forward values of primitives") {
  Tape t;
  const Id a = t.leaf(Matrix(2, 2, {1, 2, 3, 4}));
  const Id b = t.leaf(Matrix(2, 2, {5, 6, 7, 8}));
  CHECK(t.value(t.matmul(a, b)) == Matrix(2, 2, {19, 22, 43, 50}));
  CHECK(t.value(t.matmul_nt(a, b, 2.0)) == Matrix(2, 2, {34, 46, 78, 106}));
  CHECK(t.value(t.add(a, b)) == Matrix(2, 2, {6, 8, 10, 12}));
  CHECK(t.value(t.mul(a, b)) == Matrix(2, 2, {5, 12, 21, 32}));
  CHECK(t.value(t.scale(a, -1.0)) == Matrix(2, 2, {-1, -2, -3, -4}));
  CHECK(t.value(t.add_row(a, t.leaf(Matrix(1, 2, {10, 20})))) == Matrix(2, 2, {11, 22, 13, 24}));
  CHECK(t.value(t.relu(t.leaf(Matrix(1, 3, {-1, 0, 2})))) == Matrix(1, 3, {0, 0, 2}));
  CHECK(t.value(t.slice_cols(a, 1, 2)) == Matrix(2, 1, {2, 4}));
  const std::vector<Id> parts{a, b};
  CHECK(t.value(t.concat_cols(parts)) == Matrix(2, 4, {1, 2, 5, 6, 3, 4, 7, 8}));

  const Id sm = t.softmax_rows(t.leaf(Matrix(2, 3, {0, 0, 0, 1, 2, 3000})));
  CHECK(t.value(sm)(0, 1) == doctest::Approx(1.0 / 3));
  CHECK(t.value(sm)(1, 2) == doctest::Approx(1.0));

  const Id ln = t.layer_norm(t.leaf(Matrix(1, 4, {1, 2, 3, 4})), t.leaf(Matrix(1, 4, 1.0)), t.leaf(Matrix(1, 4, 0.0)));
  double mean = 0.0, var = 0.0;
  for (double v : t.value(ln).values) mean += v / 4;
  for (double v : t.value(ln).values) var += (v - mean) * (v - mean) / 4;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var == doctest::Approx(1.25 / (1.25 + 1e-5)).epsilon(1e-12));

  CHECK_THROWS_AS(t.matmul(a, t.leaf(Matrix(3, 1))), ShapeError);
  CHECK_THROWS_AS(t.add(a, t.leaf(Matrix(2, 3))), ShapeError);
  CHECK_THROWS_AS(t.slice_cols(a, 1, 3), ShapeError);
  CHECK_THROWS_AS(t.nmse(a, Matrix(1, 4)), ShapeError);
  CHECK_THROWS_AS(t.backward(a), ShapeError);
}

TEST_CASE("softmax rows sum to one") {
  auto rng = make_engine(50);
  Tape t;
  const Id s = t.softmax_rows(t.leaf(random_matrix(rng, 17, 23, -30, 30)));
  for (std::size_t i = 0; i < 17; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < 23; ++j) z += t.value(s)(i, j);
    CHECK(z == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("nmse node") {
  Tape t;
  const Matrix label(2, 2, {1, -2, 3, 0.5});
  CHECK(t.value(t.nmse(t.leaf(label), label))(0, 0) == 0.0);
  CHECK(t.value(t.nmse(t.leaf(Matrix(2, 2)), label))(0, 0) == doctest::Approx(1.0));
  Matrix twice = label;
  for (auto& v : twice.values) v *= 2;
  CHECK(t.value(t.nmse(t.leaf(twice), label))(0, 0) == doctest::Approx(1.0));
  CHECK_FALSE(t.zero_label_fallback());
  const Id z = t.nmse(t.leaf(Matrix(1, 2, {3, 4})), Matrix(1, 2));
  CHECK(t.value(z)(0, 0) == doctest::Approx(12.5));
  CHECK(t.zero_label_fallback());
}

TEST_CASE("finite-difference gradients of every primitive") {
  auto rng = make_engine(51);
  for (const auto& [name, err] : gradcheck::primitive_errors(rng)) {
    CAPTURE(name);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("fan-out accumulates and frozen leaves get no gradient") {
  Tape t;
  const Id a = t.leaf(Matrix(1, 1, {3.0}), true);
  const Id frozen = t.leaf(Matrix(1, 1, {2.0}));
  const Id y = t.add(t.mul(a, a), t.mul(a, frozen));
  t.backward(y);
  CHECK(t.grad(a)(0, 0) == doctest::Approx(2 * 3.0 + 2.0));
  CHECK(t.grad(frozen).size() == 0);
}

TEST_CASE("attention against a brute-force oracle") {
  auto rng = make_engine(52);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng() % 12, d = 1 + rng() % 6, dv = 1 + rng() % 5;
    const Matrix q = random_matrix(rng, n, d, -2, 2), k = random_matrix(rng, n, d, -2, 2),
                 v = random_matrix(rng, n, dv);
    const Matrix got = attention(q, k, v), want = attention_oracle(q, k, v);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.values[i] - want.values[i]) < 1e-12);
  }
  // N = 1: output row is the V row.
  const Matrix v1(1, 3, {4, 5, 6});
  CHECK(attention(Matrix(1, 2, {1, 2}), Matrix(1, 2, {3, 4}), v1) == v1);
  // Identical keys: uniform weights over V.
  const Matrix v(3, 1, {1, 2, 6});
  const Matrix out = attention(random_matrix(rng, 3, 2), Matrix(3, 2, 0.7), v);
  for (double x : out.values) CHECK(x == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 2), Matrix(2, 2)), ShapeError);
  CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST_CASE("parallel kernels equal serial references bitwise") {
  auto rng = make_engine(53);
  const std::size_t m = 37, k = 29, n = 41;
  const Matrix a = random_matrix(rng, m, k), b = random_matrix(rng, k, n), bt = random_matrix(rng, n, k);
  std::vector<double> c1(m * n), c2(m * n);
  kernels::matmul(a.values, b.values, c1, m, k, n);
  kernels::serial::matmul(a.values, b.values, c2, m, k, n);
  CHECK(c1 == c2);
  kernels::matmul_nt(a.values, bt.values, c1, m, k, n, 0.3);
  kernels::serial::matmul_nt(a.values, bt.values, c2, m, k, n, 0.3);
  CHECK(c1 == c2);
  const Matrix at = random_matrix(rng, k, m);
  std::vector<double> d1(m * n, 1.0), d2(m * n, 1.0);
  kernels::matmul_tn_acc(at.values, b.values, d1, m, k, n);
  kernels::serial::matmul_tn_acc(at.values, b.values, d2, m, k, n);
  CHECK(d1 == d2);
  std::vector<double> s1 = c1, s2 = c1;
  kernels::softmax_rows(s1, m, n);
  kernels::serial::softmax_rows(s2, m, n);
  CHECK(s1 == s2);
}
