#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "ssam/transform.hpp"

using namespace ssam;

namespace {

Vector random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("dct of simple inputs") {
  CHECK(dct(Vector::Zero(8)).isZero(0.0));

  Vector ones = Vector::Ones(4);
  Vector expected(4);
  expected << 2, 0, 0, 0;
  CHECK((dct(ones) - expected).cwiseAbs().maxCoeff() < 1e-12);

  // Unit impulse at n = 0: X[k] = a(k) cos(pi k / 8), frozen from the
  // summation oracle.
  Vector delta = Vector::Zero(4);
  delta[0] = 1;
  Vector impulse(4);
  impulse << 0.5, 0.65328148243818829, 0.5, 0.27059805007309851;
  CHECK((dct(delta) - impulse).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((oracle::dct_sum(delta) - impulse).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("idct of simple spectra") {
  Vector dc = Vector::Zero(4);
  dc[0] = 1;
  CHECK((idct(dc) - Vector::Constant(4, 0.5)).cwiseAbs().maxCoeff() < 1e-12);

  Vector bin2 = Vector::Zero(8);
  bin2[2] = 1;
  Vector expected(8);
  expected << 0.46193976625564337, 0.19134171618254489, -0.19134171618254489,
      -0.46193976625564337, -0.46193976625564337, -0.19134171618254489, 0.19134171618254489,
      0.46193976625564337;
  CHECK((idct(bin2) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((oracle::idct_sum(bin2) - expected).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(3);
  const Vector x = random_vector(128, rng);
  CHECK((idct(dct(x)) - x).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("dct_matrix") {
  const Matrix one = dct_matrix(1);
  REQUIRE(one.rows() == 1);
  CHECK(one(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  const Matrix c4 = dct_matrix(4);
  const Matrix gram = c4 * c4.transpose();
  CHECK((gram - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(5);
  const Vector x = random_vector(16, rng);
  CHECK((dct_matrix(16) * x - oracle::dct_sum(x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((dct_matrix(16) * x - dct(x)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(dct_matrix(0), std::invalid_argument);
}

TEST_CASE("batched transforms") {
  std::mt19937_64 rng(9);
  const Vector series = random_vector(32, rng);

  Tensor pair(2, 1, 32);
  pair.series(0, 0) = series;
  pair.series(1, 0) = series;
  const Tensor spectra = dct_batch(pair);
  CHECK(spectra.series(0, 0) == spectra.series(1, 0));

  const Tensor wrapped = Tensor::from_vector(series);
  CHECK(dct_batch(wrapped).series(0, 0) == dct(series));
  CHECK(idct_batch(wrapped).series(0, 0) == idct(series));

  Tensor x(4, 3, 32);
  x.data() = random_vector(x.size(), rng);
  CHECK((idct_batch(dct_batch(x)).data() - x.data()).cwiseAbs().maxCoeff() < 1e-9);

  CHECK_THROWS_AS(dct_batch(Tensor(1, 1, 0)), std::invalid_argument);
}

TEST_CASE("transform errors") {
  CHECK_THROWS_AS(dct(Vector()), std::invalid_argument);
  CHECK_THROWS_AS(idct(Vector()), std::invalid_argument);
  Vector bad = Vector::Zero(4);
  bad[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(dct(bad), std::invalid_argument);
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(idct(bad), std::invalid_argument);
}

TEST_CASE("transform properties over random series") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<Index> length(1, 256);
  std::uniform_real_distribution<double> coef(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = length(rng);
    const Vector x = random_vector(n, rng, 1 + trial % 7);
    const Vector y = random_vector(n, rng);
    const Vector sx = dct(x);

    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    CHECK((idct(sx) - x).cwiseAbs().maxCoeff() < 1e-9 * scale);
    CHECK(std::abs(sx.squaredNorm() - x.squaredNorm()) <= 1e-9 * x.squaredNorm());

    const double a = coef(rng), b = coef(rng);
    CHECK((dct(Vector(a * x + b * y)) - (a * sx + b * dct(y))).cwiseAbs().maxCoeff() < 1e-9 * scale);

    if (n <= 64) CHECK((oracle::dct_sum(x) - sx).cwiseAbs().maxCoeff() < 1e-10 * scale);
  }
}

TEST_CASE("a pure cosine concentrates near bin 2f") {
  for (Index n : {16, 50, 100, 128}) {
    for (Index f = 1; 2 * f < n; ++f) {
      Vector x(n);
      for (Index i = 0; i < n; ++i) x[i] = std::cos(2 * std::numbers::pi * double(f * i) / double(n));
      Index peak = 0;
      dct(x).cwiseAbs().maxCoeff(&peak);
      CAPTURE(n);
      CAPTURE(f);
      CHECK(std::abs(peak - 2 * f) <= 1);
    }
  }
}

TEST_CASE("lengths beyond the cached basis use direct summation") {
  std::mt19937_64 rng(23);
  const Vector x = random_vector(kMaxCachedDctLength + 3, rng);
  const Vector sx = dct(x);
  CHECK(std::abs(sx.squaredNorm() - x.squaredNorm()) <= 1e-9 * x.squaredNorm());
  CHECK((idct(sx) - x).cwiseAbs().maxCoeff() < 1e-9 * x.cwiseAbs().maxCoeff());
}
