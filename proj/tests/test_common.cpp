#include <doctest.h>

#include <cmath>
#include <set>

#include "hgt/common.hpp"

using namespace hgt;

TEST_SUITE("common") {

TEST_CASE("derive_seed is deterministic and separates streams") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t parent = 0; parent < 20; ++parent)
    for (std::uint64_t stream = 0; stream < 20; ++stream) seen.insert(derive_seed(parent, stream));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("uniform01 stays in [0, 1)") {
  Rng rng(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = uniform01(rng);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("sample_categorical honours zero and unit masses") {
  Rng rng(5);
  const std::vector<double> point{0.0, 1.0, 0.0};
  const std::vector<double> mixed{0.25, 0.0, 0.75};
  int third = 0;
  for (int i = 0; i < 20000; ++i) {
    CHECK(sample_categorical(point, rng) == 1);
    const int x = sample_categorical(mixed, rng);
    CHECK(x != 1);
    third += x == 2;
  }
  CHECK(third / 20000.0 == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("log_add") {
  CHECK(log_add(std::log(2.0), std::log(3.0)) == doctest::Approx(std::log(5.0)));
  CHECK(log_add(kNegInf, 1.5) == 1.5);
  CHECK(log_add(1.5, kNegInf) == 1.5);
  CHECK(std::isinf(log_add(kNegInf, kNegInf)));
  CHECK(log_add(-1000.0, -1000.0) == doctest::Approx(-1000.0 + std::log(2.0)));
}

TEST_CASE("Matrix row round trip and validation") {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(m.to_rows() == std::vector<std::vector<double>>{{1, 2, 3}, {4, 5, 6}});
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), ValidationError);
}

}
