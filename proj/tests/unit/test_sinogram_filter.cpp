#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/ops.hpp"
#include "lact/sinogram_filter.hpp"
#include "support.hpp"

using namespace lact;
using std::numbers::pi;

namespace {

// Plain O(D^2) DFT filtering as the reference.
std::vector<double> dft_filter(const std::vector<double>& x, const std::vector<double>& r) {
  const std::size_t d = x.size();
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double re = 0, im = 0;
    for (std::size_t j = 0; j < d; ++j) {
      re += x[j] * std::cos(2 * pi * k * j / d);
      im -= x[j] * std::sin(2 * pi * k * j / d);
    }
    re *= r[k];
    im *= r[k];
    for (std::size_t j = 0; j < d; ++j) out[j] += (re * std::cos(2 * pi * k * j / d) - im * std::sin(2 * pi * k * j / d)) / d;
  }
  return out;
}

}  // namespace

TEST_CASE("response unit values") {
  for (double a : {0.0, 0.5, 3.0, 8.0}) CHECK(filter_response_at(a, 0.0) == 0.0);
  const double expected = 0.4 * std::pow(2 / pi, 2);
  CHECK(filter_response_at(5.0, pi / 5) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(filter_response_at(5.0, pi / 5) - 0.16211) < 1e-4);
  for (double w : {-3.0, -0.2, 0.1, 1.7, pi}) CHECK(filter_response_at(0.0, w) == std::abs(w));
  // small alpha approaches the ramp
  CHECK(filter_response_at(1e-4, 1.3) == doctest::Approx(1.3).epsilon(1e-6));
}

TEST_CASE("bin frequencies wrap to [-pi, pi)") {
  CHECK(bin_frequency(0, 8) == 0.0);
  CHECK(bin_frequency(1, 8) == doctest::Approx(pi / 4));
  CHECK(bin_frequency(4, 8) == doctest::Approx(-pi));
  CHECK(bin_frequency(7, 8) == doctest::Approx(-pi / 4));
  auto r = filter_response({0.0, 8});
  for (std::size_t k = 0; k < 8; ++k) CHECK(r[k] == std::abs(bin_frequency(k, 8)));
}

TEST_CASE("filtering matches a direct DFT") {
  Rng rng(1);
  for (std::size_t d : {7u, 16u, 33u}) {
    auto x = testing::random_vector(d, rng);
    auto resp = filter_response({4.0, d});
    std::vector<double> out(d);
    RowFilter(resp).apply(x, out);
    auto ref = dft_filter(x, resp);
    for (std::size_t i = 0; i < d; ++i) CHECK(out[i] == doctest::Approx(ref[i]).epsilon(1e-9));
  }
}

TEST_CASE("constant row is annihilated and a unit multiplier is identity") {
  std::vector<double> row(12, 3.5), out(12);
  RowFilter(FilterSpec{2.0, 12}).apply(row, out);
  for (double v : out) CHECK(std::abs(v) < 1e-12);
  Rng rng(2);
  auto x = testing::random_vector(12, rng);
  RowFilter(std::vector<double>(12, 1.0)).apply(x, out);
  for (std::size_t i = 0; i < 12; ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("response must be even") {
  std::vector<double> r(6, 0.0);
  r[1] = 1.0;
  CHECK_THROWS_AS(RowFilter{r}, ValueError);
}

TEST_CASE("filter is self-adjoint and linear") {
  Rng rng(3);
  auto op = filter_operator(5, {6.0, 20});
  for (int t = 0; t < 10; ++t) {
    auto x = testing::random_vector(100, rng), y = testing::random_vector(100, rng);
    auto fx = op.apply(x), fy = op.apply(y);
    CHECK(testing::rel_err(dot(fx, y), dot(x, fy)) <= 1e-9);
  }
  auto x = testing::random_vector(100, rng), y = testing::random_vector(100, rng);
  std::vector<double> mix(100);
  for (int i = 0; i < 100; ++i) mix[i] = 2 * x[i] + 3 * y[i];
  auto fx = op.apply(x), fy = op.apply(y), fm = op.apply(mix);
  for (int i = 0; i < 100; ++i) CHECK(fm[i] == doctest::Approx(2 * fx[i] + 3 * fy[i]).epsilon(1e-10));
}

TEST_CASE("apply_filter works row by row") {
  Rng rng(4);
  Sinogram s{Matrix(3, 10), Geometry::parallel(10, {0.0, 1.0, 2.0})};
  s.values.values = testing::random_vector(30, rng);
  auto f = apply_filter(s, {1.5, 10});
  std::vector<double> row(s.values.values.begin() + 10, s.values.values.begin() + 20), out(10);
  RowFilter(FilterSpec{1.5, 10}).apply(row, out);
  for (int i = 0; i < 10; ++i) CHECK(f.values(1, i) == doctest::Approx(out[i]));
  CHECK_THROWS_AS(apply_filter(s, {1.5, 11}), ShapeError);
}
