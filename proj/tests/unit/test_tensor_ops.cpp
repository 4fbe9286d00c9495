#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/ops.hpp"
#include "support.hpp"

using namespace lact;
using testing::gradient_check;
using testing::random_tensor;

TEST_CASE("elementwise values") {
  auto a = Tensor::from({2}, {-1.0, 2.0});
  CHECK(abs(a).data()[0] == 1.0);
  CHECK(abs(a).data()[1] == 2.0);
  CHECK(sigmoid(Tensor::from({1}, {0.0})).item() == 0.5);
  CHECK(sum(Tensor::from({3}, {1, 2, 3})).item() == 6.0);
  CHECK(mean(Tensor::from({3}, {1, 2, 3})).item() == 2.0);
  CHECK(relu(a).data()[0] == 0.0);
  // tanh-form GELU at 1: 0.5 * (1 + tanh(sqrt(2/pi) * 1.044715))
  const double g1 = 0.5 * (1 + std::tanh(std::sqrt(2 / std::numbers::pi) * (1 + 0.044715)));
  CHECK(gelu(Tensor::scalar(1.0)).item() == doctest::Approx(g1).epsilon(1e-15));
}

TEST_CASE("d/dx x*x at 3 is 6") {
  auto x = Tensor::scalar(3.0, true);
  Tape tape;
  auto y = mul(x, x);
  tape.backward(y);
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("mean gradient is 1/N") {
  auto x = Tensor::from({4}, {1, 2, 3, 4}, true);
  Tape tape;
  tape.backward(mean(x));
  for (double g : x.grad()) CHECK(g == 0.25);
}

TEST_CASE("gradients accumulate over a shared subexpression") {
  // y = x*x + x*x*x uses x in three places: dy/dx = 2x + 3x^2
  auto x = Tensor::scalar(2.0, true);
  Tape tape;
  auto sq = mul(x, x);
  auto y = add(sq, mul(sq, x));
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0 + 12.0));
}

TEST_CASE("backward is single-use and needs a scalar") {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  auto y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  auto s = sum(y);
  tape.backward(s);
  CHECK_THROWS(tape.backward(s));
}

TEST_CASE("no-grad guard records nothing") {
  auto x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  {
    NoGradGuard g;
    auto y = sum(mul(x, x));
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.requires_grad());
  }
  auto z = sum(x);
  CHECK(tape.size() == 1);
}

TEST_CASE("reductions reject empty and non-finite input") {
  CHECK_THROWS_AS(sum(Tensor::zeros({0})), ShapeError);
  CHECK_THROWS_AS(mean(Tensor::from({2}, {1.0, std::nan("")})), NumericError);
}

TEST_CASE("shape mismatch is reported") {
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("binary cross entropy at one half is ln 2") {
  auto p = Tensor::full({5}, 0.5);
  CHECK(binary_cross_entropy(p, p).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // saturated prediction stays finite
  auto bce = binary_cross_entropy(Tensor::from({1}, {0.0}), Tensor::from({1}, {1.0})).item();
  CHECK(bce == doctest::Approx(100.0));
}

TEST_CASE("elementwise gradients match finite differences") {
  Rng rng(3);
  auto x = random_tensor({3, 4}, rng);
  auto y = random_tensor({3, 4}, rng);
  CHECK(gradient_check(x, [](const Tensor& t) { return sum(gelu(t)); }) < 1e-6);
  CHECK(gradient_check(x, [](const Tensor& t) { return mean(sigmoid(scale(t, 3.0))); }) < 1e-6);
  CHECK(gradient_check(x, [&](const Tensor& t) { return sum(abs(sub(t, y))); }) < 1e-6);
  CHECK(gradient_check(x, [&](const Tensor& t) { return sum(mul(add_scalar(t, 0.5), y)); }) < 1e-6);
  auto target = Tensor::from({3, 4}, testing::random_vector(12, rng, 0, 1));
  CHECK(gradient_check(x, [&](const Tensor& t) { return binary_cross_entropy(sigmoid(t), target); }) < 1e-6);
}

TEST_CASE("linear layer gradients") {
  Rng rng(4);
  auto x = random_tensor({2, 5}, rng);
  auto w = random_tensor({3, 5}, rng);
  auto b = random_tensor({3}, rng);
  auto out = linear(x, w, b);
  CHECK(out.shape() == Shape{2, 3});
  double expect = b.data()[1];
  for (int k = 0; k < 5; ++k) expect += x.data()[5 + k] * w.data()[5 + k];
  CHECK(out.data()[1 * 3 + 1] == doctest::Approx(expect));
  auto f = [&](const Tensor&) { return sum(gelu(linear(x, w, b))); };
  CHECK(gradient_check(x, f) < 1e-6);
  CHECK(gradient_check(w, f) < 1e-6);
  CHECK(gradient_check(b, f) < 1e-6);
}

TEST_CASE("channel layer norm normalizes across channels") {
  Rng rng(5);
  auto x = random_tensor({3, 2, 2}, rng);
  auto g = Tensor::full({3}, 1.0, true);
  auto b = Tensor::zeros({3}, true);
  auto y = channel_layer_norm(x, g, b);
  for (std::size_t pix = 0; pix < 4; ++pix) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 3; ++c) m += y.data()[c * 4 + pix] / 3;
    for (std::size_t c = 0; c < 3; ++c) v += std::pow(y.data()[c * 4 + pix] - m, 2) / 3;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  }
  auto w = random_tensor({3, 2, 2}, rng, false);
  auto f = [&](const Tensor&) { return sum(mul(channel_layer_norm(x, g, b), w)); };
  CHECK(gradient_check(x, f) < 1e-5);
  CHECK(gradient_check(g, f) < 1e-6);
  CHECK(gradient_check(b, f) < 1e-6);
}

TEST_CASE("reshape keeps data and routes gradients") {
  Rng rng(6);
  auto x = random_tensor({2, 3}, rng);
  auto r = reshape(x, {3, 2});
  CHECK(r.shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
  CHECK(gradient_check(x, [](const Tensor& t) { return sum(gelu(reshape(t, {6}))); }) < 1e-6);
}

TEST_CASE("extract patches tiles with stride") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i;
  auto img = Tensor::from({4, 4}, v, true);
  auto p = extract_patches(img, 2, 2);
  CHECK(p.shape() == Shape{4, 1, 2, 2});
  CHECK(p.data()[4 * 1 + 0] == 2.0);   // second patch starts at column 2
  CHECK(p.data()[4 * 2 + 0] == 8.0);   // third at row 2
  Rng rng(7);
  auto w = random_tensor({9, 1, 2, 2}, rng, false);
  auto f = [&](const Tensor& t) { return sum(mul(extract_patches(t, 2, 1), w)); };
  CHECK(gradient_check(img, f) < 1e-6);
  // overlapping patches: interior pixel appears in 4 of them
  Tape tape;
  tape.backward(sum(extract_patches(img, 2, 1)));
  CHECK(img.grad()[5] == 4.0);
  CHECK(img.grad()[0] == 1.0);
}

TEST_CASE("shift bilinear") {
  auto img = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto id = shift_bilinear(img, Tensor::from({2}, {0, 0}));
  CHECK(testing::vec(id) == testing::vec(img));
  auto one = shift_bilinear(img, Tensor::from({2}, {1, 0}));
  CHECK(one.to_matrix().values == std::vector<double>{0, 1, 2, 0, 4, 5});
  auto half = shift_bilinear(img, Tensor::from({2}, {0.5, 0}));
  CHECK(half.data()[1] == doctest::Approx(1.5));
  CHECK(half.data()[5] == doctest::Approx(5.5));
  Rng rng(8);
  auto x = random_tensor({5, 5}, rng);
  auto off = Tensor::from({2}, {0.3, -0.7}, true);
  auto w = random_tensor({5, 5}, rng, false);
  auto f = [&](const Tensor&) { return sum(mul(shift_bilinear(x, off), w)); };
  CHECK(gradient_check(x, f) < 1e-6);
  CHECK(gradient_check(off, f) < 1e-5);
}

TEST_CASE("linear op forward and adjoint") {
  auto op = register_linear_op(
      {3}, {3}, [](std::span<const double> in, std::span<double> out) { for (int i = 0; i < 3; ++i) out[i] = 2 * in[i]; },
      [](std::span<const double> in, std::span<double> out) { for (int i = 0; i < 3; ++i) out[i] = 2 * in[i]; });
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  Tape tape;
  tape.backward(sum(op(x)));
  for (double g : x.grad()) CHECK(g == 2.0);

  // random dense matrix with its transpose
  Rng rng(9);
  const std::size_t m = 4, n = 6;
  auto M = testing::random_vector(m * n, rng);
  auto dense = register_linear_op(
      {n}, {m},
      [&](std::span<const double> in, std::span<double> out) {
        for (std::size_t i = 0; i < m; ++i) {
          out[i] = 0;
          for (std::size_t j = 0; j < n; ++j) out[i] += M[i * n + j] * in[j];
        }
      },
      [&](std::span<const double> in, std::span<double> out) {
        for (std::size_t j = 0; j < n; ++j) {
          out[j] = 0;
          for (std::size_t i = 0; i < m; ++i) out[j] += M[i * n + j] * in[i];
        }
      });
  for (int t = 0; t < 10; ++t) {
    auto xv = testing::random_vector(n, rng);
    auto yv = testing::random_vector(m, rng);
    auto fx = dense.apply(xv);
    auto aty = dense.apply_adjoint(yv);
    const double lhs = dot(fx, yv), rhs = dot(xv, aty);
    CHECK(std::abs(lhs - rhs) / (std::sqrt(dot(fx, fx) * dot(yv, yv)) + 1e-12) <= 1e-12);
  }
  CHECK_THROWS_AS(dense(Tensor::zeros({5})), ShapeError);
}
