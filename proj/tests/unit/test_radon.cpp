#include <cmath>
#include <numeric>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/metrics.hpp"
#include "lact/ops.hpp"
#include "lact/phantom.hpp"
#include "lact/radon.hpp"
#include "lact/reconstruct.hpp"
#include "support.hpp"

using namespace lact;

namespace {

Image random_image(std::size_t n, Rng& rng) {
  Image img(n, n);
  img.values = testing::random_vector(n * n, rng);
  return img;
}

double row_sum(const Matrix& m, std::size_t r) {
  double s = 0;
  for (std::size_t c = 0; c < m.cols; ++c) s += m(r, c);
  return s;
}

Image centered_disk(std::size_t n, double r) {
  Image img(n, n);
  const double c = (n - 1) / 2.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(x - c, y - c) <= r) img(y, x) = 1.0;
  return img;
}

}  // namespace

TEST_CASE("geometry validation") {
  CHECK(angle_list(0, 0.5, 61).back() == doctest::Approx(30.0));
  CHECK_THROWS_AS(Geometry::parallel(1, {0.0}).validate(), ValueError);
  CHECK_THROWS_AS(Geometry::parallel(8, {}).validate(), ValueError);
  CHECK_THROWS_AS(Geometry::parallel(8, {0.0, 0.0}).validate(), ValueError);
  CHECK_THROWS_AS(Geometry::parallel(8, {0.0, 180.0}).validate(), ValueError);
  CHECK_NOTHROW(Geometry::parallel(8, {0.0, 179.5}).validate());
  CHECK_THROWS_AS(radon_forward(Image(4, 5), Geometry::parallel(4, {0.0})), ShapeError);
}

TEST_CASE("center pixel projects to the central bin at axis angles") {
  const std::size_t n = 9;
  Image img(n, n);
  img(4, 4) = 1.0;
  auto s = radon_forward(img, Geometry::parallel(n, {0.0, 90.0}));
  for (std::size_t a = 0; a < 2; ++a) {
    CHECK(row_sum(s.values, a) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s.values(a, 4) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("per-angle mass is conserved for objects inside the circle") {
  const std::size_t n = 64;
  Image img = centered_disk(n, 20.0);
  // smooth the edge so bilinear sampling integrates accurately
  Image smooth(n, n);
  for (std::size_t y = 1; y + 1 < n; ++y)
    for (std::size_t x = 1; x + 1 < n; ++x) {
      double acc = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) acc += img(y + dy, x + dx);
      smooth(y, x) = acc / 9;
    }
  const double total = std::accumulate(smooth.values.begin(), smooth.values.end(), 0.0);
  auto s = radon_forward(smooth, Geometry::parallel(n, angle_list(0, 7.5, 24)));
  for (std::size_t a = 0; a < 24; ++a) CHECK(std::abs(row_sum(s.values, a) - total) <= 1e-3 * total);
}

TEST_CASE("disk chord length at the central bin") {
  const std::size_t n = 128;
  const double r = 30.0;
  auto s = radon_forward(centered_disk(n, r), Geometry::parallel(n, {0.0, 33.0, 71.0}));
  // even n: the center falls between bins 63 and 64
  for (std::size_t a = 0; a < 3; ++a) {
    const double central = 0.5 * (s.values(a, 63) + s.values(a, 64));
    CHECK(std::abs(central - 2 * std::sqrt(r * r - 0.25)) <= 0.02 * 2 * r);
  }
}

TEST_CASE("adjoint is the transpose") {
  Rng rng(11);
  const std::size_t n = 32;
  auto geom = Geometry::parallel(n, angle_list(10, 3.0, 12), 40);
  for (int t = 0; t < 10; ++t) {
    Image x = random_image(n, rng);
    Sinogram y{Matrix(12, 40), geom};
    y.values.values = testing::random_vector(12 * 40, rng);
    auto fx = radon_forward(x, geom);
    auto aty = radon_adjoint(y, geom);
    const double lhs = dot(fx.values.values, y.values.values), rhs = dot(x.values, aty.values);
    const double scale = std::sqrt(dot(fx.values.values, fx.values.values) * dot(y.values.values, y.values.values));
    CHECK(std::abs(lhs - rhs) / scale <= 1e-12);
  }
  Sinogram zero{Matrix(12, 40), geom};
  for (double v : radon_adjoint(zero, geom).values) CHECK(v == 0.0);
}

TEST_CASE("one-hot sinogram back-projects the ray footprint") {
  const std::size_t n = 16;
  auto geom = Geometry::parallel(n, {0.0, 37.0});
  Sinogram y{Matrix(2, n), geom};
  y.values(1, 5) = 1.0;
  Image fp = radon_adjoint(y, geom);
  // entry (i) of the footprint equals the projection of pixel i into that ray
  Image e(n, n);
  for (std::size_t i = 0; i < n * n; i += 17) {
    e.values.assign(n * n, 0.0);
    e.values[i] = 1.0;
    CHECK(radon_forward(e, geom).values(1, 5) == doctest::Approx(fp.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward is linear") {
  Rng rng(12);
  const std::size_t n = 24;
  auto geom = Geometry::parallel(n, angle_list(0, 15, 12));
  Image a = random_image(n, rng), b = random_image(n, rng), mix(n, n);
  for (std::size_t i = 0; i < n * n; ++i) mix.values[i] = 2.5 * a.values[i] - 0.75 * b.values[i];
  auto sa = radon_forward(a, geom), sb = radon_forward(b, geom), sm = radon_forward(mix, geom);
  for (std::size_t i = 0; i < sm.values.size(); ++i)
    CHECK(sm.values.values[i] ==
          doctest::Approx(2.5 * sa.values.values[i] - 0.75 * sb.values.values[i]).epsilon(1e-9));
}

TEST_CASE("operator on the tape routes gradients through the adjoint") {
  Rng rng(13);
  const std::size_t n = 12;
  auto geom = Geometry::parallel(n, angle_list(0, 10, 6));
  auto op = radon_operator(geom);
  auto x = testing::random_tensor({n, n}, rng);
  auto w = testing::random_tensor({6, n}, rng, false);
  CHECK(testing::gradient_check(x, [&](const Tensor& t) { return sum(mul(op(t), w)); }) < 1e-5);
}

TEST_CASE("fbp of zero is zero and full view beats limited view") {
  const std::size_t n = 64;
  auto full = Geometry::parallel(n, angle_list(0, 1.0, 180));
  Sinogram zero{Matrix(180, n), full};
  for (double v : fbp_reconstruct(zero, full, 0.0).values) CHECK(v == 0.0);

  PhantomSpec ps;
  ps.side = n;
  ps.seed = 3;
  Image truth = generate_phantom(ps);
  auto limited = Geometry::parallel(n, angle_list(0, 0.5, 61));
  const double m_full = mcc(binarize(fbp_reconstruct(radon_forward(truth, full), full, 0.0)), truth);
  const double m_lim = mcc(binarize(fbp_reconstruct(radon_forward(truth, limited), limited, 0.0)), truth);
  CHECK(m_full > 0.9);
  CHECK(m_lim < m_full);
}

TEST_CASE("fbp recovers unit density") {
  const std::size_t n = 64;
  Image disk = centered_disk(n, 24.0);
  for (std::size_t bins : {64u, 96u, 128u}) {
    auto geom = Geometry::parallel(n, angle_list(0, 1.0, 180), bins);
    Image rec = fbp_reconstruct(radon_forward(disk, geom), geom, 0.0);
    double inner = 0, outer = 0;
    std::size_t ni = 0, no = 0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double r = std::hypot(x - 31.5, y - 31.5);
        if (r < 18) inner += rec(y, x), ++ni;
        if (r > 28) outer += rec(y, x), ++no;
      }
    CAPTURE(bins);
    CHECK(inner / ni == doctest::Approx(1.0).epsilon(0.12));
    CHECK(outer / no < 0.05);
  }
}
