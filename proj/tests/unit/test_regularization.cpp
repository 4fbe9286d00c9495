#include <cmath>

#include "doctest.h"
#include "lact/error.hpp"
#include "lact/phantom.hpp"
#include "lact/regularization.hpp"
#include "support.hpp"

using namespace lact;

TEST_CASE("total variation unit values") {
  CHECK(total_variation(testing::matrix(2, 2, {0, 1, 0, 1})) == 0.5);
  CHECK(total_variation(Image(5, 5, 0.7)) == 0.0);
  CHECK(total_variation(Tensor::from({2, 2}, {0, 1, 0, 1})).item() == 0.5);
}

TEST_CASE("TV is homogeneous and matches the plain evaluation") {
  Rng rng(1);
  Image img(9, 7);
  img.values = testing::random_vector(63, rng);
  Image scaled = img;
  for (auto& v : scaled.values) v *= 2.5;
  CHECK(total_variation(scaled) == doctest::Approx(2.5 * total_variation(img)).epsilon(1e-12));
  CHECK(total_variation(Tensor::from_matrix(img)).item() == doctest::Approx(total_variation(img)).epsilon(1e-12));
}

TEST_CASE("TV gradient away from ties") {
  Rng rng(2);
  auto x = testing::random_tensor({6, 5}, rng);
  CHECK(testing::gradient_check(x, [](const Tensor& t) { return total_variation(t); }) < 1e-3);
}

TEST_CASE("combined weights") {
  Image img = testing::matrix(2, 2, {0, 1, 0, 1});
  CHECK(combined_regularizer(img, {0.0, 0.0}, nullptr) == 0.0);
  CHECK(combined_regularizer(img, {0.01, 0.0}, nullptr) == doctest::Approx(0.005));
  CHECK_THROWS_AS(combined_regularizer(img, {0.0, 0.1}, nullptr), ValueError);
  CHECK_THROWS_AS(combined_regularizer(img, {-1.0, 0.0}, nullptr), ValueError);
}

TEST_CASE("PSR penalty") {
  PatchAutoencoder ae(8, 4);
  Rng rng(3);
  Image img(16, 20);
  img.values = testing::random_vector(320, rng, 0, 1);
  const double psr = psr_penalty(img, ae);
  CHECK(psr >= 0.0);

  // equals the model's own error on the non-overlapping tiling (trailing 4 columns dropped)
  std::vector<double> tiles;
  for (std::size_t by = 0; by < 2; ++by)
    for (std::size_t bx = 0; bx < 2; ++bx)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) tiles.push_back(img(by * 8 + y, bx * 8 + x));
  CHECK(psr == doctest::Approx(reconstruction_mae(ae, tiles)).epsilon(1e-12));

  const double p1 = combined_regularizer(img, {0.0, 0.1}, &ae);
  const double p2 = combined_regularizer(img, {0.0, 0.2}, &ae);
  CHECK(p2 == doctest::Approx(2 * p1).epsilon(1e-14));
  CHECK_THROWS_AS(psr_penalty(Image(4, 4), ae), ValueError);

  auto frozen = ae.frozen();
  auto x = Tensor::from_matrix(img, true);
  CHECK(testing::gradient_check(x, [&](const Tensor& t) { return psr_penalty(t, frozen); }, {0, 17, 150, 319}) <
        1e-3);
}

TEST_CASE("trained prior prefers phantoms over noise") {
  std::vector<Image> train;
  for (std::uint64_t s = 0; s < 8; ++s) {
    PhantomSpec ps;
    ps.side = 64;
    ps.seed = s;
    train.push_back(generate_phantom(ps));
  }
  AutoencoderTraining opt;
  opt.epochs = 25;
  auto ae = train_autoencoder(train, 20, 1, opt).model;
  PhantomSpec ps;
  ps.side = 64;
  ps.seed = 99;
  Image clean = generate_phantom(ps);
  Rng rng(5);
  Image noise(64, 64);
  noise.values = testing::random_vector(64 * 64, rng, 0, 1);
  CHECK(psr_penalty(noise, ae) > psr_penalty(clean, ae));
}
