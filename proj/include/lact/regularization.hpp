#pragma once

#include <cstddef>

#include "lact/matrix.hpp"
#include "lact/neural.hpp"
#include "lact/ops.hpp"

namespace lact {

struct RegWeights {
  double lambda_tv = 0.0;
  double lambda_psr = 0.0;
};

/// Anisotropic TV with forward differences and no wraparound, divided by the
/// pixel count: (sum |dx| + sum |dy|) / N.
Tensor total_variation(const Tensor& image);
double total_variation(const Image& image);

/// Mean absolute difference between the p x p patches of `image` (stride p,
/// partial trailing patches dropped) and their autoencoded versions.
/// The model should be frozen (see PatchAutoencoder::frozen) so that only the
/// image receives gradients.
Tensor psr_penalty(const Tensor& image, const PatchAutoencoder& model);
double psr_penalty(const Image& image, const PatchAutoencoder& model);

/// lambda_tv * TV + lambda_psr * PSR. Zero weights skip their term entirely.
/// Throws ValueError when lambda_psr > 0 and no model is given.
Tensor combined_regularizer(const Tensor& image, const RegWeights& w, const PatchAutoencoder* model);
double combined_regularizer(const Image& image, const RegWeights& w, const PatchAutoencoder* model);

}  // namespace lact
