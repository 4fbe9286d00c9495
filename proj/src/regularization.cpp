#include "lact/regularization.hpp"

#include <cmath>

#include "lact/error.hpp"

namespace lact {

namespace {

// [H,W] -> horizontal differences (H x (W-1)) followed by vertical ones ((H-1) x W).
LinearOp forward_differences(std::size_t h, std::size_t w) {
  const std::size_t nx = h * (w - 1), ny = (h - 1) * w;
  auto fwd = [h, w, nx](std::span<const double> in, std::span<double> out) {
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c) out[r * (w - 1) + c] = in[r * w + c + 1] - in[r * w + c];
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c) out[nx + r * w + c] = in[(r + 1) * w + c] - in[r * w + c];
  };
  auto adj = [h, w, nx](std::span<const double> in, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c + 1 < w; ++c) {
        const double g = in[r * (w - 1) + c];
        out[r * w + c + 1] += g;
        out[r * w + c] -= g;
      }
    for (std::size_t r = 0; r + 1 < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double g = in[nx + r * w + c];
        out[(r + 1) * w + c] += g;
        out[r * w + c] -= g;
      }
  };
  return register_linear_op({h, w}, {nx + ny}, fwd, adj);
}

}  // namespace

Tensor total_variation(const Tensor& image) {
  if (image.rank() != 2 || image.dim(0) < 2 || image.dim(1) < 2)
    throw ShapeError("total_variation expects an image of at least 2x2, got " + to_string(image.shape()));
  const auto diff = forward_differences(image.dim(0), image.dim(1));
  return scale(sum(abs(diff(image))), 1.0 / static_cast<double>(image.numel()));
}

double total_variation(const Image& img) {
  if (img.rows < 2 || img.cols < 2) throw ShapeError("total_variation expects an image of at least 2x2");
  double acc = 0.0;
  for (std::size_t r = 0; r < img.rows; ++r)
    for (std::size_t c = 0; c < img.cols; ++c) {
      if (c + 1 < img.cols) acc += std::abs(img(r, c + 1) - img(r, c));
      if (r + 1 < img.rows) acc += std::abs(img(r + 1, c) - img(r, c));
    }
  return acc / static_cast<double>(img.size());
}

Tensor psr_penalty(const Tensor& image, const PatchAutoencoder& model) {
  const std::size_t p = model.patch_size();
  if (image.rank() != 2 || p > image.dim(0) || p > image.dim(1))
    throw ValueError("psr_penalty: patch size " + std::to_string(p) + " exceeds image " + to_string(image.shape()));
  const auto patches = extract_patches(image, p, p);
  return mean(abs(sub(patches, model.forward(patches))));
}

double psr_penalty(const Image& image, const PatchAutoencoder& model) {
  NoGradGuard guard;
  return psr_penalty(Tensor::from_matrix(image), model).item();
}

Tensor combined_regularizer(const Tensor& image, const RegWeights& w, const PatchAutoencoder* model) {
  if (w.lambda_tv < 0.0 || w.lambda_psr < 0.0) throw ValueError("regularization weights must be >= 0");
  if (w.lambda_psr > 0.0 && !model) throw ValueError("lambda_psr > 0 requires a patch autoencoder model");
  Tensor total = Tensor::scalar(0.0);
  if (w.lambda_tv > 0.0) total = add(total, scale(total_variation(image), w.lambda_tv));
  if (w.lambda_psr > 0.0) total = add(total, scale(psr_penalty(image, *model), w.lambda_psr));
  return total;
}

double combined_regularizer(const Image& image, const RegWeights& w, const PatchAutoencoder* model) {
  if (w.lambda_tv < 0.0 || w.lambda_psr < 0.0) throw ValueError("regularization weights must be >= 0");
  if (w.lambda_psr > 0.0 && !model) throw ValueError("lambda_psr > 0 requires a patch autoencoder model");
  double total = 0.0;
  if (w.lambda_tv > 0.0) total += w.lambda_tv * total_variation(image);
  if (w.lambda_psr > 0.0) total += w.lambda_psr * psr_penalty(image, *model);
  return total;
}

}  // namespace lact
