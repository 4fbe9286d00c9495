#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/neural.hpp"
#include "lact/radon.hpp"
#include "lact/regularization.hpp"

namespace lact {

struct ReconConfig {
  bool use_dip = false;
  double alpha = 0.0;  // sinogram filter strength
  double lambda_tv = 0.0;
  double lambda_psr = 0.0;
  std::size_t patch_size = 40;
  double lr = 1e-3;
  std::size_t n_iter = 400;
  std::uint64_t seed = 0;
  std::optional<Image> mask;
  std::string ae_model_path;
  double offset_lr_scale = 10.0;
  DipArchitecture dip;

  RegWeights weights() const { return {lambda_tv, lambda_psr}; }

  /// Throws ValueError describing the first invalid field.
  void validate() const;
};

/// Mask displacement in pixels; clamped to +-n/4.
struct MaskOffset {
  double dx = 0.0;
  double dy = 0.0;
};

MaskOffset clamp_offset(MaskOffset off, std::size_t side);

/// Bilinear translation of a mask, zero outside; offsets are clamped first.
Image shift_mask(const Image& mask, MaskOffset off);

struct ReconResult {
  Image image;                      // last iterate, masked, in [0, 1]
  std::vector<double> loss_trace;   // one value per iteration
  MaskOffset offset;                // final mask offset
};

/// Gradient-based reconstruction: each iteration forms the image (DIP output or
/// sigmoid of pixel logits), applies the shifted mask, filters its projection,
/// and takes an Adam step on mean |S_f - F(R(Y))| + lambda_tv TV + lambda_psr PSR.
///
/// `model` is required when lambda_psr > 0 unless cfg.ae_model_path names one.
ReconResult reconstruct(const Sinogram& sino, const ReconConfig& cfg, const PatchAutoencoder* model = nullptr);

struct LossTerms {
  double data = 0.0;
  double tv = 0.0;
  double psr = 0.0;
  double total = 0.0;
};

/// Loss of a given (already masked) image, computed without the tape.
LossTerms evaluate_loss(const Image& image, const Sinogram& sino, const ReconConfig& cfg,
                        const PatchAutoencoder* model = nullptr);

/// Otsu threshold over a 256-bin histogram on [0, 1]. Ties across a plateau of
/// equally good splits resolve to its middle. A constant image returns its value.
double otsu_threshold(const Image& img);

/// 1 where the value exceeds the Otsu threshold.
Image binarize(const Image& img);

/// FBP, optional support mask, scale to [0, 1], Otsu.
Image fbp_binary(const Sinogram& sino, double filter_alpha, const Image* mask = nullptr);

}  // namespace lact
