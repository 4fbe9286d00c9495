#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/ops.hpp"
#include "lact/radon.hpp"
#include "lact/rng.hpp"

namespace lact {

/// A trainable leaf tensor. `lr_scale` multiplies the optimizer learning rate.
struct Parameter {
  std::string name;
  Tensor value;
  double lr_scale = 1.0;
};

/// Uniform in +-sqrt(1/fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Parameters share storage with the caller's tensors.
class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamOptions options);

  /// Applies one update from the accumulated gradients, then clears them.
  /// Throws NumericError naming the parameter if a gradient is not finite.
  void step();

  std::size_t steps() const { return t_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Layer sizes of the Deep Image Prior network.
struct DipArchitecture {
  std::size_t channels = 16;
  std::size_t stem_kernel = 3;  // unpadded
  std::size_t sinogram_blocks = 4;
  std::size_t image_blocks = 2;
  std::size_t block_kernel = 7;
  std::size_t expansion = 4;
};

/// ConvNeXt-style network mapping a sinogram [A, D] to an image [n, n] in (0, 1).
///
/// stem conv (no padding) -> blocks at sinogram resolution -> bilinear resize to
/// n x n -> blocks at image resolution -> 1x1 conv -> sigmoid. Each block is a
/// depthwise conv, channel layer norm, 1x1 expansion, GELU, 1x1 projection and
/// a residual add.
class DipNetwork {
 public:
  DipNetwork(std::size_t n_angles, std::size_t detector_bins, std::size_t image_side, std::uint64_t seed,
             DipArchitecture arch = {});

  /// Sinogram scaled by 1 / max|S| as a [1, A, D] tensor.
  static Tensor prepare_input(const Matrix& sinogram);

  /// input is the prepared [1, A, D] tensor. Returns [n, n].
  Tensor forward(const Tensor& input) const;

  /// Convenience: prepare + forward without recording.
  Image forward(const Sinogram& sino) const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t image_side() const { return n_; }

 private:
  struct Block {
    Tensor dw_w, dw_b, ln_g, ln_b, pw1_w, pw1_b, pw2_w, pw2_b;
  };
  Block make_block(const std::string& prefix, Rng& rng);
  Tensor run_block(const Block& b, const Tensor& x) const;

  std::size_t a_, d_, n_;
  DipArchitecture arch_;
  Tensor stem_w_, stem_b_, head_w_, head_b_;
  std::vector<Block> sino_blocks_, image_blocks_;
  std::vector<Parameter> params_;
};

/// Symmetric convolutional autoencoder for p x p patches with a floor(p/4) latent.
///
/// Encoder: three 3x3 stride-2 convolutions (8, 16, 32 channels) and a dense
/// map to the latent. Decoder: dense map back, then three bilinear upsample +
/// 3x3 convolution stages, sigmoid head.
class PatchAutoencoder {
 public:
  PatchAutoencoder(std::size_t patch_size, std::uint64_t seed);

  /// patches [B, p, p] or [B, 1, p, p]; output has the same shape, values in (0, 1).
  Tensor forward(const Tensor& patches) const;
  Tensor encode(const Tensor& patches) const;  // [B, latent]
  Tensor decode(const Tensor& latent) const;   // [B, 1, p, p]

  std::size_t patch_size() const { return p_; }
  std::size_t latent_dim() const { return latent_; }

  /// Deep copy whose weights do not request gradients.
  PatchAutoencoder frozen() const;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  /// Binary model file ("LACTMDL1"). Identical models give identical bytes.
  void save(const std::string& path) const;
  static PatchAutoencoder load(const std::string& path);

 private:
  void build(Rng& rng);
  std::vector<Tensor*> weight_slots();

  std::size_t p_, latent_;
  std::size_t sizes_[4];  // spatial size after each encoder stage
  static constexpr std::size_t kChannels[3] = {8, 16, 32};
  Tensor enc_w_[3], enc_b_[3], dec_w_[3], dec_b_[3];
  Tensor to_latent_w_, to_latent_b_, from_latent_w_, from_latent_b_;
  std::vector<Parameter> params_;
};

struct AutoencoderTraining {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
};

struct TrainedAutoencoder {
  PatchAutoencoder model;
  std::vector<double> epoch_losses;  // mean BCE per epoch
  double final_loss = 0.0;
  std::size_t train_patches = 0;
  std::vector<double> heldout;  // held-out patches, flattened [H, p, p]
};

/// Overlapping p x p patches with the given stride from each image, flattened.
std::vector<double> collect_patches(const std::vector<Image>& images, std::size_t p, std::size_t stride);

/// floor(p / 5), at least 1.
std::size_t training_stride(std::size_t p);

/// Trains on overlapping patches (stride floor(p/5)) shuffled by `seed`; the last
/// `holdout_fraction` of the shuffled patches is kept aside for evaluation.
TrainedAutoencoder train_autoencoder(const std::vector<Image>& images, std::size_t p, std::uint64_t seed,
                                     const AutoencoderTraining& options = {});

/// Mean absolute reconstruction error over flattened [B, p, p] patches.
double reconstruction_mae(const PatchAutoencoder& model, const std::vector<double>& patches);

}  // namespace lact
