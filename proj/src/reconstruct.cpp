#include "lact/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "lact/error.hpp"
#include "lact/ops.hpp"
#include "lact/sinogram_filter.hpp"

namespace lact {

void ReconConfig::validate() const {
  if (n_iter < 1) throw ValueError("n_iter must be >= 1");
  if (!(lr > 0.0)) throw ValueError("lr must be > 0");
  if (alpha < 0.0) throw ValueError("alpha must be >= 0");
  if (lambda_tv < 0.0 || lambda_psr < 0.0) throw ValueError("regularization weights must be >= 0");
  if (lambda_psr > 0.0 && patch_size < 4) throw ValueError("patch size must be >= 4 when lambda_psr > 0");
  if (!(offset_lr_scale > 0.0)) throw ValueError("offset lr scale must be > 0");
}

MaskOffset clamp_offset(MaskOffset off, std::size_t side) {
  const double lim = static_cast<double>(side) / 4.0;
  return {std::clamp(off.dx, -lim, lim), std::clamp(off.dy, -lim, lim)};
}

Image shift_mask(const Image& mask, MaskOffset off) {
  off = clamp_offset(off, mask.rows);
  NoGradGuard guard;
  return shift_bilinear(Tensor::from_matrix(mask), Tensor::from({2}, {off.dx, off.dy})).to_matrix();
}

namespace {

std::unique_ptr<PatchAutoencoder> resolve_model(const ReconConfig& cfg, const PatchAutoencoder* model) {
  if (!(cfg.lambda_psr > 0.0)) return nullptr;
  std::unique_ptr<PatchAutoencoder> frozen;
  if (model) frozen = std::make_unique<PatchAutoencoder>(model->frozen());
  else if (!cfg.ae_model_path.empty()) frozen = std::make_unique<PatchAutoencoder>(PatchAutoencoder::load(cfg.ae_model_path).frozen());
  else throw ValueError("lambda_psr > 0 requires an autoencoder model");
  if (frozen->patch_size() != cfg.patch_size)
    throw ValueError("autoencoder patch size " + std::to_string(frozen->patch_size()) + " does not match configured " +
                     std::to_string(cfg.patch_size));
  return frozen;
}

void check_inputs(const Sinogram& sino, const ReconConfig& cfg) {
  cfg.validate();
  sino.geometry.validate();
  const auto& g = sino.geometry;
  if (sino.values.rows != g.n_angles() || sino.values.cols != g.detector_bins)
    throw ShapeError("sinogram values do not match its geometry");
  if (cfg.mask && (cfg.mask->rows != g.image_side || cfg.mask->cols != g.image_side))
    throw ShapeError("mask must be " + std::to_string(g.image_side) + "x" + std::to_string(g.image_side));
  if (cfg.lambda_psr > 0.0 && cfg.patch_size > g.image_side)
    throw ValueError("patch size exceeds image side");
}

}  // namespace

ReconResult reconstruct(const Sinogram& sino, const ReconConfig& cfg, const PatchAutoencoder* model) {
  check_inputs(sino, cfg);
  const auto& g = sino.geometry;
  const std::size_t n = g.image_side;
  const auto ae = resolve_model(cfg, model);

  const auto project = radon_operator(g);
  const auto filter = filter_operator(g.n_angles(), FilterSpec{cfg.alpha, g.detector_bins});
  const auto target = Tensor::from({g.n_angles(), g.detector_bins}, filter.apply(sino.values.values));

  std::vector<Parameter> params;
  std::optional<DipNetwork> net;
  Tensor logits, dip_input;
  if (cfg.use_dip) {
    net.emplace(g.n_angles(), g.detector_bins, n, cfg.seed, cfg.dip);
    params = net->parameters();
    dip_input = DipNetwork::prepare_input(sino.values);
  } else {
    logits = Tensor::zeros({n, n}, true);
    params.push_back({"logits", logits});
  }
  Tensor offset, mask;
  if (cfg.mask) {
    mask = Tensor::from_matrix(*cfg.mask);
    offset = Tensor::zeros({2}, true);
    params.push_back({"mask_offset", offset, cfg.offset_lr_scale});
  }
  Adam adam(params, AdamOptions{cfg.lr});

  ReconResult result;
  result.loss_trace.reserve(cfg.n_iter);
  for (std::size_t it = 0; it < cfg.n_iter; ++it) {
    Tape tape;
    Tensor image = cfg.use_dip ? net->forward(dip_input) : sigmoid(logits);
    if (cfg.mask) image = mul(image, shift_bilinear(mask, offset));
    const auto residual = sub(filter(project(image)), target);
    auto loss = mean(abs(residual));
    if (cfg.lambda_tv > 0.0 || cfg.lambda_psr > 0.0)
      loss = add(loss, combined_regularizer(image, cfg.weights(), ae.get()));
    const double value = loss.item();
    if (!std::isfinite(value)) throw NumericError("loss became non-finite at iteration " + std::to_string(it));
    result.loss_trace.push_back(value);
    if (it + 1 == cfg.n_iter) {
      result.image = image.to_matrix();
      if (cfg.mask) result.offset = {offset.data()[0], offset.data()[1]};
    }
    tape.backward(loss);
    adam.step();
    if (cfg.mask) {
      auto d = offset.mutable_data();
      const auto c = clamp_offset({d[0], d[1]}, n);
      d[0] = c.dx;
      d[1] = c.dy;
    }
  }
  return result;
}

LossTerms evaluate_loss(const Image& image, const Sinogram& sino, const ReconConfig& cfg, const PatchAutoencoder* model) {
  check_inputs(sino, cfg);
  const auto& g = sino.geometry;
  const auto ae = resolve_model(cfg, model);
  const FilterSpec spec{cfg.alpha, g.detector_bins};
  const auto target = apply_filter(sino, spec);
  const auto recon = apply_filter(radon_forward(image, g), spec);
  LossTerms t;
  for (std::size_t i = 0; i < recon.values.size(); ++i) t.data += std::abs(recon.values.values[i] - target.values.values[i]);
  t.data /= static_cast<double>(recon.values.size());
  if (cfg.lambda_tv > 0.0) t.tv = total_variation(image);
  if (cfg.lambda_psr > 0.0) t.psr = psr_penalty(image, *ae);
  t.total = t.data + cfg.lambda_tv * t.tv + cfg.lambda_psr * t.psr;
  return t;
}

double otsu_threshold(const Image& img) {
  if (img.size() == 0) throw ValueError("otsu_threshold of an empty image");
  const auto [lo, hi] = std::minmax_element(img.values.begin(), img.values.end());
  if (*lo == *hi) return *lo;
  constexpr std::size_t kBins = 256;
  std::vector<double> hist(kBins, 0.0);
  for (double v : img.values) {
    const double c = std::clamp(v, 0.0, 1.0);
    hist[std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(c * kBins))] += 1.0;
  }
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (std::size_t k = 0; k < kBins; ++k) sum_all += static_cast<double>(k) * hist[k];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  std::size_t first = 0, last = 0;
  for (std::size_t k = 0; k + 1 < kBins; ++k) {
    w0 += hist[k];
    sum0 += static_cast<double>(k) * hist[k];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    // Relative tolerance so that plateaus of identical splits are recognized.
    if (between > best * (1.0 + 1e-12)) {
      best = between;
      first = last = k;
    } else if (std::abs(between - best) <= 1e-12 * best) {
      last = k;
    }
  }
  if (best < 0.0) return *lo;  // all mass in one bin
  const std::size_t k = (first + last + 1) / 2;
  return static_cast<double>(k + 1) / static_cast<double>(kBins);
}

Image binarize(const Image& img) {
  const double t = otsu_threshold(img);
  Image out(img.rows, img.cols);
  for (std::size_t i = 0; i < img.size(); ++i) out.values[i] = img.values[i] > t ? 1.0 : 0.0;
  return out;
}

Image fbp_binary(const Sinogram& sino, double filter_alpha, const Image* mask) {
  Image rec = fbp_reconstruct(sino, sino.geometry, filter_alpha);
  if (mask) {
    if (mask->rows != rec.rows || mask->cols != rec.cols) throw ShapeError("mask does not match reconstruction");
    for (std::size_t i = 0; i < rec.size(); ++i) rec.values[i] *= mask->values[i];
  }
  const double peak = *std::max_element(rec.values.begin(), rec.values.end());
  if (peak > 0.0)
    for (auto& v : rec.values) v /= peak;
  return binarize(rec);
}

}  // namespace lact
