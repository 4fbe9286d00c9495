#include "lact/neural.hpp"

#include <algorithm>
#include <cmath>

#include "lact/error.hpp"
#include "lact/io.hpp"

namespace lact {

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Adam::Adam(std::vector<Parameter> params, AdamOptions options) : params_(std::move(params)), opt_(options) {
  if (!(opt_.lr > 0.0)) throw ValueError("Adam learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.storage()->grad)
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + p.name + "'");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto* s = p.value.storage().get();
    const double lr = opt_.lr * p.lr_scale;
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has = !s->grad.empty();
    for (std::size_t k = 0; k < s->data.size(); ++k) {
      const double g = has ? s->grad[k] : 0.0;
      m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g;
      v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g * g;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      s->data[k] -= lr * mh / (std::sqrt(vh) + opt_.eps);
    }
    s->grad.clear();
  }
}

// ---------------------------------------------------------------------------
// Deep Image Prior network

DipNetwork::DipNetwork(std::size_t n_angles, std::size_t detector_bins, std::size_t image_side, std::uint64_t seed,
                       DipArchitecture arch)
    : a_(n_angles), d_(detector_bins), n_(image_side), arch_(arch) {
  if (a_ < arch_.stem_kernel || d_ < arch_.stem_kernel)
    throw ShapeError("DIP: sinogram " + std::to_string(a_) + "x" + std::to_string(d_) + " is smaller than the stem kernel");
  if (n_ < 2) throw ShapeError("DIP: image side must be >= 2");
  Rng rng(seed);
  const std::size_t c = arch_.channels, k = arch_.stem_kernel;
  stem_w_ = init_uniform({c, 1, k, k}, k * k, rng);
  stem_b_ = init_uniform({c}, k * k, rng);
  params_.push_back({"stem.weight", stem_w_});
  params_.push_back({"stem.bias", stem_b_});
  for (std::size_t i = 0; i < arch_.sinogram_blocks; ++i)
    sino_blocks_.push_back(make_block("sino" + std::to_string(i), rng));
  for (std::size_t i = 0; i < arch_.image_blocks; ++i)
    image_blocks_.push_back(make_block("image" + std::to_string(i), rng));
  head_w_ = init_uniform({1, c, 1, 1}, c, rng);
  head_b_ = init_uniform({1}, c, rng);
  params_.push_back({"head.weight", head_w_});
  params_.push_back({"head.bias", head_b_});
}

DipNetwork::Block DipNetwork::make_block(const std::string& prefix, Rng& rng) {
  const std::size_t c = arch_.channels, k = arch_.block_kernel, e = arch_.expansion * c;
  Block b;
  b.dw_w = init_uniform({c, 1, k, k}, k * k, rng);
  b.dw_b = init_uniform({c}, k * k, rng);
  b.ln_g = Tensor::full({c}, 1.0, true);
  b.ln_b = Tensor::zeros({c}, true);
  b.pw1_w = init_uniform({e, c, 1, 1}, c, rng);
  b.pw1_b = init_uniform({e}, c, rng);
  b.pw2_w = init_uniform({c, e, 1, 1}, e, rng);
  b.pw2_b = init_uniform({c}, e, rng);
  params_.push_back({prefix + ".dw.weight", b.dw_w});
  params_.push_back({prefix + ".dw.bias", b.dw_b});
  params_.push_back({prefix + ".norm.weight", b.ln_g});
  params_.push_back({prefix + ".norm.bias", b.ln_b});
  params_.push_back({prefix + ".pw1.weight", b.pw1_w});
  params_.push_back({prefix + ".pw1.bias", b.pw1_b});
  params_.push_back({prefix + ".pw2.weight", b.pw2_w});
  params_.push_back({prefix + ".pw2.bias", b.pw2_b});
  return b;
}

Tensor DipNetwork::run_block(const Block& b, const Tensor& x) const {
  auto h = conv2d(x, b.dw_w, b.dw_b, Conv2dParams::same(arch_.block_kernel, 1, arch_.channels));
  h = channel_layer_norm(h, b.ln_g, b.ln_b);
  h = gelu(conv2d(h, b.pw1_w, b.pw1_b, {}));
  h = conv2d(h, b.pw2_w, b.pw2_b, {});
  return add(x, h);
}

Tensor DipNetwork::prepare_input(const Matrix& sinogram) {
  double peak = 0.0;
  for (double v : sinogram.values) peak = std::max(peak, std::abs(v));
  std::vector<double> v = sinogram.values;
  if (peak > 0.0)
    for (auto& x : v) x /= peak;
  return Tensor::from({1, sinogram.rows, sinogram.cols}, std::move(v));
}

Tensor DipNetwork::forward(const Tensor& input) const {
  if (input.rank() != 3 || input.dim(0) != 1 || input.dim(1) != a_ || input.dim(2) != d_)
    throw ShapeError("DIP expects input [1," + std::to_string(a_) + "," + std::to_string(d_) + "], got " +
                     to_string(input.shape()));
  auto x = conv2d(input, stem_w_, stem_b_, {});
  for (const auto& b : sino_blocks_) x = run_block(b, x);
  x = resize_bilinear(x, n_, n_);
  for (const auto& b : image_blocks_) x = run_block(b, x);
  x = sigmoid(conv2d(x, head_w_, head_b_, {}));
  return reshape(x, {n_, n_});
}

Image DipNetwork::forward(const Sinogram& sino) const {
  NoGradGuard guard;
  return forward(prepare_input(sino.values)).to_matrix();
}

// ---------------------------------------------------------------------------
// Patch autoencoder

PatchAutoencoder::PatchAutoencoder(std::size_t patch_size, std::uint64_t seed) : p_(patch_size), latent_(patch_size / 4) {
  if (p_ < 4) throw ValueError("patch size must be >= 4 (latent dimension floor(p/4) >= 1)");
  Rng rng(seed);
  build(rng);
}

void PatchAutoencoder::build(Rng& rng) {
  sizes_[0] = p_;
  for (int i = 1; i < 4; ++i) sizes_[i] = (sizes_[i - 1] + 1) / 2;
  params_.clear();
  std::size_t cin = 1;
  for (int i = 0; i < 3; ++i) {
    const std::size_t c = kChannels[i];
    enc_w_[i] = init_uniform({c, cin, 3, 3}, cin * 9, rng);
    enc_b_[i] = init_uniform({c}, cin * 9, rng);
    params_.push_back({"enc" + std::to_string(i) + ".weight", enc_w_[i]});
    params_.push_back({"enc" + std::to_string(i) + ".bias", enc_b_[i]});
    cin = c;
  }
  const std::size_t flat = kChannels[2] * sizes_[3] * sizes_[3];
  to_latent_w_ = init_uniform({latent_, flat}, flat, rng);
  to_latent_b_ = init_uniform({latent_}, flat, rng);
  from_latent_w_ = init_uniform({flat, latent_}, latent_, rng);
  from_latent_b_ = init_uniform({flat}, latent_, rng);
  params_.push_back({"latent.weight", to_latent_w_});
  params_.push_back({"latent.bias", to_latent_b_});
  params_.push_back({"unlatent.weight", from_latent_w_});
  params_.push_back({"unlatent.bias", from_latent_b_});
  // Decoder stage i maps kChannels[2-i] -> kChannels[1-i] (or 1), at spatial size sizes_[2-i].
  for (int i = 0; i < 3; ++i) {
    const std::size_t ci = kChannels[2 - i];
    const std::size_t co = i < 2 ? kChannels[1 - i] : 1;
    dec_w_[i] = init_uniform({co, ci, 3, 3}, ci * 9, rng);
    dec_b_[i] = init_uniform({co}, ci * 9, rng);
    params_.push_back({"dec" + std::to_string(i) + ".weight", dec_w_[i]});
    params_.push_back({"dec" + std::to_string(i) + ".bias", dec_b_[i]});
  }
}

Tensor PatchAutoencoder::encode(const Tensor& patches) const {
  const auto& s = patches.shape();
  const bool ok3 = s.size() == 3 && s[1] == p_ && s[2] == p_;
  const bool ok4 = s.size() == 4 && s[1] == 1 && s[2] == p_ && s[3] == p_;
  if (!ok3 && !ok4)
    throw ShapeError("autoencoder expects [B," + std::to_string(p_) + "," + std::to_string(p_) + "] patches, got " +
                     to_string(s));
  const std::size_t batch = s[0];
  auto x = ok3 ? reshape(patches, {batch, 1, p_, p_}) : patches;
  for (int i = 0; i < 3; ++i) x = gelu(conv2d(x, enc_w_[i], enc_b_[i], Conv2dParams::same(3, 2)));
  x = reshape(x, {batch, x.numel() / batch});
  return linear(x, to_latent_w_, to_latent_b_);
}

Tensor PatchAutoencoder::decode(const Tensor& latent) const {
  if (latent.rank() != 2 || latent.dim(1) != latent_)
    throw ShapeError("decoder expects [B," + std::to_string(latent_) + "], got " + to_string(latent.shape()));
  const std::size_t batch = latent.dim(0);
  auto x = gelu(linear(latent, from_latent_w_, from_latent_b_));
  x = reshape(x, {batch, kChannels[2], sizes_[3], sizes_[3]});
  for (int i = 0; i < 3; ++i) {
    const std::size_t sz = sizes_[2 - i];
    x = resize_bilinear(x, sz, sz);
    x = conv2d(x, dec_w_[i], dec_b_[i], Conv2dParams::same(3));
    x = i < 2 ? gelu(x) : sigmoid(x);
  }
  return x;
}

Tensor PatchAutoencoder::forward(const Tensor& patches) const {
  auto y = decode(encode(patches));
  return patches.rank() == 3 ? reshape(y, patches.shape()) : y;
}

std::vector<Tensor*> PatchAutoencoder::weight_slots() {
  std::vector<Tensor*> slots;
  for (int i = 0; i < 3; ++i) {
    slots.push_back(&enc_w_[i]);
    slots.push_back(&enc_b_[i]);
  }
  slots.insert(slots.end(), {&to_latent_w_, &to_latent_b_, &from_latent_w_, &from_latent_b_});
  for (int i = 0; i < 3; ++i) {
    slots.push_back(&dec_w_[i]);
    slots.push_back(&dec_b_[i]);
  }
  return slots;
}

PatchAutoencoder PatchAutoencoder::frozen() const {
  PatchAutoencoder copy = *this;
  auto slots = copy.weight_slots();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    *slots[i] = slots[i]->detach();
    copy.params_[i].value = *slots[i];
  }
  return copy;
}

void PatchAutoencoder::save(const std::string& path) const {
  io::NamedTensors t;
  t.emplace_back("meta", Tensor::from({5}, {static_cast<double>(p_), static_cast<double>(latent_),
                                            static_cast<double>(kChannels[0]), static_cast<double>(kChannels[1]),
                                            static_cast<double>(kChannels[2])}));
  for (const auto& p : params_) t.emplace_back(p.name, p.value);
  io::write_tensors(path, t);
}

PatchAutoencoder PatchAutoencoder::load(const std::string& path) {
  auto tensors = io::read_tensors(path);
  if (tensors.empty() || tensors[0].first != "meta" || tensors[0].second.numel() != 5)
    throw ParseError(path, 0, "model file lacks architecture metadata");
  const auto meta = tensors[0].second.data();
  const auto p = static_cast<std::size_t>(meta[0]);
  if (p < 4 || static_cast<std::size_t>(meta[1]) != p / 4 || meta[2] != kChannels[0] || meta[3] != kChannels[1] ||
      meta[4] != kChannels[2])
    throw ParseError(path, 0, "unsupported autoencoder architecture");
  PatchAutoencoder model(p, 0);
  if (tensors.size() != model.params_.size() + 1) throw ParseError(path, 0, "unexpected tensor count");
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    const auto& [name, t] = tensors[i + 1];
    auto& dst = model.params_[i];
    if (name != dst.name || t.shape() != dst.value.shape())
      throw ParseError(path, 0, "tensor '" + name + "' does not match expected '" + dst.name + "'");
    std::copy(t.data().begin(), t.data().end(), dst.value.mutable_data().begin());
  }
  return model;
}

std::size_t training_stride(std::size_t p) { return std::max<std::size_t>(1, p / 5); }

std::vector<double> collect_patches(const std::vector<Image>& images, std::size_t p, std::size_t stride) {
  std::vector<double> out;
  for (const auto& img : images) {
    if (p > img.rows || p > img.cols)
      throw ValueError("patch size " + std::to_string(p) + " exceeds image " + std::to_string(img.rows) + "x" +
                       std::to_string(img.cols));
    for (std::size_t y = 0; y + p <= img.rows; y += stride)
      for (std::size_t x = 0; x + p <= img.cols; x += stride)
        for (std::size_t r = 0; r < p; ++r)
          out.insert(out.end(), img.values.begin() + static_cast<long>((y + r) * img.cols + x),
                     img.values.begin() + static_cast<long>((y + r) * img.cols + x + p));
  }
  return out;
}

TrainedAutoencoder train_autoencoder(const std::vector<Image>& images, std::size_t p, std::uint64_t seed,
                                     const AutoencoderTraining& options) {
  if (images.empty()) throw ValueError("train_autoencoder needs at least one image");
  if (options.batch_size == 0 || options.epochs == 0) throw ValueError("batch size and epochs must be positive");
  const std::size_t pp = p * p;
  const auto all = collect_patches(images, p, training_stride(p));
  const std::size_t count = all.size() / pp;

  Rng rng(seed);
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  auto held = static_cast<std::size_t>(std::floor(options.holdout_fraction * static_cast<double>(count)));
  if (held >= count) held = count - 1;
  const std::size_t n_train = count - held;

  TrainedAutoencoder result{PatchAutoencoder(p, derive_seed(seed, 1)), {}, 0.0, n_train, {}};
  for (std::size_t i = n_train; i < count; ++i)
    result.heldout.insert(result.heldout.end(), all.begin() + static_cast<long>(order[i] * pp),
                          all.begin() + static_cast<long>((order[i] + 1) * pp));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<long>(n_train));

  Adam adam(result.model.parameters(), AdamOptions{options.lr});
  std::vector<double> batch;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(train.begin(), train.end());
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n_train; start += options.batch_size) {
      const std::size_t bsz = std::min(options.batch_size, n_train - start);
      batch.clear();
      for (std::size_t i = start; i < start + bsz; ++i)
        batch.insert(batch.end(), all.begin() + static_cast<long>(train[i] * pp),
                     all.begin() + static_cast<long>((train[i] + 1) * pp));
      const auto x = Tensor::from({bsz, 1, p, p}, batch);
      Tape tape;
      const auto loss = binary_cross_entropy(result.model.forward(x), x);
      tape.backward(loss);
      adam.step();
      loss_sum += loss.item() * static_cast<double>(bsz);
      seen += bsz;
    }
    result.epoch_losses.push_back(loss_sum / static_cast<double>(seen));
  }
  result.final_loss = result.epoch_losses.back();
  return result;
}

double reconstruction_mae(const PatchAutoencoder& model, const std::vector<double>& patches) {
  const std::size_t p = model.patch_size();
  const std::size_t count = patches.size() / (p * p);
  if (count == 0) throw ValueError("reconstruction_mae: no patches");
  NoGradGuard guard;
  double acc = 0.0;
  const std::size_t chunk = 64;
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t b = std::min(chunk, count - start);
    std::vector<double> v(patches.begin() + static_cast<long>(start * p * p),
                          patches.begin() + static_cast<long>((start + b) * p * p));
    const auto y = model.forward(Tensor::from({b, p, p}, v));
    for (std::size_t i = 0; i < v.size(); ++i) acc += std::abs(y.data()[i] - v[i]);
  }
  return acc / static_cast<double>(patches.size());
}

}  // namespace lact
