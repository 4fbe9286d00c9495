#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "lact/tensor.hpp"

namespace lact {

// Elementwise. Binary ops take equal shapes, or one side with a single element (broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor abs(const Tensor& a);  // subgradient 0 at 0
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// Reductions to a single-element tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

struct Conv2dParams {
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t groups = 1;

  static Conv2dParams same(std::size_t kernel, std::size_t stride = 1, std::size_t groups = 1) {
    return {kernel / 2, kernel / 2, stride, stride, groups};
  }
};

/// Cross-correlation. input [C,H,W] or [N,C,H,W]; kernel [Cout, C/groups, kh, kw];
/// bias [Cout] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dParams& p);

/// Bilinear resize with the align-corners-false convention on the two trailing axes.
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);

/// Layer normalization over the channel axis at every spatial position.
/// input [C,H,W] or [N,C,H,W]; gamma, beta [C].
Tensor channel_layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = 1e-6);

/// x [B, in] times weight [out, in] transposed, plus bias [out] (may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Mean binary cross-entropy. Logs are clamped at -100.
Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target);

/// Splits a [H,W] tensor into [B,1,p,p] patches, row-major over patch origins.
/// Trailing rows/columns that do not fill a whole patch are dropped.
Tensor extract_patches(const Tensor& image, std::size_t p, std::size_t stride);

/// Translates a [H,W] tensor by offset = [dx, dy] pixels with bilinear sampling;
/// samples outside the image read 0. Differentiable in both arguments.
Tensor shift_bilinear(const Tensor& image, const Tensor& offset);

/// A linear map with a caller-supplied adjoint, usable as a tape node.
///
/// Backward applies the adjoint to the upstream gradient, so the pair must
/// satisfy <forward(x), y> == <x, adjoint(y)>.
class LinearOp {
 public:
  using Map = std::function<void(std::span<const double> in, std::span<double> out)>;

  LinearOp(Shape in_shape, Shape out_shape, Map forward, Map adjoint);

  Tensor operator()(const Tensor& x) const;

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_adjoint(std::span<const double> y) const;

  const Shape& in_shape() const { return in_shape_; }
  const Shape& out_shape() const { return out_shape_; }

 private:
  Shape in_shape_, out_shape_;
  Map forward_, adjoint_;
};

inline LinearOp register_linear_op(Shape in_shape, Shape out_shape, LinearOp::Map forward,
                                   LinearOp::Map adjoint) {
  return LinearOp(std::move(in_shape), std::move(out_shape), std::move(forward), std::move(adjoint));
}

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace lact
