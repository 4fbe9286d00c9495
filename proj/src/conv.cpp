#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "lact/error.hpp"
#include "lact/ops.hpp"

namespace lact {

using detail::make_output;
using detail::should_record;
using detail::Storage;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvDims {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo, groups, cin_g, cout_g;
  Conv2dParams p;
  bool depthwise() const { return groups == cin && cin_g == 1 && cout == cin; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && p.stride_h == 1 && p.stride_w == 1 && p.pad_h == 0 && p.pad_w == 0;
  }
};

// Column matrix [cin_g*kh*kw, ho*wo] for one sample and group.
void im2col(const double* x, const ConvDims& d, double* col) {
  const std::size_t plane = d.ho * d.wo;
  for (std::size_t c = 0; c < d.cin_g; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        double* row = col + ((c * d.kh + ky) * d.kw + kx) * plane;
        const double* xc = x + c * d.h * d.w;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * d.p.stride_h + ky) - static_cast<long>(d.p.pad_h);
          double* r = row + oy * d.wo;
          if (iy < 0 || iy >= static_cast<long>(d.h)) {
            std::fill_n(r, d.wo, 0.0);
            continue;
          }
          const double* xr = xc + iy * d.w;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * d.p.stride_w + kx) - static_cast<long>(d.p.pad_w);
            r[ox] = (ix < 0 || ix >= static_cast<long>(d.w)) ? 0.0 : xr[ix];
          }
        }
      }
}

void col2im(const double* col, const ConvDims& d, double* gx) {
  const std::size_t plane = d.ho * d.wo;
  for (std::size_t c = 0; c < d.cin_g; ++c)
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const double* row = col + ((c * d.kh + ky) * d.kw + kx) * plane;
        double* gc = gx + c * d.h * d.w;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * d.p.stride_h + ky) - static_cast<long>(d.p.pad_h);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          double* gr = gc + iy * d.w;
          const double* r = row + oy * d.wo;
          for (std::size_t ox = 0; ox < d.wo; ++ox) {
            const long ix = static_cast<long>(ox * d.p.stride_w + kx) - static_cast<long>(d.p.pad_w);
            if (ix >= 0 && ix < static_cast<long>(d.w)) gr[ix] += r[ox];
          }
        }
      }
}

// Valid output range [lo, hi) along one axis for kernel tap k with stride 1.
inline void tap_range(std::size_t k, std::size_t pad, std::size_t in, std::size_t out, std::size_t& lo,
                      std::size_t& hi) {
  // in index = o + k - pad must lie in [0, in)
  lo = pad > k ? pad - k : 0;
  const long h = static_cast<long>(in) + static_cast<long>(pad) - static_cast<long>(k);
  hi = static_cast<std::size_t>(std::clamp<long>(h, 0, static_cast<long>(out)));
  if (lo > hi) lo = hi;
}

void depthwise_forward(const double* x, const double* k, const ConvDims& d, double* y) {
  for (std::size_t c = 0; c < d.cin; ++c) {
    const double* xc = x + c * d.h * d.w;
    double* yc = y + c * d.ho * d.wo;
    const double* kc = k + c * d.kh * d.kw;
    if (d.p.stride_h == 1 && d.p.stride_w == 1) {
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        std::size_t y0, y1;
        tap_range(ky, d.p.pad_h, d.h, d.ho, y0, y1);
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          std::size_t x0, x1;
          tap_range(kx, d.p.pad_w, d.w, d.wo, x0, x1);
          const double wgt = kc[ky * d.kw + kx];
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const double* xr = xc + (oy + ky - d.p.pad_h) * d.w + kx - d.p.pad_w;
            double* yr = yc + oy * d.wo;
            for (std::size_t ox = x0; ox < x1; ++ox) yr[ox] += wgt * xr[ox];
          }
        }
      }
    } else {
      for (std::size_t oy = 0; oy < d.ho; ++oy)
        for (std::size_t ox = 0; ox < d.wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            const long iy = static_cast<long>(oy * d.p.stride_h + ky) - static_cast<long>(d.p.pad_h);
            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const long ix = static_cast<long>(ox * d.p.stride_w + kx) - static_cast<long>(d.p.pad_w);
              if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
              acc += kc[ky * d.kw + kx] * xc[iy * d.w + ix];
            }
          }
          yc[oy * d.wo + ox] += acc;
        }
    }
  }
}

void depthwise_backward(const double* x, const double* k, const double* gy, const ConvDims& d, double* gx,
                        double* gk) {
  for (std::size_t c = 0; c < d.cin; ++c) {
    const double* xc = x + c * d.h * d.w;
    const double* gyc = gy + c * d.ho * d.wo;
    const double* kc = k + c * d.kh * d.kw;
    double* gxc = gx ? gx + c * d.h * d.w : nullptr;
    double* gkc = gk ? gk + c * d.kh * d.kw : nullptr;
    for (std::size_t ky = 0; ky < d.kh; ++ky)
      for (std::size_t kx = 0; kx < d.kw; ++kx) {
        const double wgt = kc[ky * d.kw + kx];
        double acc = 0.0;
        for (std::size_t oy = 0; oy < d.ho; ++oy) {
          const long iy = static_cast<long>(oy * d.p.stride_h + ky) - static_cast<long>(d.p.pad_h);
          if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
          if (d.p.stride_w == 1) {
            std::size_t x0, x1;
            tap_range(kx, d.p.pad_w, d.w, d.wo, x0, x1);
            const double* xr = xc + iy * d.w + kx - d.p.pad_w;
            const double* gr = gyc + oy * d.wo;
            if (gxc) {
              double* gxr = gxc + iy * d.w + kx - d.p.pad_w;
              for (std::size_t ox = x0; ox < x1; ++ox) gxr[ox] += wgt * gr[ox];
            }
            for (std::size_t ox = x0; ox < x1; ++ox) acc += gr[ox] * xr[ox];
          } else {
            for (std::size_t ox = 0; ox < d.wo; ++ox) {
              const long ix = static_cast<long>(ox * d.p.stride_w + kx) - static_cast<long>(d.p.pad_w);
              if (ix < 0 || ix >= static_cast<long>(d.w)) continue;
              const double g = gyc[oy * d.wo + ox];
              if (gxc) gxc[iy * d.w + ix] += wgt * g;
              acc += g * xc[iy * d.w + ix];
            }
          }
        }
        if (gkc) gkc[ky * d.kw + kx] += acc;
      }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, const Conv2dParams& p) {
  if (input.rank() != 3 && input.rank() != 4)
    throw ShapeError("conv2d expects [C,H,W] or [N,C,H,W] input, got " + to_string(input.shape()));
  if (kernel.rank() != 4) throw ShapeError("conv2d kernel must be [Cout,Cin/groups,kh,kw], got " + to_string(kernel.shape()));
  if (p.groups == 0 || p.stride_h == 0 || p.stride_w == 0) throw ValueError("conv2d: groups and strides must be positive");
  const bool batched = input.rank() == 4;
  ConvDims d{};
  d.p = p;
  d.n = batched ? input.dim(0) : 1;
  d.cin = input.dim(batched ? 1 : 0);
  d.h = input.dim(batched ? 2 : 1);
  d.w = input.dim(batched ? 3 : 2);
  d.cout = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  d.groups = p.groups;
  if (d.cin % d.groups != 0 || d.cout % d.groups != 0)
    throw ShapeError("conv2d: channels (" + std::to_string(d.cin) + " in, " + std::to_string(d.cout) +
                     " out) not divisible by groups " + std::to_string(d.groups));
  d.cin_g = d.cin / d.groups;
  d.cout_g = d.cout / d.groups;
  if (kernel.dim(1) != d.cin_g)
    throw ShapeError("conv2d: kernel " + to_string(kernel.shape()) + " does not match input " + to_string(input.shape()) +
                     " with groups " + std::to_string(d.groups));
  const long ho = (static_cast<long>(d.h) + 2 * static_cast<long>(p.pad_h) - static_cast<long>(d.kh)) /
                      static_cast<long>(p.stride_h) + 1;
  const long wo = (static_cast<long>(d.w) + 2 * static_cast<long>(p.pad_w) - static_cast<long>(d.kw)) /
                      static_cast<long>(p.stride_w) + 1;
  if (static_cast<long>(d.h) + 2 * static_cast<long>(p.pad_h) < static_cast<long>(d.kh) || ho < 1)
    throw ShapeError("conv2d: nonpositive output height (axis 0) for input " + to_string(input.shape()) +
                     " and kernel " + to_string(kernel.shape()));
  if (static_cast<long>(d.w) + 2 * static_cast<long>(p.pad_w) < static_cast<long>(d.kw) || wo < 1)
    throw ShapeError("conv2d: nonpositive output width (axis 1) for input " + to_string(input.shape()) +
                     " and kernel " + to_string(kernel.shape()));
  d.ho = static_cast<std::size_t>(ho);
  d.wo = static_cast<std::size_t>(wo);
  if (bias.defined() && bias.numel() != d.cout)
    throw ShapeError("conv2d: bias has " + std::to_string(bias.numel()) + " elements, expected " + std::to_string(d.cout));

  const bool rec = should_record({&input, &kernel, &bias});
  Shape out_shape = batched ? Shape{d.n, d.cout, d.ho, d.wo} : Shape{d.cout, d.ho, d.wo};
  auto out = make_output(out_shape, rec);

  const std::size_t in_sample = d.cin * d.h * d.w;
  const std::size_t out_sample = d.cout * d.ho * d.wo;
  const std::size_t plane = d.ho * d.wo;
  const std::size_t kdim = d.cin_g * d.kh * d.kw;
  const double* x = input.data().data();
  const double* k = kernel.data().data();
  std::vector<double> col;
  if (!d.depthwise() && !d.pointwise()) col.resize(kdim * plane);

  for (std::size_t n = 0; n < d.n; ++n) {
    const double* xn = x + n * in_sample;
    double* yn = out->data.data() + n * out_sample;
    if (d.depthwise()) {
      depthwise_forward(xn, k, d, yn);
    } else {
      for (std::size_t g = 0; g < d.groups; ++g) {
        const double* xg = xn + g * d.cin_g * d.h * d.w;
        const double* colp = xg;
        if (!d.pointwise()) {
          im2col(xg, d, col.data());
          colp = col.data();
        }
        MapMat yg(yn + g * d.cout_g * plane, d.cout_g, plane);
        yg.noalias() = CMapMat(k + g * d.cout_g * kdim, d.cout_g, kdim) * CMapMat(colp, kdim, plane);
      }
    }
    if (bias.defined()) {
      const auto b = bias.data();
      for (std::size_t c = 0; c < d.cout; ++c) {
        double* yc = yn + c * plane;
        for (std::size_t i = 0; i < plane; ++i) yc[i] += b[c];
      }
    }
  }

  if (rec) {
    auto xs = input.storage(), ks = kernel.storage();
    auto bs = bias.defined() ? bias.storage() : nullptr;
    std::vector<std::shared_ptr<Storage>> ins{xs, ks};
    if (bs) ins.push_back(bs);
    Tape::active()->record(std::move(ins), out, [xs, ks, bs, out, d, in_sample, out_sample, plane, kdim] {
      const double* gy = out->grad.data();
      double* gx = xs->requires_grad ? xs->grad_buffer().data() : nullptr;
      double* gk = ks->requires_grad ? ks->grad_buffer().data() : nullptr;
      if (bs && bs->requires_grad) {
        auto& gb = bs->grad_buffer();
        for (std::size_t n = 0; n < d.n; ++n)
          for (std::size_t c = 0; c < d.cout; ++c) {
            const double* g = gy + n * out_sample + c * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += g[i];
            gb[c] += acc;
          }
      }
      if (!gx && !gk) return;
      std::vector<double> col, dcol;
      if (!d.depthwise() && !d.pointwise()) {
        col.resize(kdim * plane);
        dcol.resize(kdim * plane);
      }
      for (std::size_t n = 0; n < d.n; ++n) {
        const double* xn = xs->data.data() + n * in_sample;
        const double* gyn = gy + n * out_sample;
        if (d.depthwise()) {
          depthwise_backward(xn, ks->data.data(), gyn, d, gx ? gx + n * in_sample : nullptr, gk);
          continue;
        }
        for (std::size_t g = 0; g < d.groups; ++g) {
          const std::size_t xoff = n * in_sample + g * d.cin_g * d.h * d.w;
          CMapMat gyg(gyn + g * d.cout_g * plane, d.cout_g, plane);
          CMapMat kg(ks->data.data() + g * d.cout_g * kdim, d.cout_g, kdim);
          if (d.pointwise()) {
            if (gk) MapMat(gk + g * d.cout_g * kdim, d.cout_g, kdim).noalias() += gyg * CMapMat(xs->data.data() + xoff, kdim, plane).transpose();
            if (gx) MapMat(gx + xoff, kdim, plane).noalias() += kg.transpose() * gyg;
            continue;
          }
          if (gk) {
            im2col(xs->data.data() + xoff, d, col.data());
            MapMat(gk + g * d.cout_g * kdim, d.cout_g, kdim).noalias() += gyg * CMapMat(col.data(), kdim, plane).transpose();
          }
          if (gx) {
            MapMat(dcol.data(), kdim, plane).noalias() = kg.transpose() * gyg;
            col2im(dcol.data(), d, gx + xoff);
          }
        }
      }
    });
  }
  return Tensor(out);
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double t;  // weight of i1
};

std::vector<Tap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
    if (i1 == i0) taps[o].t = 0.0;
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  if (input.rank() < 2) throw ShapeError("resize_bilinear needs at least 2 axes, got " + to_string(input.shape()));
  if (out_h == 0 || out_w == 0) throw ValueError("resize_bilinear: output size must be positive");
  Shape shape = input.shape();
  const std::size_t h = shape[shape.size() - 2], w = shape[shape.size() - 1];
  const std::size_t planes = input.numel() / (h * w);
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  const bool rec = should_record({&input});
  auto out = make_output(shape, rec);
  const auto ty = resize_taps(h, out_h);
  const auto tx = resize_taps(w, out_w);
  const double* x = input.data().data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* xp = x + pl * h * w;
    double* yp = out->data.data() + pl * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const double* r0 = xp + a.i0 * w;
      const double* r1 = xp + a.i1 * w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = (1 - b.t) * r0[b.i0] + b.t * r0[b.i1];
        const double bot = (1 - b.t) * r1[b.i0] + b.t * r1[b.i1];
        yp[oy * out_w + ox] = (1 - a.t) * top + a.t * bot;
      }
    }
  }
  if (rec) {
    auto xs = input.storage();
    Tape::active()->record({xs}, out, [xs, out, ty, tx, planes, h, w, out_h, out_w] {
      auto& g = xs->grad_buffer();
      for (std::size_t pl = 0; pl < planes; ++pl) {
        double* gp = g.data() + pl * h * w;
        const double* gyp = out->grad.data() + pl * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto& a = ty[oy];
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto& b = tx[ox];
            const double v = gyp[oy * out_w + ox];
            gp[a.i0 * w + b.i0] += v * (1 - a.t) * (1 - b.t);
            gp[a.i0 * w + b.i1] += v * (1 - a.t) * b.t;
            gp[a.i1 * w + b.i0] += v * a.t * (1 - b.t);
            gp[a.i1 * w + b.i1] += v * a.t * b.t;
          }
        }
      }
    });
  }
  return Tensor(out);
}

}  // namespace lact
