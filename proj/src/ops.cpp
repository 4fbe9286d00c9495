#include "lact/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "lact/error.hpp"

namespace lact {

using detail::make_output;
using detail::should_record;
using detail::Storage;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const bool rec = should_record({&a});
  auto out = make_output(a.shape(), rec);
  const auto x = a.data();
  for (std::size_t i = 0; i < x.size(); ++i) out->data[i] = fwd(x[i]);
  if (rec) {
    auto as = a.storage();
    Tape::active()->record({as}, out, [as, out, deriv] {
      auto& g = as->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i] * deriv(as->data[i], out->data[i]);
    });
  }
  return Tensor(out);
}

enum class BinOp { Add, Sub, Mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1 && !same;
  const bool b_scalar = b.numel() == 1 && !same;
  if (!same && !a_scalar && !b_scalar)
    throw ShapeError(std::string(name) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const Shape& shape = a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  const bool rec = should_record({&a, &b});
  auto out = make_output(shape, rec);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[a_scalar ? 0 : i];
    const double yi = y[b_scalar ? 0 : i];
    out->data[i] = op == BinOp::Add ? xi + yi : op == BinOp::Sub ? xi - yi : xi * yi;
  }
  if (rec) {
    auto as = a.storage();
    auto bs = b.storage();
    Tape::active()->record({as, bs}, out, [as, bs, out, op, a_scalar, b_scalar, n] {
      const auto& go = out->grad;
      if (as->requires_grad) {
        auto& ga = as->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double d = op == BinOp::Mul ? bs->data[b_scalar ? 0 : i] : 1.0;
          ga[a_scalar ? 0 : i] += go[i] * d;
        }
      }
      if (bs->requires_grad) {
        auto& gb = bs->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          const double d = op == BinOp::Mul ? as->data[a_scalar ? 0 : i] : op == BinOp::Sub ? -1.0 : 1.0;
          gb[b_scalar ? 0 : i] += go[i] * d;
        }
      }
    });
  }
  return Tensor(out);
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul, "mul"); }

Tensor scale(const Tensor& a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x, double) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

namespace {

Tensor reduce(const Tensor& a, double factor, const char* name) {
  if (!a.defined() || a.numel() == 0) throw ShapeError(std::string(name) + " of an empty tensor");
  const bool rec = should_record({&a});
  auto out = make_output({1}, rec);
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out->data[0] = acc * factor;
  if (!std::isfinite(out->data[0])) throw NumericError(std::string(name) + " produced a non-finite value");
  if (rec) {
    auto as = a.storage();
    Tape::active()->record({as}, out, [as, out, factor] {
      auto& g = as->grad_buffer();
      const double d = out->grad[0] * factor;
      for (auto& gi : g) gi += d;
    });
  }
  return Tensor(out);
}

}  // namespace

Tensor sum(const Tensor& a) { return reduce(a, 1.0, "sum"); }
Tensor mean(const Tensor& a) { return reduce(a, 1.0 / static_cast<double>(a.numel()), "mean"); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw ShapeError("reshape " + to_string(a.shape()) + " to " + to_string(shape));
  const bool rec = should_record({&a});
  auto out = make_output(std::move(shape), rec);
  std::copy(a.data().begin(), a.data().end(), out->data.begin());
  if (rec) {
    auto as = a.storage();
    Tape::active()->record({as}, out, [as, out] {
      auto& g = as->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out->grad[i];
    });
  }
  return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1))
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  const std::size_t batch = x.dim(0), in = x.dim(1), outf = weight.dim(0);
  if (bias.defined() && bias.numel() != outf)
    throw ShapeError("linear: bias " + to_string(bias.shape()) + " for " + std::to_string(outf) + " outputs");
  const bool rec = should_record({&x, &weight, &bias});
  auto out = make_output({batch, outf}, rec);
  MapMat y(out->data.data(), batch, outf);
  CMapMat xm(x.data().data(), batch, in);
  CMapMat wm(weight.data().data(), outf, in);
  y.noalias() = xm * wm.transpose();
  if (bias.defined())
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < outf; ++o) y(b, o) += bias.data()[o];
  if (rec) {
    auto xs = x.storage(), ws = weight.storage();
    auto bs = bias.defined() ? bias.storage() : nullptr;
    Tape::active()->record({xs, ws}, out, [xs, ws, bs, out, batch, in, outf] {
      CMapMat gy(out->grad.data(), batch, outf);
      if (xs->requires_grad) {
        MapMat gx(xs->grad_buffer().data(), batch, in);
        gx.noalias() += gy * CMapMat(ws->data.data(), outf, in);
      }
      if (ws->requires_grad) {
        MapMat gw(ws->grad_buffer().data(), outf, in);
        gw.noalias() += gy.transpose() * CMapMat(xs->data.data(), batch, in);
      }
      if (bs && bs->requires_grad) {
        auto& gb = bs->grad_buffer();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < outf; ++o) gb[o] += gy(b, o);
      }
    });
  }
  return Tensor(out);
}

Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("binary_cross_entropy: shape mismatch " + to_string(pred.shape()) + " vs " +
                     to_string(target.shape()));
  const bool rec = should_record({&pred, &target});
  auto out = make_output({1}, rec);
  const auto p = pred.data();
  const auto t = target.data();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lp = std::max(std::log(p[i]), -100.0);
    const double lq = std::max(std::log1p(-p[i]), -100.0);
    acc -= t[i] * lp + (1.0 - t[i]) * lq;
  }
  out->data[0] = acc * inv_n;
  if (rec) {
    auto ps = pred.storage(), ts = target.storage();
    Tape::active()->record({ps, ts}, out, [ps, ts, out, inv_n] {
      const double go = out->grad[0] * inv_n;
      if (ps->requires_grad) {
        auto& g = ps->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double pi = std::clamp(ps->data[i], 1e-12, 1.0 - 1e-12);
          const double ti = ts->data[i];
          g[i] += go * (pi - ti) / (pi * (1.0 - pi));
        }
      }
      if (ts->requires_grad) {
        auto& g = ts->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double lp = std::max(std::log(ps->data[i]), -100.0);
          const double lq = std::max(std::log1p(-ps->data[i]), -100.0);
          g[i] += go * (lq - lp);
        }
      }
    });
  }
  return Tensor(out);
}

Tensor channel_layer_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  if (input.rank() != 3 && input.rank() != 4)
    throw ShapeError("channel_layer_norm expects [C,H,W] or [N,C,H,W], got " + to_string(input.shape()));
  const bool batched = input.rank() == 4;
  const std::size_t nb = batched ? input.dim(0) : 1;
  const std::size_t c = input.dim(batched ? 1 : 0);
  const std::size_t hw = input.numel() / (nb * c);
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("channel_layer_norm: affine params must have " + std::to_string(c) + " elements");
  const bool rec = should_record({&input, &gamma, &beta});
  auto out = make_output(input.shape(), rec);
  // Normalized values and inverse std are needed by backward.
  auto xhat = std::make_shared<std::vector<double>>(input.numel());
  auto inv_std = std::make_shared<std::vector<double>>(nb * hw);
  const auto x = input.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  const double inv_c = 1.0 / static_cast<double>(c);
  std::vector<double> mu(hw), var(hw);
  for (std::size_t n = 0; n < nb; ++n) {
    const double* xn = x.data() + n * c * hw;
    std::fill(mu.begin(), mu.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) mu[i] += xn[ch * hw + i];
    for (auto& m : mu) m *= inv_c;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = xn[ch * hw + i] - mu[i];
        var[i] += d * d;
      }
    double* is = inv_std->data() + n * hw;
    for (std::size_t i = 0; i < hw; ++i) is[i] = 1.0 / std::sqrt(var[i] * inv_c + eps);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* xh = xhat->data() + (n * c + ch) * hw;
      double* y = out->data.data() + (n * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (xn[ch * hw + i] - mu[i]) * is[i];
        y[i] = xh[i] * g[ch] + b[ch];
      }
    }
  }
  if (rec) {
    auto xs = input.storage(), gs = gamma.storage(), bs = beta.storage();
    Tape::active()->record({xs, gs, bs}, out, [xs, gs, bs, out, xhat, inv_std, nb, c, hw, inv_c] {
      const auto& gy = out->grad;
      if (gs->requires_grad || bs->requires_grad) {
        auto& gg = gs->grad_buffer();
        auto& gb = bs->grad_buffer();
        for (std::size_t n = 0; n < nb; ++n)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (n * c + ch) * hw;
            double sg = 0.0, sb = 0.0;
            for (std::size_t i = 0; i < hw; ++i) {
              sg += gy[off + i] * (*xhat)[off + i];
              sb += gy[off + i];
            }
            gg[ch] += sg;
            gb[ch] += sb;
          }
      }
      if (!xs->requires_grad) return;
      auto& gx = xs->grad_buffer();
      std::vector<double> s1(hw), s2(hw);
      for (std::size_t n = 0; n < nb; ++n) {
        std::fill(s1.begin(), s1.end(), 0.0);
        std::fill(s2.begin(), s2.end(), 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = (n * c + ch) * hw;
          const double gch = gs->data[ch];
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = gy[off + i] * gch;
            s1[i] += d;
            s2[i] += d * (*xhat)[off + i];
          }
        }
        const double* is = inv_std->data() + n * hw;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = (n * c + ch) * hw;
          const double gch = gs->data[ch];
          for (std::size_t i = 0; i < hw; ++i) {
            const double d = gy[off + i] * gch;
            gx[off + i] += is[i] * (d - inv_c * s1[i] - (*xhat)[off + i] * inv_c * s2[i]);
          }
        }
      }
    });
  }
  return Tensor(out);
}

Tensor extract_patches(const Tensor& image, std::size_t p, std::size_t stride) {
  if (image.rank() != 2) throw ShapeError("extract_patches expects [H,W], got " + to_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (p == 0 || stride == 0) throw ValueError("extract_patches: patch size and stride must be positive");
  if (p > h || p > w)
    throw ValueError("patch size " + std::to_string(p) + " exceeds image " + to_string(image.shape()));
  const std::size_t ny = (h - p) / stride + 1, nx = (w - p) / stride + 1;
  const std::size_t count = ny * nx;
  const bool rec = should_record({&image});
  auto out = make_output({count, 1, p, p}, rec);
  const auto x = image.data();
  for (std::size_t py = 0; py < ny; ++py)
    for (std::size_t px = 0; px < nx; ++px) {
      double* dst = out->data.data() + (py * nx + px) * p * p;
      for (std::size_t r = 0; r < p; ++r)
        std::copy_n(x.data() + (py * stride + r) * w + px * stride, p, dst + r * p);
    }
  if (rec) {
    auto is = image.storage();
    Tape::active()->record({is}, out, [is, out, ny, nx, p, stride, w] {
      auto& g = is->grad_buffer();
      for (std::size_t py = 0; py < ny; ++py)
        for (std::size_t px = 0; px < nx; ++px) {
          const double* src = out->grad.data() + (py * nx + px) * p * p;
          for (std::size_t r = 0; r < p; ++r) {
            double* row = g.data() + (py * stride + r) * w + px * stride;
            for (std::size_t c = 0; c < p; ++c) row[c] += src[r * p + c];
          }
        }
    });
  }
  return Tensor(out);
}

Tensor shift_bilinear(const Tensor& image, const Tensor& offset) {
  if (image.rank() != 2) throw ShapeError("shift_bilinear expects [H,W], got " + to_string(image.shape()));
  if (offset.numel() != 2) throw ShapeError("shift_bilinear offset must hold [dx, dy]");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const double dx = offset.data()[0], dy = offset.data()[1];
  const bool rec = should_record({&image, &offset});
  auto out = make_output({h, w}, rec);
  const auto x = image.data();
  auto at = [&](const std::vector<double>& v, long r, long c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) return 0.0;
    return v[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
  };
  const std::vector<double>& src = image.storage()->data;
  // Output pixel (r, c) samples the input at (r - dy, c - dx).
  const double fy = std::floor(-dy), fx = std::floor(-dx);
  const double ty = -dy - fy, tx = -dx - fx;
  const long oy = static_cast<long>(fy), ox = static_cast<long>(fx);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const long r0 = static_cast<long>(r) + oy, c0 = static_cast<long>(c) + ox;
      out->data[r * w + c] = (1 - ty) * ((1 - tx) * at(src, r0, c0) + tx * at(src, r0, c0 + 1)) +
                             ty * ((1 - tx) * at(src, r0 + 1, c0) + tx * at(src, r0 + 1, c0 + 1));
    }
  (void)x;
  if (rec) {
    auto is = image.storage(), os = offset.storage();
    Tape::active()->record({is, os}, out, [is, os, out, h, w, oy, ox, ty, tx] {
      const auto& go = out->grad;
      const auto& v = is->data;
      auto in_range = [&](long r, long c) {
        return r >= 0 && c >= 0 && r < static_cast<long>(h) && c < static_cast<long>(w);
      };
      auto val = [&](long r, long c) { return in_range(r, c) ? v[r * w + c] : 0.0; };
      if (is->requires_grad) {
        auto& g = is->grad_buffer();
        auto put = [&](long r, long c, double d) {
          if (in_range(r, c)) g[r * w + c] += d;
        };
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            const double gr = go[r * w + c];
            const long r0 = static_cast<long>(r) + oy, c0 = static_cast<long>(c) + ox;
            put(r0, c0, gr * (1 - ty) * (1 - tx));
            put(r0, c0 + 1, gr * (1 - ty) * tx);
            put(r0 + 1, c0, gr * ty * (1 - tx));
            put(r0 + 1, c0 + 1, gr * ty * tx);
          }
      }
      if (os->requires_grad) {
        // Sample position moves by -dx, -dy.
        double gdx = 0.0, gdy = 0.0;
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t c = 0; c < w; ++c) {
            const double gr = go[r * w + c];
            if (gr == 0.0) continue;
            const long r0 = static_cast<long>(r) + oy, c0 = static_cast<long>(c) + ox;
            const double a = val(r0, c0), b = val(r0, c0 + 1), cc = val(r0 + 1, c0), d = val(r0 + 1, c0 + 1);
            const double d_tx = (1 - ty) * (b - a) + ty * (d - cc);
            const double d_ty = (1 - tx) * (cc - a) + tx * (d - b);
            gdx -= gr * d_tx;
            gdy -= gr * d_ty;
          }
        auto& g = os->grad_buffer();
        g[0] += gdx;
        g[1] += gdy;
      }
    });
  }
  return Tensor(out);
}

LinearOp::LinearOp(Shape in_shape, Shape out_shape, Map forward, Map adjoint)
    : in_shape_(std::move(in_shape)),
      out_shape_(std::move(out_shape)),
      forward_(std::move(forward)),
      adjoint_(std::move(adjoint)) {}

std::vector<double> LinearOp::apply(std::span<const double> x) const {
  if (x.size() != numel(in_shape_))
    throw ShapeError("linear op expects " + to_string(in_shape_) + " input, got " + std::to_string(x.size()) +
                     " values");
  std::vector<double> y(numel(out_shape_), 0.0);
  forward_(x, y);
  return y;
}

std::vector<double> LinearOp::apply_adjoint(std::span<const double> y) const {
  if (y.size() != numel(out_shape_))
    throw ShapeError("linear op adjoint expects " + to_string(out_shape_) + " input, got " +
                     std::to_string(y.size()) + " values");
  std::vector<double> x(numel(in_shape_), 0.0);
  adjoint_(y, x);
  return x;
}

Tensor LinearOp::operator()(const Tensor& x) const {
  if (x.numel() != numel(in_shape_))
    throw ShapeError("linear op expects " + to_string(in_shape_) + ", got " + to_string(x.shape()));
  const bool rec = should_record({&x});
  auto out = make_output(out_shape_, rec);
  forward_(x.data(), out->data);
  if (rec) {
    auto xs = x.storage();
    auto adj = adjoint_;
    Tape::active()->record({xs}, out, [xs, out, adj] {
      std::vector<double> back(xs->data.size(), 0.0);
      adj(out->grad, back);
      auto& g = xs->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
    });
  }
  return Tensor(out);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace lact
