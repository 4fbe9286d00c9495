#include "lact/radon.hpp"

#include <algorithm>
#include <cmath>

#include "lact/error.hpp"
#include "lact/sinogram_filter.hpp"

namespace lact {

Geometry Geometry::parallel(std::size_t n, std::vector<double> angles_deg, std::size_t detector_bins) {
  Geometry g;
  g.image_side = n;
  g.detector_bins = detector_bins ? detector_bins : n;
  g.angles_deg = std::move(angles_deg);
  g.validate();
  return g;
}

void Geometry::validate() const {
  if (image_side < 2) throw ValueError("geometry: image side must be >= 2");
  if (detector_bins < 2) throw ValueError("geometry: detector bins must be >= 2");
  if (angles_deg.empty()) throw ValueError("geometry: at least one angle is required");
  if (!(ray_step > 0.0)) throw ValueError("geometry: ray step must be positive");
  for (std::size_t i = 1; i < angles_deg.size(); ++i)
    if (!(angles_deg[i] > angles_deg[i - 1])) throw ValueError("geometry: angles must be strictly increasing");
  if (angles_deg.back() - angles_deg.front() >= 180.0) throw ValueError("geometry: angle span must be below 180 degrees");
}

std::vector<double> angle_list(double start_deg, double step_deg, std::size_t count) {
  std::vector<double> a(count);
  for (std::size_t i = 0; i < count; ++i) a[i] = start_deg + step_deg * static_cast<double>(i);
  return a;
}

namespace {

struct RayLayout {
  double center;
  std::size_t samples;
  double t0;
  double s0;
  double ds;
};

RayLayout layout(const Geometry& g) {
  RayLayout l;
  const double n = static_cast<double>(g.image_side);
  l.center = 0.5 * (n - 1.0);
  l.samples = static_cast<std::size_t>(std::ceil(n / g.ray_step - 1e-9));
  l.t0 = -0.5 * static_cast<double>(l.samples - 1) * g.ray_step;
  l.ds = g.bin_spacing();
  l.s0 = -0.5 * static_cast<double>(g.detector_bins - 1) * l.ds;
  return l;
}

// Visits the bilinear footprint of every sample of ray (angle a, bin j).
template <typename Visit>
inline void trace_ray(const Geometry& g, const RayLayout& l, double cs, double sn, std::size_t j, Visit&& visit) {
  const long n = static_cast<long>(g.image_side);
  const double s = l.s0 + static_cast<double>(j) * l.ds;
  const double bx = l.center + s * cs;
  const double by = l.center + s * sn;
  for (std::size_t k = 0; k < l.samples; ++k) {
    const double t = l.t0 + static_cast<double>(k) * g.ray_step;
    const double x = bx - t * sn;
    const double y = by + t * cs;
    const double fx = std::floor(x), fy = std::floor(y);
    const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    if (x0 < -1 || y0 < -1 || x0 >= n || y0 >= n) continue;
    const double tx = x - fx, ty = y - fy;
    const bool xa = x0 >= 0, xb = x0 + 1 < n, ya = y0 >= 0, yb = y0 + 1 < n;
    if (ya && xa) visit(y0 * n + x0, (1 - ty) * (1 - tx));
    if (ya && xb) visit(y0 * n + x0 + 1, (1 - ty) * tx);
    if (yb && xa) visit((y0 + 1) * n + x0, ty * (1 - tx));
    if (yb && xb) visit((y0 + 1) * n + x0 + 1, ty * tx);
  }
}

void check_buffers(const Geometry& g, std::size_t image_size, std::size_t sino_size) {
  g.validate();
  if (image_size != g.image_side * g.image_side)
    throw ShapeError("radon: image has " + std::to_string(image_size) + " pixels, geometry expects " +
                     std::to_string(g.image_side) + "x" + std::to_string(g.image_side));
  if (sino_size != g.n_angles() * g.detector_bins)
    throw ShapeError("radon: sinogram has " + std::to_string(sino_size) + " values, geometry expects " +
                     std::to_string(g.n_angles()) + "x" + std::to_string(g.detector_bins));
}

}  // namespace

void radon_project(const Geometry& g, std::span<const double> image, std::span<double> sino) {
  check_buffers(g, image.size(), sino.size());
  const auto l = layout(g);
  const double* img = image.data();
  for (std::size_t a = 0; a < g.n_angles(); ++a) {
    const double th = g.angles_deg[a] * M_PI / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    for (std::size_t j = 0; j < g.detector_bins; ++j) {
      double acc = 0.0;
      trace_ray(g, l, cs, sn, j, [&](long idx, double w) { acc += w * img[idx]; });
      sino[a * g.detector_bins + j] = acc * g.ray_step;
    }
  }
}

void radon_backproject(const Geometry& g, std::span<const double> sino, std::span<double> image) {
  check_buffers(g, image.size(), sino.size());
  const auto l = layout(g);
  std::fill(image.begin(), image.end(), 0.0);
  double* img = image.data();
  for (std::size_t a = 0; a < g.n_angles(); ++a) {
    const double th = g.angles_deg[a] * M_PI / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    for (std::size_t j = 0; j < g.detector_bins; ++j) {
      const double v = sino[a * g.detector_bins + j] * g.ray_step;
      if (v == 0.0) continue;
      trace_ray(g, l, cs, sn, j, [&](long idx, double w) { img[idx] += w * v; });
    }
  }
}

Sinogram radon_forward(const Image& image, const Geometry& geom) {
  if (image.rows != geom.image_side || image.cols != geom.image_side)
    throw ShapeError("radon_forward: image is " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
                     ", geometry expects side " + std::to_string(geom.image_side));
  Sinogram s{Matrix(geom.n_angles(), geom.detector_bins), geom};
  radon_project(geom, image.values, s.values.values);
  return s;
}

Image radon_adjoint(const Sinogram& sino, const Geometry& geom) {
  if (sino.values.rows != geom.n_angles() || sino.values.cols != geom.detector_bins)
    throw ShapeError("radon_adjoint: sinogram is " + std::to_string(sino.values.rows) + "x" +
                     std::to_string(sino.values.cols) + ", geometry expects " + std::to_string(geom.n_angles()) + "x" +
                     std::to_string(geom.detector_bins));
  Image img(geom.image_side, geom.image_side);
  radon_backproject(geom, sino.values.values, img.values);
  return img;
}

LinearOp radon_operator(const Geometry& geom) {
  geom.validate();
  return register_linear_op(
      {geom.image_side, geom.image_side}, {geom.n_angles(), geom.detector_bins},
      [geom](std::span<const double> in, std::span<double> out) { radon_project(geom, in, out); },
      [geom](std::span<const double> in, std::span<double> out) { radon_backproject(geom, in, out); });
}

Image fbp_reconstruct(const Sinogram& sino, const Geometry& geom, double filter_alpha) {
  geom.validate();
  const std::size_t d = geom.detector_bins;
  if (sino.values.rows != geom.n_angles() || sino.values.cols != d)
    throw ShapeError("sinogram does not match geometry");
  // Zero-pad rows so the ramp's long negative tails do not wrap around (cupping).
  std::size_t padded = 1;
  while (padded < 2 * d) padded *= 2;
  RowFilter filter(FilterSpec{filter_alpha, padded});
  Sinogram filtered{Matrix(sino.values.rows, d), geom};
  std::vector<double> in(padded), out(padded);
  for (std::size_t a = 0; a < sino.values.rows; ++a) {
    std::fill(in.begin(), in.end(), 0.0);
    std::copy_n(sino.values.values.begin() + a * d, d, in.begin());
    filter.apply(in, out);
    std::copy_n(out.begin(), d, filtered.values.values.begin() + a * d);
  }
  Image img = radon_adjoint(filtered, geom);
  // 1/(2A): the inverse DFT's 1/(2 pi) times the pi/A angular step, with |omega| in rad/sample.
  const double scale = 1.0 / (2.0 * static_cast<double>(geom.n_angles()));
  for (auto& v : img.values) v = std::max(0.0, v * scale);
  return img;
}

}  // namespace lact
