#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/ops.hpp"

namespace lact {

/// Parallel-beam acquisition geometry over an n x n image.
///
/// Pixel (r, c) has its center at (x = c, y = r); the rotation center is the
/// image center ((n-1)/2, (n-1)/2). Detector bins are spaced n / D pixels apart
/// and centered on the rotation center. Every ray spans the inscribed circle
/// (length n) and is sampled every `ray_step` pixels.
struct Geometry {
  std::size_t image_side = 0;
  std::size_t detector_bins = 0;
  std::vector<double> angles_deg;
  double ray_step = 1.0;

  /// Detector bins default to the image side.
  static Geometry parallel(std::size_t n, std::vector<double> angles_deg, std::size_t detector_bins = 0);

  std::size_t n_angles() const { return angles_deg.size(); }
  double bin_spacing() const { return static_cast<double>(image_side) / static_cast<double>(detector_bins); }

  /// Throws ValueError when an invariant does not hold.
  void validate() const;

  bool operator==(const Geometry&) const = default;
};

/// start, start + step, ..., count values.
std::vector<double> angle_list(double start_deg, double step_deg, std::size_t count);

struct Sinogram {
  Matrix values;  // n_angles x detector_bins; row i belongs to angles_deg[i]
  Geometry geometry;
};

Sinogram radon_forward(const Image& image, const Geometry& geom);

/// Exact transpose of radon_forward's discretization.
Image radon_adjoint(const Sinogram& sino, const Geometry& geom);

/// Raw kernels over flat buffers (image n*n, sinogram A*D). Outputs are overwritten.
void radon_project(const Geometry& geom, std::span<const double> image, std::span<double> sino);
void radon_backproject(const Geometry& geom, std::span<const double> sino, std::span<double> image);

/// The forward projection as a tape-aware linear op ([n,n] -> [A,D]).
LinearOp radon_operator(const Geometry& geom);

/// Filtered back projection: filter each projection with r_alpha (rows
/// zero-padded to a power of two >= 2D), back project, scale by 1 / (2 A), clip
/// negatives. A unit-density object comes back near 1.
Image fbp_reconstruct(const Sinogram& sino, const Geometry& geom, double filter_alpha);

}  // namespace lact
