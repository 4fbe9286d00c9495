#pragma once

#include <cstddef>
#include <cstdint>

#include "lact/matrix.hpp"
#include "lact/radon.hpp"

namespace lact {

/// Binary disk phantom with non-overlapping holes (circles, regular polygons,
/// rectangles). The disk is centered on the image center.
struct PhantomSpec {
  std::size_t side = 128;
  double disk_radius_frac = 0.45;  // of the side
  std::size_t min_holes = 2;
  std::size_t max_holes = 6;
  double min_separation = 3.0;  // pixels between hole bounding circles and from the rim
  double min_hole_frac = 0.08;  // hole bounding radius range, as a fraction of the disk radius
  double max_hole_frac = 0.22;
  std::uint64_t seed = 0;
};

/// Deterministic per seed. Throws ValueError if the holes cannot be placed
/// within 1000 rejection attempts.
Image generate_phantom(const PhantomSpec& spec);

/// Uniform disk without holes, usable as a support mask.
Image disk_mask(std::size_t side, double disk_radius_frac = 0.45);

/// Limited-angle acquisition: round(arc / step) + 1 angles from `start_angle_deg`.
struct ScanSpec {
  double arc_deg = 30.0;
  double angle_step_deg = 0.5;
  double start_angle_deg = 0.0;
  double noise_sigma = 0.0;  // relative to max(S)
  std::uint64_t seed = 0;
  std::size_t detector_bins = 0;  // 0: image side
};

Geometry scan_geometry(const ScanSpec& scan, std::size_t side);

/// Forward projection plus additive Gaussian noise with std noise_sigma * max(S).
Sinogram simulate_scan(const Image& image, const ScanSpec& scan);

}  // namespace lact
