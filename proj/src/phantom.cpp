#include "lact/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lact/error.hpp"
#include "lact/rng.hpp"

namespace lact {

namespace {

enum class HoleKind { Circle, Polygon, Rectangle };

struct Hole {
  HoleKind kind;
  double cx, cy;
  double radius;  // bounding radius
  double rotation;
  int sides;                 // polygon
  double half_w, half_h;     // rectangle

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    if (dx * dx + dy * dy > radius * radius) return false;
    switch (kind) {
      case HoleKind::Circle:
        return true;
      case HoleKind::Rectangle: {
        const double c = std::cos(rotation), s = std::sin(rotation);
        const double u = c * dx + s * dy, v = -s * dx + c * dy;
        return std::abs(u) <= half_w && std::abs(v) <= half_h;
      }
      case HoleKind::Polygon: {
        // Inside iff the point is within every edge's half-plane (apothem test).
        const double apothem = radius * std::cos(M_PI / sides);
        for (int k = 0; k < sides; ++k) {
          const double phi = rotation + (2.0 * k + 1.0) * M_PI / sides;
          if (dx * std::cos(phi) + dy * std::sin(phi) > apothem) return false;
        }
        return true;
      }
    }
    return false;
  }
};

}  // namespace

Image generate_phantom(const PhantomSpec& spec) {
  if (spec.side < 2) throw ValueError("phantom side must be >= 2");
  if (!(spec.disk_radius_frac > 0.0 && spec.disk_radius_frac <= 0.5))
    throw ValueError("disk radius fraction must be in (0, 0.5]");
  if (spec.min_holes > spec.max_holes) throw ValueError("min_holes exceeds max_holes");
  if (!(spec.min_hole_frac > 0.0 && spec.min_hole_frac <= spec.max_hole_frac))
    throw ValueError("hole size range must satisfy 0 < min <= max");

  Rng rng(spec.seed);
  const double n = static_cast<double>(spec.side);
  const double center = 0.5 * (n - 1.0);
  const double disk_r = spec.disk_radius_frac * n;
  const auto count = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(spec.min_holes), static_cast<std::int64_t>(spec.max_holes)));

  std::vector<Hole> holes;
  std::size_t attempts = 0;
  while (holes.size() < count) {
    if (++attempts > 1000)
      throw ValueError("could not place " + std::to_string(count) + " holes after 1000 attempts; use fewer or smaller holes");
    Hole h{};
    h.radius = disk_r * rng.uniform(spec.min_hole_frac, spec.max_hole_frac);
    const double reach = disk_r - h.radius - spec.min_separation;
    if (reach <= 0.0) continue;
    const double rr = reach * std::sqrt(rng.uniform());
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    h.cx = center + rr * std::cos(ang);
    h.cy = center + rr * std::sin(ang);
    h.kind = static_cast<HoleKind>(rng.uniform_int(0, 2));
    h.rotation = rng.uniform(0.0, 2.0 * M_PI);
    h.sides = static_cast<int>(rng.uniform_int(3, 8));
    const double aspect = rng.uniform(0.35, M_PI / 2.0 - 0.35);
    h.half_w = h.radius * std::cos(aspect);
    h.half_h = h.radius * std::sin(aspect);
    const bool clear = std::all_of(holes.begin(), holes.end(), [&](const Hole& o) {
      return std::hypot(h.cx - o.cx, h.cy - o.cy) >= h.radius + o.radius + spec.min_separation;
    });
    if (clear) holes.push_back(h);
  }

  Image img(spec.side, spec.side);
  for (std::size_t r = 0; r < spec.side; ++r)
    for (std::size_t c = 0; c < spec.side; ++c) {
      const double x = static_cast<double>(c), y = static_cast<double>(r);
      if ((x - center) * (x - center) + (y - center) * (y - center) > disk_r * disk_r) continue;
      const bool in_hole = std::any_of(holes.begin(), holes.end(), [&](const Hole& h) { return h.contains(x, y); });
      img(r, c) = in_hole ? 0.0 : 1.0;
    }
  return img;
}

Image disk_mask(std::size_t side, double disk_radius_frac) {
  PhantomSpec spec;
  spec.side = side;
  spec.disk_radius_frac = disk_radius_frac;
  spec.min_holes = spec.max_holes = 0;
  return generate_phantom(spec);
}

Geometry scan_geometry(const ScanSpec& scan, std::size_t side) {
  if (!(scan.arc_deg > 0.0 && scan.arc_deg < 180.0)) throw ValueError("scan arc must be in (0, 180) degrees");
  if (!(scan.angle_step_deg > 0.0)) throw ValueError("angle step must be positive");
  const auto count = static_cast<std::size_t>(std::lround(scan.arc_deg / scan.angle_step_deg)) + 1;
  return Geometry::parallel(side, angle_list(scan.start_angle_deg, scan.angle_step_deg, count), scan.detector_bins);
}

Sinogram simulate_scan(const Image& image, const ScanSpec& scan) {
  if (image.rows != image.cols) throw ShapeError("simulate_scan expects a square image");
  if (scan.noise_sigma < 0.0) throw ValueError("noise sigma must be >= 0");
  auto sino = radon_forward(image, scan_geometry(scan, image.rows));
  if (scan.noise_sigma > 0.0) {
    const double peak = *std::max_element(sino.values.values.begin(), sino.values.values.end());
    const double sd = scan.noise_sigma * peak;
    Rng rng(scan.seed);
    for (auto& v : sino.values.values) v += sd * rng.normal();
  }
  return sino;
}

}  // namespace lact
