#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/radon.hpp"
#include "lact/tensor.hpp"

namespace lact::io {

/// Plain CSV, one matrix row per line, shortest round-trip decimal form.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

/// `<path without extension>.meta`
std::string meta_path(const std::string& csv_path);

/// Sinogram CSV plus its `.meta` sidecar (n_angles, angle_start_deg, angle_step_deg,
/// detector_bins). Angles must be uniformly spaced.
void write_sinogram(const std::string& path, const Sinogram& sino);
Sinogram read_sinogram(const std::string& path);

/// 8-bit binary PGM (P5); pixel byte = round(255 * clamp(v, 0, 1)).
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

/// Images by extension: .pgm or CSV otherwise.
void write_image(const std::string& path, const Image& img);
Image read_image(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Little-endian: "LACTMDL1", u32 count, then per tensor u32 name length, name
/// bytes, u32 rank, u64 dims, float64 values.
void write_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors read_tensors(const std::string& path);

std::string format_double(double v);

}  // namespace lact::io
