#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/ops.hpp"
#include "lact/radon.hpp"

namespace lact {

/// Ramp filter modulated by a squared sinc; alpha controls how much high
/// frequency content is removed (alpha == 0 is the pure ramp).
struct FilterSpec {
  double alpha = 0.0;
  std::size_t detector_bins = 0;
};

/// r_alpha(omega) = |2/alpha * sin(alpha*omega/2)| * sinc^2(alpha*omega/2), |omega| at alpha == 0.
double filter_response_at(double alpha, double omega);

/// Angular frequency of FFT bin k for length d, wrapped to [-pi, pi).
double bin_frequency(std::size_t k, std::size_t d);

/// Response sampled on the d FFT bins (standard bin order).
std::vector<double> filter_response(const FilterSpec& spec);

/// Multiplies the spectrum of each length-D row by a real even response.
///
/// Owns FFT plans and scratch buffers, so one instance must not be used from
/// two threads at once; construct one per worker.
class RowFilter {
 public:
  explicit RowFilter(std::vector<double> response);
  explicit RowFilter(const FilterSpec& spec) : RowFilter(filter_response(spec)) {}
  ~RowFilter();
  RowFilter(const RowFilter&) = delete;
  RowFilter& operator=(const RowFilter&) = delete;

  std::size_t length() const { return response_.size(); }
  const std::vector<double>& response() const { return response_; }

  /// in and out hold whole rows (size a multiple of length()); they may alias.
  void apply(std::span<const double> in, std::span<double> out);

 private:
  struct Plans;
  std::vector<double> response_;
  std::unique_ptr<Plans> plans_;
};

Sinogram apply_filter(const Sinogram& sino, const FilterSpec& spec);

/// Tape-aware filter over [rows, D] tensors; self-adjoint, so the adjoint is the filter itself.
LinearOp filter_operator(std::size_t rows, const FilterSpec& spec);

}  // namespace lact
