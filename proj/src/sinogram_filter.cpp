#include "lact/sinogram_filter.hpp"

#include <cmath>
#include <complex>
#include <mutex>

#include <fftw3.h>

#include "lact/error.hpp"

namespace lact {

namespace {
// FFTW planning is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

double filter_response_at(double alpha, double omega) {
  if (alpha < 0.0) throw ValueError("filter alpha must be >= 0");
  if (alpha == 0.0) return std::abs(omega);
  const double u = 0.5 * alpha * omega;
  if (u == 0.0) return 0.0;
  const double s = std::sin(u);
  const double sinc = s / u;
  return std::abs(2.0 / alpha * s) * sinc * sinc;
}

double bin_frequency(std::size_t k, std::size_t d) {
  const double dd = static_cast<double>(d);
  const double kk = static_cast<double>(k);
  return 2.0 * k < d ? 2.0 * M_PI * kk / dd : 2.0 * M_PI * (kk - dd) / dd;
}

std::vector<double> filter_response(const FilterSpec& spec) {
  if (spec.detector_bins < 2) throw ValueError("filter needs at least 2 detector bins");
  std::vector<double> r(spec.detector_bins);
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = filter_response_at(spec.alpha, bin_frequency(k, spec.detector_bins));
  return r;
}

struct RowFilter::Plans {
  std::size_t d;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

RowFilter::RowFilter(std::vector<double> response) : response_(std::move(response)), plans_(std::make_unique<Plans>()) {
  const std::size_t d = response_.size();
  if (d < 2) throw ValueError("filter needs at least 2 detector bins");
  for (std::size_t k = 1; k < d; ++k)
    if (response_[k] != response_[d - k]) throw ValueError("row filter response must be even in frequency");
  plans_->d = d;
  std::lock_guard lock(planner_mutex());
  plans_->real = fftw_alloc_real(d);
  plans_->spec = fftw_alloc_complex(d / 2 + 1);
  const int n = static_cast<int>(d);
  plans_->fwd = fftw_plan_dft_r2c_1d(n, plans_->real, plans_->spec, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_c2r_1d(n, plans_->spec, plans_->real, FFTW_ESTIMATE);
}

RowFilter::~RowFilter() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->fwd);
  fftw_destroy_plan(plans_->inv);
  fftw_free(plans_->real);
  fftw_free(plans_->spec);
}

void RowFilter::apply(std::span<const double> in, std::span<double> out) {
  const std::size_t d = plans_->d;
  if (in.size() != out.size() || in.size() % d != 0)
    throw ShapeError("row filter: buffer of " + std::to_string(in.size()) + " values is not a whole number of length-" +
                     std::to_string(d) + " rows");
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t off = 0; off < in.size(); off += d) {
    std::copy_n(in.data() + off, d, plans_->real);
    fftw_execute(plans_->fwd);
    for (std::size_t k = 0; k <= d / 2; ++k) {
      plans_->spec[k][0] *= response_[k];
      plans_->spec[k][1] *= response_[k];
    }
    fftw_execute(plans_->inv);
    for (std::size_t i = 0; i < d; ++i) out[off + i] = plans_->real[i] * inv_d;
  }
}

Sinogram apply_filter(const Sinogram& sino, const FilterSpec& spec) {
  if (sino.values.cols != spec.detector_bins)
    throw ShapeError("apply_filter: sinogram rows have " + std::to_string(sino.values.cols) + " bins, filter expects " +
                     std::to_string(spec.detector_bins));
  RowFilter f(spec);
  Sinogram out = sino;
  f.apply(sino.values.values, out.values.values);
  return out;
}

LinearOp filter_operator(std::size_t rows, const FilterSpec& spec) {
  auto f = std::make_shared<RowFilter>(spec);
  auto map = [f](std::span<const double> in, std::span<double> out) { f->apply(in, out); };
  return register_linear_op({rows, spec.detector_bins}, {rows, spec.detector_bins}, map, map);
}

}  // namespace lact
