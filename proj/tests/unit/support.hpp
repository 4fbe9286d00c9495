#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/rng.hpp"
#include "lact/tensor.hpp"

namespace testing {

inline std::vector<double> random_vector(std::size_t n, lact::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline lact::Tensor random_tensor(lact::Shape shape, lact::Rng& rng, bool grad = true) {
  return lact::Tensor::from(shape, random_vector(lact::numel(shape), rng), grad);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

// Central differences of a scalar function of one tensor's data against its
// tape gradient. Returns the worst relative error over the probed indices.
inline double gradient_check(lact::Tensor x, const std::function<lact::Tensor(const lact::Tensor&)>& f,
                             std::vector<std::size_t> probe = {}, double h = 1e-6) {
  // x may already hold gradient from an earlier check; compare the increment.
  const std::vector<double> before = x.grad();
  std::vector<double> analytic;
  {
    lact::Tape tape;
    lact::Tensor loss = f(x);
    tape.backward(loss);
    analytic = x.grad();
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] -= before[i];
  x.zero_grad();
  if (probe.empty())
    for (std::size_t i = 0; i < x.numel(); ++i) probe.push_back(i);
  double worst = 0.0;
  lact::NoGradGuard guard;
  for (auto i : probe) {
    auto d = x.mutable_data();
    const double orig = d[i];
    d[i] = orig + h;
    const double up = f(x).item();
    d[i] = orig - h;
    const double dn = f(x).item();
    d[i] = orig;
    const double numeric = (up - dn) / (2 * h);
    const double g = analytic[i];
    const double scale = std::max({std::abs(numeric), std::abs(g), 1e-6});
    worst = std::max(worst, std::abs(numeric - g) / scale);
  }
  return worst;
}

inline lact::Matrix matrix(std::size_t r, std::size_t c, std::vector<double> v) {
  lact::Matrix m(r, c);
  m.values = std::move(v);
  return m;
}

}  // namespace testing

namespace testing {

inline std::vector<double> vec(const lact::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace testing
