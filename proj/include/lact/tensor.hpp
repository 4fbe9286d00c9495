#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lact/matrix.hpp"

namespace lact {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Storage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 tensor with optional participation in the active Tape.
///
/// Values are immutable through the public API once created; only gradients
/// accumulate. Leaves that an optimizer owns expose `mutable_data()` for updates
/// between tapes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_matrix(const Matrix& m, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t dim(std::size_t i) const { return s_->shape.at(i); }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->data.size(); }

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() { return s_->data; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  bool has_grad() const { return !s_->grad.empty(); }
  /// Gradient values; all zeros if nothing has accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() { s_->grad.clear(); }

  /// Same values, detached from any tape.
  Tensor detach() const;
  Matrix to_matrix() const;

  const std::shared_ptr<detail::Storage>& storage() const { return s_; }
  explicit Tensor(std::shared_ptr<detail::Storage> s) : s_(std::move(s)) {}

 private:
  std::shared_ptr<detail::Storage> s_;
};

/// Records differentiable operations executed on the current thread while alive.
///
/// Constructing a Tape makes it the thread's active tape; destroying it restores
/// the previous one. Build one per optimization step, call `backward` once on the
/// scalar loss, then discard it.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::vector<std::shared_ptr<detail::Storage>> inputs;
    std::shared_ptr<detail::Storage> output;
    BackwardFn backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded node once in reverse order.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  static Tape* active();

  void record(std::vector<std::shared_ptr<detail::Storage>> inputs,
              std::shared_ptr<detail::Storage> output, BackwardFn backward);

 private:
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Scoped inference mode: no tape is active inside, so nothing is recorded.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

namespace detail {

/// True when an active tape exists and any input wants a gradient.
bool should_record(std::initializer_list<const Tensor*> inputs);

/// Fresh output storage; marked as requiring grad when `record` is set.
std::shared_ptr<Storage> make_output(Shape shape, bool record);

}  // namespace detail

}  // namespace lact
