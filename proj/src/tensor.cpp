#include "lact/tensor.hpp"

#include <sstream>

#include "lact/error.hpp"

namespace lact {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = lact::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  if (lact::numel(shape) != data.size())
    throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  auto s = std::make_shared<detail::Storage>();
  s->shape = std::move(shape);
  s->data = std::move(data);
  s->requires_grad = requires_grad;
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
  return from({m.rows, m.cols}, m.values, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return s_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (s_->grad.empty()) return std::vector<double>(s_->data.size(), 0.0);
  return s_->grad;
}

Tensor Tensor::detach() const { return from(shape(), s_->data, false); }

Matrix Tensor::to_matrix() const {
  if (rank() == 2) return Matrix(dim(0), dim(1), s_->data);
  if (rank() == 3 && dim(0) == 1) return Matrix(dim(1), dim(2), s_->data);
  if (rank() == 4 && dim(0) == 1 && dim(1) == 1) return Matrix(dim(2), dim(3), s_->data);
  throw ShapeError("cannot view tensor " + to_string(shape()) + " as a matrix");
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::vector<std::shared_ptr<detail::Storage>> inputs,
                  std::shared_ptr<detail::Storage> output, BackwardFn backward) {
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("Tape::backward called twice on the same tape");
  if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) throw Error("loss does not depend on any tensor that requires grad");
  consumed_ = true;
  auto& g = loss.storage()->grad_buffer();
  g[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no path to the loss
    it->backward();
  }
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const auto* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

std::shared_ptr<Storage> make_output(Shape shape, bool record) {
  auto s = std::make_shared<Storage>();
  s->data.assign(lact::numel(shape), 0.0);
  s->shape = std::move(shape);
  s->requires_grad = record;
  return s;
}

}  // namespace detail

}  // namespace lact
