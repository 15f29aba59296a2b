#include "vfd/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vfd/errors.hpp"

namespace vfd::num {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : impl_(std::make_shared<Impl>()) {
  impl_->values.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  impl_->values.assign(element_count(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<Impl>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (element_count(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->values.assign(values.begin(), values.end());
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() needs a matrix, got " + to_string(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() needs a matrix, got " + to_string(shape()));
  return impl_->shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
  return *this;
}

std::span<double> Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out = detach();
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::detach() const {
  Tensor out(impl_->shape);
  out.impl_->values = impl_->values;
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(impl_->values.begin(), impl_->values.end(),
                     [](double v) { return std::isfinite(v); });
}

Tape Tape::inference() {
  Tape tape;
  tape.recording_ = false;
  return tape;
}

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(const char* op, Tensor output, std::function<void()> backward) {
  entries_.push_back(Entry{op, std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  for (Entry& e : entries_) e.output.drop_grad();
  Tensor seed = loss;
  if (!seed.requires_grad()) return;
  seed.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Tensor& out = entries_[i].output;
    bool bad = !out.all_finite();
    if (!bad && out.has_grad()) {
      for (double g : out.grad()) {
        if (!std::isfinite(g)) {
          bad = true;
          break;
        }
      }
    }
    if (bad) return std::string(entries_[i].op) + " (record #" + std::to_string(i) + ")";
  }
  return std::nullopt;
}

void zero_grads(ParameterList& params) {
  for (NamedParameter& p : params) p.tensor.zero_grad();
}

}  // namespace vfd::num
