#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vfd::num {

using Shape = std::vector<std::size_t>;

// Cache-line aligned storage. Eigen picks its vectorized peeling from the
// data address, so fixed alignment keeps results bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major double tensor with an optional gradient buffer.
//
// Tensor is a handle: copies alias the same storage, which is what lets a
// Tape route gradients back into parameters. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->values.size(); }
  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return impl_->values; }
  std::span<const double> values() const { return impl_->values; }
  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }

  double& operator[](std::size_t i) { return impl_->values[i]; }
  double operator[](std::size_t i) const { return impl_->values[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  // A gradient buffer exists once something has been accumulated into it
  // (or it was explicitly requested through grad()).
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void drop_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    Buffer values;
    Buffer grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of executed primitives. backward() replays the record in
// reverse, so each recorded use of a tensor contributes exactly once.
class Tape {
 public:
  Tape() = default;
  // A tape that records nothing; ops evaluate values only.
  static Tape inference();

  bool recording() const { return recording_; }
  // True when an op on these inputs must record a backward step.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;

  void record(const char* op, Tensor output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and propagates. Intermediate gradients are
  // reset first; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Name and index of the first recorded output holding NaN/Inf, in
  // execution order.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Entry {
    const char* op;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

void zero_grads(ParameterList& params);

}  // namespace vfd::num
