#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhm::core {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// One record on the tape: value, optional grad, and a closure that pushes
/// grad to the parents. backward_fn is one-shot; after a sweep the entry is
/// consumed and cleared.
template <class T>
struct TensorNodeT {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<TensorNodeT<T>>> parents;
  std::function<void()> backward_fn;

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  std::vector<T>& grad_buf() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Shared handle over a tape node. Values are row-major `T`; the scalar type
/// is a template parameter so the finite-difference oracle can run the same
/// kernels in double while training runs float.
template <class T>
class TensorT {
 public:
  using Node = TensorNodeT<T>;
  using value_type = T;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static TensorT zeros(Shape shape, bool requires_grad = false);
  static TensorT full(Shape shape, T value, bool requires_grad = false);
  static TensorT from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static TensorT scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }

  bool requires_grad() const { return node_->requires_grad; }
  TensorT& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<T> grad() { return node_->grad_buf(); }
  std::span<const T> grad_view() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->data.size(), T(0)); }
  void drop_grad() { node_->grad.clear(); }

  /// Scalar value; throws unless the tensor holds exactly one element.
  T value() const;

  /// Fresh leaf tensor with copied values and no graph history.
  TensorT detach() const;
  TensorT clone_with_grad() const;  // detach + requires_grad

  std::shared_ptr<Node>& node() { return node_; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;    // training / checkpoints
using TensorD = TensorT<double>;  // finite-difference oracle instantiation

/// Throws if any element is non-finite. `what` names the tensor in the error.
template <class T>
void ensure_finite(std::span<const T> v, const std::string& what);
template <class T>
void ensure_finite(const TensorT<T>& t, const std::string& what) {
  ensure_finite(t.data(), what);
}

/// Reverse-mode sweep from `output` seeded with `seed` (same shape).
/// Populates grad on every reachable tensor that requires grad, then clears
/// the visited tape entries. A second sweep through the same nodes throws.
template <class T>
void backward(const TensorT<T>& output, const TensorT<T>& seed);
/// Scalar convenience: seeds with 1.
template <class T>
void backward(const TensorT<T>& output);

namespace detail {
template <class T>
TensorT<T> make_result(Shape shape, std::vector<T> data,
                       std::vector<std::shared_ptr<TensorNodeT<T>>> parents,
                       const std::function<void(TensorNodeT<T>&)>& attach);
}

}  // namespace rhm::core
