#include "rhm/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace rhm::core {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

template <class T>
TensorT<T> TensorT<T>::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->data.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return TensorT(std::move(n));
}

template <class T>
TensorT<T> TensorT<T>::full(Shape shape, T value, bool requires_grad) {
  TensorT t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

template <class T>
TensorT<T> TensorT<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape))
    throw std::invalid_argument("data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return TensorT(std::move(n));
}

template <class T>
TensorT<T> TensorT<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <class T>
T TensorT<T>::value() const {
  if (size() != 1)
    throw std::runtime_error("value() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <class T>
TensorT<T> TensorT<T>::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->data = node_->data;
  return TensorT(std::move(n));
}

template <class T>
TensorT<T> TensorT<T>::clone_with_grad() const {
  TensorT t = detach();
  t.set_requires_grad(true);
  return t;
}

template <class T>
void ensure_finite(std::span<const T> v, const std::string& what) {
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw std::runtime_error("non-finite value at index " + std::to_string(i) +
                               " in " + what);
  }
}

namespace {

template <class T>
void topo_visit(TensorNodeT<T>* n, std::unordered_set<TensorNodeT<T>*>& seen,
                std::vector<TensorNodeT<T>*>& order) {
  if (seen.count(n)) return;
  seen.insert(n);
  for (auto& p : n->parents) topo_visit(p.get(), seen, order);
  order.push_back(n);
}

}  // namespace

template <class T>
void backward(const TensorT<T>& output, const TensorT<T>& seed) {
  TensorNodeT<T>* root = output.node().get();
  if (!root) throw std::runtime_error("backward on undefined tensor");
  if (seed.shape() != output.shape())
    throw std::invalid_argument("seed shape " + shape_str(seed.shape()) +
                                " does not match output shape " +
                                shape_str(output.shape()));
  if (root->consumed)
    throw std::runtime_error("backward called twice on the same record; rebuild the graph first");
  ensure_finite(seed, "backward seed");

  std::unordered_set<TensorNodeT<T>*> seen;
  std::vector<TensorNodeT<T>*> order;
  topo_visit(root, seen, order);

  auto& g = root->grad_buf();
  for (size_t i = 0; i < g.size(); ++i) g[i] += seed.data()[i];

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNodeT<T>* n = *it;
    if (!n->backward_fn) continue;
    if (n->consumed)
      throw std::runtime_error("backward reached an already-consumed node; rebuild the graph first");
    if (!n->grad.empty()) n->backward_fn();
    n->consumed = true;
    n->backward_fn = nullptr;  // tape entry cleared
  }
  root->consumed = true;
}

template <class T>
void backward(const TensorT<T>& output) {
  backward(output, TensorT<T>::full(output.shape(), T(1)));
}

namespace detail {

template <class T>
TensorT<T> make_result(Shape shape, std::vector<T> data,
                       std::vector<std::shared_ptr<TensorNodeT<T>>> parents,
                       const std::function<void(TensorNodeT<T>&)>& attach) {
  TensorT<T> t = TensorT<T>::from(std::move(shape), std::move(data));
  bool need = false;
  for (auto& p : parents)
    if (p->requires_grad) need = true;
  if (need) {
    t.node()->requires_grad = true;
    t.node()->parents = std::move(parents);
    attach(*t.node());
  }
  return t;
}

}  // namespace detail

template class TensorT<float>;
template class TensorT<double>;
template void ensure_finite<float>(std::span<const float>, const std::string&);
template void ensure_finite<double>(std::span<const double>, const std::string&);
template void backward<float>(const TensorT<float>&, const TensorT<float>&);
template void backward<double>(const TensorT<double>&, const TensorT<double>&);
template void backward<float>(const TensorT<float>&);
template void backward<double>(const TensorT<double>&);
template TensorT<float> detail::make_result<float>(
    Shape, std::vector<float>, std::vector<std::shared_ptr<TensorNodeT<float>>>,
    const std::function<void(TensorNodeT<float>&)>&);
template TensorT<double> detail::make_result<double>(
    Shape, std::vector<double>, std::vector<std::shared_ptr<TensorNodeT<double>>>,
    const std::function<void(TensorNodeT<double>&)>&);

}  // namespace rhm::core
