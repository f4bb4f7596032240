#pragma once

#include <string>
#include <vector>

#include "rhm/core/layers.hpp"
#include "rhm/core/ops.hpp"

namespace rhm::synth::detail {

/// Conv/linear stack with ReLU between layers (none after the last).
template <class T>
core::TensorT<T> relu_stack(const std::vector<core::LayerParamsT<T>>& layers,
                            core::TensorT<T> x) {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = core::forward(layers[i], x);
    if (i + 1 < layers.size()) x = core::relu(x);
  }
  return x;
}

/// Sum a [C,H,W] tensor over channels -> [1, H*W].
template <class T>
core::TensorT<T> channel_sum(const core::TensorT<T>& x) {
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto ones = core::TensorT<T>::full({1, c}, T(1));
  return core::matmul(ones, core::reshape(x, {c, hw}));
}

/// Row `k` of a rank-2 tensor as [1, n] (one-hot selector matmul).
template <class T>
core::TensorT<T> select_row(const core::TensorT<T>& x, int k) {
  std::vector<T> sel(static_cast<size_t>(x.dim(0)), T(0));
  sel[static_cast<size_t>(k)] = T(1);
  return core::matmul(core::TensorT<T>::from({1, x.dim(0)}, std::move(sel)), x);
}

/// Multiply every channel of x [C,H,W] by the site map m [1, H*W].
template <class T>
core::TensorT<T> site_mul(const core::TensorT<T>& x, const core::TensorT<T>& m) {
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto ones = core::TensorT<T>::full({c, 1}, T(1));
  auto tiled = core::matmul(ones, m);  // [c, hw]
  return core::reshape(core::mul(core::reshape(x, {c, hw}), tiled), x.shape());
}

/// Zero bias for a conv whose kernel is a graph tensor.
template <class T>
core::TensorT<T> zero_bias(int channels) {
  return core::TensorT<T>::zeros({channels});
}

std::string layer_tag(const char* stack, size_t i, const char* leaf);

}  // namespace rhm::synth::detail
