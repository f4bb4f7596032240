#pragma once

#include <string>
#include <vector>

#include "rhm/core/ops.hpp"
#include "rhm/core/tensor.hpp"

namespace rhm::core {

enum class LayerKind { Linear, Conv1d, Conv2d, TransposedConv2d, LayerNorm };

/// Parameter bundle for one layer. `weight`/`bias` meaning depends on kind;
/// for LayerNorm they are gain/offset over the last axis.
template <class T>
struct LayerParamsT {
  LayerKind kind = LayerKind::Linear;
  TensorT<T> weight;
  TensorT<T> bias;
  int stride = 1;
  int padding = 0;
};

using LayerParams = LayerParamsT<float>;

template <class T> LayerParamsT<T> make_linear(int in_dim, int out_dim, Rng& rng);
template <class T>
LayerParamsT<T> make_conv1d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng);
template <class T>
LayerParamsT<T> make_conv2d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng);
template <class T>
LayerParamsT<T> make_transposed_conv2d(int in_ch, int out_ch, int k, int stride,
                                       int pad, Rng& rng);
template <class T> LayerParamsT<T> make_layer_norm(int dim);

/// Run one layer. Shape problems throw with both shapes spelled out.
template <class T>
TensorT<T> forward(const LayerParamsT<T>& layer, const TensorT<T>& input);

/// The layer's trainable tensors, weight first.
template <class T>
std::vector<TensorT<T>> layer_tensors(const LayerParamsT<T>& layer);

}  // namespace rhm::core
