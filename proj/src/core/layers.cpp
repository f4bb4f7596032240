#include "rhm/core/layers.hpp"

namespace rhm::core {

template <class T>
LayerParamsT<T> make_linear(int in_dim, int out_dim, Rng& rng) {
  LayerParamsT<T> l;
  l.kind = LayerKind::Linear;
  l.weight = he_uniform<T>({out_dim, in_dim}, in_dim, rng);
  l.bias = TensorT<T>::zeros({out_dim});
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <class T>
LayerParamsT<T> make_conv1d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng) {
  LayerParamsT<T> l;
  l.kind = LayerKind::Conv1d;
  l.weight = he_uniform<T>({out_ch, in_ch, k}, in_ch * k, rng);
  l.bias = TensorT<T>::zeros({out_ch});
  l.stride = stride;
  l.padding = pad;
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <class T>
LayerParamsT<T> make_conv2d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng) {
  LayerParamsT<T> l;
  l.kind = LayerKind::Conv2d;
  l.weight = he_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng);
  l.bias = TensorT<T>::zeros({out_ch});
  l.stride = stride;
  l.padding = pad;
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <class T>
LayerParamsT<T> make_transposed_conv2d(int in_ch, int out_ch, int k, int stride,
                                       int pad, Rng& rng) {
  LayerParamsT<T> l;
  l.kind = LayerKind::TransposedConv2d;
  l.weight = he_uniform<T>({in_ch, out_ch, k, k}, in_ch * k * k, rng);
  l.bias = TensorT<T>::zeros({out_ch});
  l.stride = stride;
  l.padding = pad;
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <class T>
LayerParamsT<T> make_layer_norm(int dim) {
  LayerParamsT<T> l;
  l.kind = LayerKind::LayerNorm;
  l.weight = TensorT<T>::full({dim}, T(1));
  l.bias = TensorT<T>::zeros({dim});
  l.weight.set_requires_grad(true);
  l.bias.set_requires_grad(true);
  return l;
}

template <class T>
TensorT<T> forward(const LayerParamsT<T>& layer, const TensorT<T>& input) {
  switch (layer.kind) {
    case LayerKind::Linear:
      return linear_op(input, layer.weight, layer.bias);
    case LayerKind::Conv1d:
      return conv1d_op(input, layer.weight, layer.bias, layer.stride, layer.padding);
    case LayerKind::Conv2d:
      return conv2d_op(input, layer.weight, layer.bias, layer.stride, layer.padding);
    case LayerKind::TransposedConv2d:
      return conv_transpose2d_op(input, layer.weight, layer.bias, layer.stride,
                                 layer.padding);
    case LayerKind::LayerNorm:
      return layer_norm_op(input, layer.weight, layer.bias);
  }
  throw std::logic_error("unknown layer kind");
}

template <class T>
std::vector<TensorT<T>> layer_tensors(const LayerParamsT<T>& layer) {
  return {layer.weight, layer.bias};
}

#define RHM_INSTANTIATE_LAYERS(T)                                                   \
  template LayerParamsT<T> make_linear<T>(int, int, Rng&);                          \
  template LayerParamsT<T> make_conv1d<T>(int, int, int, int, int, Rng&);           \
  template LayerParamsT<T> make_conv2d<T>(int, int, int, int, int, Rng&);           \
  template LayerParamsT<T> make_transposed_conv2d<T>(int, int, int, int, int, Rng&); \
  template LayerParamsT<T> make_layer_norm<T>(int);                                 \
  template TensorT<T> forward(const LayerParamsT<T>&, const TensorT<T>&);           \
  template std::vector<TensorT<T>> layer_tensors(const LayerParamsT<T>&);

RHM_INSTANTIATE_LAYERS(float)
RHM_INSTANTIATE_LAYERS(double)
#undef RHM_INSTANTIATE_LAYERS

}  // namespace rhm::core
