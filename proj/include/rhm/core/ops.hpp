#pragma once

#include <span>
#include <vector>

#include "rhm/core/rng.hpp"
#include "rhm/core/tensor.hpp"

namespace rhm::core {

// Elementwise (same-shape binary ops; shape mismatch throws).
template <class T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> scale(const TensorT<T>& a, T s);
template <class T> TensorT<T> add_scalar(const TensorT<T>& a, T c);

template <class T> TensorT<T> tanh(const TensorT<T>& x);
template <class T> TensorT<T> sigmoid(const TensorT<T>& x);
template <class T> TensorT<T> relu(const TensorT<T>& x);
template <class T> TensorT<T> leaky_relu(const TensorT<T>& x, T slope = T(0.2));
template <class T> TensorT<T> abs(const TensorT<T>& x);
template <class T> TensorT<T> square(const TensorT<T>& x);

// Reductions (64-bit accumulation).
template <class T> TensorT<T> sum_all(const TensorT<T>& x);
template <class T> TensorT<T> mean_all(const TensorT<T>& x);

// Loss helpers built from the primitives above.
template <class T> TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b);
template <class T> TensorT<T> l1(const TensorT<T>& a, const TensorT<T>& b);
/// Mean L1 over elements where mask > 0.5 (mask is plain data; when shorter
/// than the operands it tiles over the leading axes, e.g. one [H,W] mask for
/// a [C,H,W] image).
template <class T>
TensorT<T> masked_l1(const TensorT<T>& a, const TensorT<T>& b, std::span<const T> mask);

/// Softmax along `axis`; outputs non-negative, summing to one per lane.
template <class T> TensorT<T> softmax(const TensorT<T>& x, int axis);

// Structure.
template <class T> TensorT<T> reshape(const TensorT<T>& x, Shape new_shape);
template <class T> TensorT<T> concat(const std::vector<TensorT<T>>& xs, int axis);
/// Contiguous slice [start, start+len) of a rank-1 tensor.
template <class T> TensorT<T> narrow(const TensorT<T>& x, int start, int len);
template <class T> TensorT<T> transpose2d(const TensorT<T>& x);  // [m,n]->[n,m]

// Linear algebra.
template <class T> TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);  // [m,k]x[k,n]
template <class T> TensorT<T> add_rowwise(const TensorT<T>& x, const TensorT<T>& bias);  // [m,n]+[m]
template <class T> TensorT<T> linear_op(const TensorT<T>& x, const TensorT<T>& w,
                                        const TensorT<T>& b);  // [in]->[out]

// Convolutions. Layouts: conv1d x[C,L] w[Co,Ci,k]; conv2d x[C,H,W]
// w[Co,Ci,kh,kw]; transposed conv2d x[Ci,H,W] w[Ci,Co,k,k].
template <class T>
TensorT<T> conv1d_op(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                     int stride, int pad);
template <class T>
TensorT<T> conv2d_op(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                     int stride, int pad);
template <class T>
TensorT<T> conv_transpose2d_op(const TensorT<T>& x, const TensorT<T>& w,
                               const TensorT<T>& b, int stride, int pad);

// Normalization.
template <class T>
TensorT<T> layer_norm_op(const TensorT<T>& x, const TensorT<T>& gamma,
                         const TensorT<T>& beta, T eps = T(1e-5));
template <class T> TensorT<T> instance_norm2d(const TensorT<T>& x, T eps = T(1e-5));

template <class T> TensorT<T> avg_pool2d(const TensorT<T>& x, int factor = 2);

/// Per-column mean and population std of a [T,C] tensor -> [2C]
/// (means first, stds second). Std of a constant column is exactly zero.
template <class T> TensorT<T> moments_rows(const TensorT<T>& x);

/// Backward bilinear warp: out(p) = img(p + flow(p)), zero outside.
/// flow is plain data, layout [H][W][2] (dx, dy in pixels).
template <class T>
TensorT<T> bilinear_warp(const TensorT<T>& img, std::span<const T> flow);

// Initializers.
template <class T> TensorT<T> he_uniform(Shape shape, int fan_in, Rng& rng);

}  // namespace rhm::core
