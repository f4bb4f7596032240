#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

template <class T>
WarpedT<T> warp(const core::TensorT<T>& image, std::span<const T> flow,
                std::span<const T> visibility) {
  if (image.rank() != 3)
    throw std::invalid_argument("warp: image must be [C,H,W], got " +
                                core::shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  const size_t hw = static_cast<size_t>(h) * static_cast<size_t>(w);
  if (flow.size() != hw * 2)
    throw std::invalid_argument("warp: flow size " + std::to_string(flow.size()) +
                                " for " + std::to_string(h) + "x" + std::to_string(w));
  if (visibility.size() != hw)
    throw std::invalid_argument("warp: visibility size " +
                                std::to_string(visibility.size()) + " for " +
                                std::to_string(h) + "x" + std::to_string(w));
  for (T v : flow)
    if (!std::isfinite(static_cast<double>(v)))
      throw std::invalid_argument("warp: non-finite flow");

  WarpedT<T> out;
  out.image = core::bilinear_warp(image, flow);
  out.attention.resize(hw);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          sum += static_cast<double>(visibility[static_cast<size_t>(yy) *
                                                    static_cast<size_t>(w) +
                                                static_cast<size_t>(xx)]);
          ++cnt;
        }
      }
      double a = sum / static_cast<double>(cnt);
      out.attention[static_cast<size_t>(y) * static_cast<size_t>(w) +
                    static_cast<size_t>(x)] =
          static_cast<T>(std::min(1.0, std::max(0.0, a)));
    }
  }
  return out;
}

template <class T>
core::TensorT<T> matting_compose(const core::TensorT<T>& color_mask,
                                 std::span<const T> attention,
                                 const core::TensorT<T>& reference) {
  if (color_mask.shape() != reference.shape())
    throw std::invalid_argument("matting_compose: shapes differ, " +
                                core::shape_str(color_mask.shape()) + " vs " +
                                core::shape_str(reference.shape()));
  const size_t n = static_cast<size_t>(color_mask.size());
  const size_t m = attention.size();
  if (m == 0 || n % m != 0)
    throw std::invalid_argument("matting_compose: attention size " + std::to_string(m) +
                                " incompatible with " +
                                core::shape_str(color_mask.shape()));
  std::vector<T> a(n), one_minus(n);
  bool clamped = false;
  for (size_t i = 0; i < n; ++i) {
    T v = attention[i % m];
    if (v < T(0) || v > T(1)) {
      clamped = true;
      v = std::min(T(1), std::max(T(0), v));
    }
    a[i] = v;
    one_minus[i] = T(1) - v;
  }
  if (clamped)
    std::cerr << "matting_compose: attention outside [0,1], clamped\n";
  auto shape = color_mask.shape();
  auto am = core::TensorT<T>::from(shape, std::move(a));
  auto cm = core::TensorT<T>::from(shape, std::move(one_minus));
  return core::add(core::mul(color_mask, cm), core::mul(reference, am));
}

#define RHM_INSTANTIATE_SYNTH_WARP(T)                                               \
  template WarpedT<T> warp<T>(const core::TensorT<T>&, std::span<const T>,          \
                              std::span<const T>);                                  \
  template core::TensorT<T> matting_compose<T>(const core::TensorT<T>&,             \
                                               std::span<const T>,                  \
                                               const core::TensorT<T>&);

RHM_INSTANTIATE_SYNTH_WARP(float)
RHM_INSTANTIATE_SYNTH_WARP(double)
#undef RHM_INSTANTIATE_SYNTH_WARP

}  // namespace rhm::synth
