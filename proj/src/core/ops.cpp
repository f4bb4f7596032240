#include "rhm/core/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

namespace rhm::core {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRowMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapRowMat = Eigen::Map<const RowMat<T>>;

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

template <class T, class F, class DF>
TensorT<T> unary_op(const TensorT<T>& x, F f, DF df_xy) {
  std::vector<T> out(x.size());
  auto xd = x.data();
  for (int64_t i = 0; i < x.size(); ++i) out[i] = f(xd[i]);
  auto xn = x.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn}, [xn, df_xy](TensorNodeT<T>& n) {
        n.backward_fn = [xn, df_xy, &n]() {
          auto& gx = xn->grad_buf();
          for (size_t i = 0; i < gx.size(); ++i)
            gx[i] += n.grad[i] * df_xy(xn->data[i], n.data[i]);
        };
      });
}

}  // namespace

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn},
                                [an, bn](TensorNodeT<T>& n) {
                                  n.backward_fn = [an, bn, &n]() {
                                    if (an->requires_grad) {
                                      auto& g = an->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                    }
                                    if (bn->requires_grad) {
                                      auto& g = bn->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                    }
                                  };
                                });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn},
                                [an, bn](TensorNodeT<T>& n) {
                                  n.backward_fn = [an, bn, &n]() {
                                    if (an->requires_grad) {
                                      auto& g = an->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                    }
                                    if (bn->requires_grad) {
                                      auto& g = bn->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
                                    }
                                  };
                                });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an, bn},
                                [an, bn](TensorNodeT<T>& n) {
                                  n.backward_fn = [an, bn, &n]() {
                                    if (an->requires_grad) {
                                      auto& g = an->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i)
                                        g[i] += n.grad[i] * bn->data[i];
                                    }
                                    if (bn->requires_grad) {
                                      auto& g = bn->grad_buf();
                                      for (size_t i = 0; i < g.size(); ++i)
                                        g[i] += n.grad[i] * an->data[i];
                                    }
                                  };
                                });
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * s;
  auto an = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an},
                                [an, s](TensorNodeT<T>& n) {
                                  n.backward_fn = [an, s, &n]() {
                                    auto& g = an->grad_buf();
                                    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
                                  };
                                });
}

template <class T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + c;
  auto an = a.node();
  return detail::make_result<T>(a.shape(), std::move(out), {an},
                                [an](TensorNodeT<T>& n) {
                                  n.backward_fn = [an, &n]() {
                                    auto& g = an->grad_buf();
                                    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                  };
                                });
}

template <class T>
TensorT<T> tanh(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
TensorT<T> leaky_relu(const TensorT<T>& x, T slope) {
  return unary_op(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
TensorT<T> abs(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::fabs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
TensorT<T> square(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
TensorT<T> sum_all(const TensorT<T>& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  auto xn = x.node();
  return detail::make_result<T>(Shape{1}, {static_cast<T>(acc)}, {xn},
                                [xn](TensorNodeT<T>& n) {
                                  n.backward_fn = [xn, &n]() {
                                    auto& g = xn->grad_buf();
                                    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
                                  };
                                });
}

template <class T>
TensorT<T> mean_all(const TensorT<T>& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  double inv = 1.0 / static_cast<double>(x.size());
  auto xn = x.node();
  return detail::make_result<T>(Shape{1}, {static_cast<T>(acc * inv)}, {xn},
                                [xn, inv](TensorNodeT<T>& n) {
                                  n.backward_fn = [xn, inv, &n]() {
                                    auto& g = xn->grad_buf();
                                    T s = static_cast<T>(inv) * n.grad[0];
                                    for (size_t i = 0; i < g.size(); ++i) g[i] += s;
                                  };
                                });
}

template <class T>
TensorT<T> mse(const TensorT<T>& a, const TensorT<T>& b) {
  return mean_all(square(sub(a, b)));
}

template <class T>
TensorT<T> l1(const TensorT<T>& a, const TensorT<T>& b) {
  return mean_all(abs(sub(a, b)));
}

template <class T>
TensorT<T> masked_l1(const TensorT<T>& a, const TensorT<T>& b, std::span<const T> mask) {
  check_same_shape(a, b, "masked_l1");
  const int64_t n = a.size();
  const int64_t m = static_cast<int64_t>(mask.size());
  if (m == 0 || n % m != 0)
    throw std::invalid_argument("masked_l1: mask size " + std::to_string(m) +
                                " incompatible with " + shape_str(a.shape()));
  double s = 0.0, cnt = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    T mk = mask[i % m];
    if (mk > T(0.5)) {
      s += std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]);
      cnt += 1.0;
    }
  }
  T out = cnt > 0.0 ? static_cast<T>(s / cnt) : T(0);
  auto an = a.node(), bn = b.node();
  std::vector<T> mk(mask.begin(), mask.end());
  return detail::make_result<T>(
      Shape{1}, {out}, {an, bn}, [an, bn, mk = std::move(mk), cnt, m](TensorNodeT<T>& n) {
        n.backward_fn = [an, bn, mk, cnt, m, &n]() {
          if (cnt <= 0.0) return;
          T g = n.grad[0] / static_cast<T>(cnt);
          for (size_t i = 0; i < an->data.size(); ++i) {
            if (mk[i % m] <= T(0.5)) continue;
            T d = an->data[i] - bn->data[i];
            T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
            if (an->requires_grad) an->grad_buf()[i] += sg;
            if (bn->requires_grad) bn->grad_buf()[i] -= sg;
          }
        };
      });
}

template <class T>
TensorT<T> softmax(const TensorT<T>& x, int axis) {
  if (axis < 0 || axis >= x.rank())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) +
                                " out of range for " + shape_str(x.shape()));
  int64_t outer = 1, inner = 1;
  const int nlanes = x.dim(axis);
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);

  std::vector<T> out(x.size());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < inner; ++j) {
      T m = -std::numeric_limits<T>::infinity();
      for (int i = 0; i < nlanes; ++i)
        m = std::max(m, x.data()[(o * nlanes + i) * inner + j]);
      double s = 0.0;
      for (int i = 0; i < nlanes; ++i) {
        int64_t idx = (o * nlanes + i) * inner + j;
        out[idx] = std::exp(x.data()[idx] - m);
        s += out[idx];
      }
      T invs = static_cast<T>(1.0 / s);
      for (int i = 0; i < nlanes; ++i) out[(o * nlanes + i) * inner + j] *= invs;
    }

  auto xn = x.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn}, [xn, outer, nlanes, inner](TensorNodeT<T>& n) {
        n.backward_fn = [xn, outer, nlanes, inner, &n]() {
          auto& gx = xn->grad_buf();
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t j = 0; j < inner; ++j) {
              double dot = 0.0;
              for (int i = 0; i < nlanes; ++i) {
                int64_t idx = (o * nlanes + i) * inner + j;
                dot += static_cast<double>(n.grad[idx]) * n.data[idx];
              }
              for (int i = 0; i < nlanes; ++i) {
                int64_t idx = (o * nlanes + i) * inner + j;
                gx[idx] += n.data[idx] * (n.grad[idx] - static_cast<T>(dot));
              }
            }
        };
      });
}

template <class T>
TensorT<T> reshape(const TensorT<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size())
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " +
                                shape_str(new_shape) + " changes element count");
  std::vector<T> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return detail::make_result<T>(std::move(new_shape), std::move(out), {xn},
                                [xn](TensorNodeT<T>& n) {
                                  n.backward_fn = [xn, &n]() {
                                    auto& g = xn->grad_buf();
                                    for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                  };
                                });
}

template <class T>
TensorT<T> concat(const std::vector<TensorT<T>>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: empty input list");
  const Shape& s0 = xs[0].shape();
  if (axis < 0 || axis >= xs[0].rank())
    throw std::invalid_argument("concat: bad axis");
  Shape out_shape = s0;
  int total = 0;
  for (const auto& t : xs) {
    if (t.rank() != xs[0].rank())
      throw std::invalid_argument("concat: rank mismatch");
    for (int d = 0; d < t.rank(); ++d)
      if (d != axis && t.dim(d) != s0[static_cast<size_t>(d)])
        throw std::invalid_argument("concat: shape " + shape_str(t.shape()) +
                                    " vs " + shape_str(s0));
    total += t.dim(axis);
  }
  out_shape[static_cast<size_t>(axis)] = total;

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

  std::vector<T> out(static_cast<size_t>(outer) * total * inner);
  std::vector<int64_t> offsets;  // per input, offset along axis
  {
    int64_t off = 0;
    for (const auto& t : xs) {
      offsets.push_back(off);
      int64_t blk = static_cast<int64_t>(t.dim(axis)) * inner;
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(t.ptr() + o * blk, blk, out.data() + (o * total + off) * inner);
      off += t.dim(axis);
    }
  }

  std::vector<std::shared_ptr<TensorNodeT<T>>> parents;
  std::vector<int> axdims;
  for (const auto& t : xs) {
    parents.push_back(t.node());
    axdims.push_back(t.dim(axis));
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(out), std::move(parents),
      [outer, inner, total, offsets, axdims](TensorNodeT<T>& n) {
        n.backward_fn = [outer, inner, total, offsets, axdims, &n]() {
          for (size_t pi = 0; pi < n.parents.size(); ++pi) {
            auto& p = n.parents[pi];
            if (!p->requires_grad) continue;
            auto& g = p->grad_buf();
            int64_t blk = static_cast<int64_t>(axdims[pi]) * inner;
            for (int64_t o = 0; o < outer; ++o) {
              const T* src = n.grad.data() + (o * total + offsets[pi]) * inner;
              T* dst = g.data() + o * blk;
              for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
            }
          }
        };
      });
}

template <class T>
TensorT<T> narrow(const TensorT<T>& x, int start, int len) {
  if (x.rank() != 1)
    throw std::invalid_argument("narrow: expects rank-1, got " + shape_str(x.shape()));
  if (start < 0 || len < 0 || start + len > x.dim(0))
    throw std::invalid_argument("narrow: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " +
                                shape_str(x.shape()));
  std::vector<T> out(x.data().begin() + start, x.data().begin() + start + len);
  auto xn = x.node();
  return detail::make_result<T>(Shape{len}, std::move(out), {xn},
                                [xn, start](TensorNodeT<T>& n) {
                                  n.backward_fn = [xn, start, &n]() {
                                    auto& g = xn->grad_buf();
                                    for (size_t i = 0; i < n.grad.size(); ++i)
                                      g[static_cast<size_t>(start) + i] += n.grad[i];
                                  };
                                });
}

template <class T>
TensorT<T> transpose2d(const TensorT<T>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("transpose2d: expects rank-2, got " +
                                shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<T> out(x.data().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = x.data()[static_cast<size_t>(i) * n + j];
  auto xn = x.node();
  return detail::make_result<T>(Shape{n, m}, std::move(out), {xn},
                                [xn, m, n](TensorNodeT<T>& node) {
                                  node.backward_fn = [xn, m, n, &node]() {
                                    auto& g = xn->grad_buf();
                                    for (int i = 0; i < m; ++i)
                                      for (int j = 0; j < n; ++j)
                                        g[static_cast<size_t>(i) * n + j] +=
                                            node.grad[static_cast<size_t>(j) * m + i];
                                  };
                                });
}

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  std::vector<T> out(static_cast<size_t>(m) * nn);
  {
    CMapRowMat<T> A(a.ptr(), m, k), B(b.ptr(), k, nn);
    MapRowMat<T> O(out.data(), m, nn);
    O.noalias() = A * B;
  }
  auto an = a.node(), bn = b.node();
  return detail::make_result<T>(
      Shape{m, nn}, std::move(out), {an, bn}, [an, bn, m, k, nn](TensorNodeT<T>& n) {
        n.backward_fn = [an, bn, m, k, nn, &n]() {
          CMapRowMat<T> G(n.grad.data(), m, nn);
          if (an->requires_grad) {
            CMapRowMat<T> B(bn->data.data(), k, nn);
            MapRowMat<T> GA(an->grad_buf().data(), m, k);
            GA.noalias() += G * B.transpose();
          }
          if (bn->requires_grad) {
            CMapRowMat<T> A(an->data.data(), m, k);
            MapRowMat<T> GB(bn->grad_buf().data(), k, nn);
            GB.noalias() += A.transpose() * G;
          }
        };
      });
}

template <class T>
TensorT<T> add_rowwise(const TensorT<T>& x, const TensorT<T>& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || bias.dim(0) != x.dim(0))
    throw std::invalid_argument("add_rowwise: " + shape_str(x.shape()) + " + " +
                                shape_str(bias.shape()));
  const int m = x.dim(0), nn = x.dim(1);
  std::vector<T> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < nn; ++j)
      out[static_cast<size_t>(i) * nn + j] =
          x.data()[static_cast<size_t>(i) * nn + j] + bias.data()[i];
  auto xn = x.node(), bn = bias.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn, bn}, [xn, bn, m, nn](TensorNodeT<T>& n) {
        n.backward_fn = [xn, bn, m, nn, &n]() {
          if (xn->requires_grad) {
            auto& g = xn->grad_buf();
            for (size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
          }
          if (bn->requires_grad) {
            auto& g = bn->grad_buf();
            for (int i = 0; i < m; ++i) {
              double acc = 0.0;
              for (int j = 0; j < nn; ++j) acc += n.grad[static_cast<size_t>(i) * nn + j];
              g[i] += static_cast<T>(acc);
            }
          }
        };
      });
}

template <class T>
TensorT<T> linear_op(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0) || b.rank() != 1 ||
      b.dim(0) != w.dim(0))
    throw std::invalid_argument("linear: x " + shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()) + ", b " + shape_str(b.shape()));
  const int out_dim = w.dim(0), in_dim = w.dim(1);
  std::vector<T> out(static_cast<size_t>(out_dim));
  for (int o = 0; o < out_dim; ++o) {
    double acc = b.data()[o];
    const T* wr = w.ptr() + static_cast<size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(wr[i]) * x.data()[i];
    out[o] = static_cast<T>(acc);
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_result<T>(
      Shape{out_dim}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, out_dim, in_dim](TensorNodeT<T>& n) {
        n.backward_fn = [xn, wn, bn, out_dim, in_dim, &n]() {
          if (xn->requires_grad) {
            auto& gx = xn->grad_buf();
            for (int i = 0; i < in_dim; ++i) {
              double acc = 0.0;
              for (int o = 0; o < out_dim; ++o)
                acc += static_cast<double>(wn->data[static_cast<size_t>(o) * in_dim + i]) *
                       n.grad[o];
              gx[i] += static_cast<T>(acc);
            }
          }
          if (wn->requires_grad) {
            auto& gw = wn->grad_buf();
            for (int o = 0; o < out_dim; ++o) {
              T go = n.grad[o];
              T* row = gw.data() + static_cast<size_t>(o) * in_dim;
              for (int i = 0; i < in_dim; ++i) row[i] += go * xn->data[i];
            }
          }
          if (bn->requires_grad) {
            auto& gb = bn->grad_buf();
            for (int o = 0; o < out_dim; ++o) gb[o] += n.grad[o];
          }
        };
      });
}

namespace {

struct Conv2dDims {
  int ci, h, w, co, kh, kw, oh, ow, stride, pad;
};

template <class T>
Conv2dDims conv2d_dims(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("conv2d: x " + shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()));
  Conv2dDims d{};
  d.ci = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.co = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.oh < 1 || d.ow < 1)
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                " larger than padded input " + shape_str(x.shape()));
  return d;
}

// cols is [ci*kh*kw, oh*ow] row-major.
template <class T>
void im2col(const T* x, const Conv2dDims& d, T* cols) {
  const int64_t ncols = static_cast<int64_t>(d.oh) * d.ow;
  for (int ci = 0; ci < d.ci; ++ci)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        T* row = cols + ((static_cast<int64_t>(ci) * d.kh + ki) * d.kw + kj) * ncols;
        for (int oh = 0; oh < d.oh; ++oh) {
          int iy = oh * d.stride - d.pad + ki;
          for (int ow = 0; ow < d.ow; ++ow) {
            int ix = ow * d.stride - d.pad + kj;
            row[static_cast<int64_t>(oh) * d.ow + ow] =
                (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
                    ? x[(static_cast<int64_t>(ci) * d.h + iy) * d.w + ix]
                    : T(0);
          }
        }
      }
}

template <class T>
void col2im_add(const T* cols, const Conv2dDims& d, T* gx) {
  const int64_t ncols = static_cast<int64_t>(d.oh) * d.ow;
  for (int ci = 0; ci < d.ci; ++ci)
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const T* row = cols + ((static_cast<int64_t>(ci) * d.kh + ki) * d.kw + kj) * ncols;
        for (int oh = 0; oh < d.oh; ++oh) {
          int iy = oh * d.stride - d.pad + ki;
          if (iy < 0 || iy >= d.h) continue;
          for (int ow = 0; ow < d.ow; ++ow) {
            int ix = ow * d.stride - d.pad + kj;
            if (ix < 0 || ix >= d.w) continue;
            gx[(static_cast<int64_t>(ci) * d.h + iy) * d.w + ix] +=
                row[static_cast<int64_t>(oh) * d.ow + ow];
          }
        }
      }
}

}  // namespace

template <class T>
TensorT<T> conv2d_op(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                     int stride, int pad) {
  Conv2dDims d = conv2d_dims(x, w, stride, pad);
  if (b.rank() != 1 || b.dim(0) != d.co)
    throw std::invalid_argument("conv2d: bias " + shape_str(b.shape()) + " needs [" +
                                std::to_string(d.co) + "]");
  const int krows = d.ci * d.kh * d.kw;
  const int64_t ncols = static_cast<int64_t>(d.oh) * d.ow;
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(krows) * ncols);
  im2col(x.ptr(), d, cols->data());

  std::vector<T> out(static_cast<size_t>(d.co) * ncols);
  {
    CMapRowMat<T> W(w.ptr(), d.co, krows), C(cols->data(), krows, ncols);
    MapRowMat<T> O(out.data(), d.co, ncols);
    O.noalias() = W * C;
    for (int co = 0; co < d.co; ++co) O.row(co).array() += b.data()[co];
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_result<T>(
      Shape{d.co, d.oh, d.ow}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, d, krows, ncols, cols](TensorNodeT<T>& n) {
        n.backward_fn = [xn, wn, bn, d, krows, ncols, cols, &n]() {
          CMapRowMat<T> G(n.grad.data(), d.co, ncols);
          if (wn->requires_grad) {
            CMapRowMat<T> C(cols->data(), krows, ncols);
            MapRowMat<T> GW(wn->grad_buf().data(), d.co, krows);
            GW.noalias() += G * C.transpose();
          }
          if (bn->requires_grad) {
            auto& gb = bn->grad_buf();
            for (int co = 0; co < d.co; ++co) {
              double acc = 0.0;
              for (int64_t i = 0; i < ncols; ++i) acc += G(co, i);
              gb[co] += static_cast<T>(acc);
            }
          }
          if (xn->requires_grad) {
            CMapRowMat<T> W(wn->data.data(), d.co, krows);
            std::vector<T> gcols(static_cast<size_t>(krows) * ncols);
            MapRowMat<T> GC(gcols.data(), krows, ncols);
            GC.noalias() = W.transpose() * G;
            col2im_add(gcols.data(), d, xn->grad_buf().data());
          }
        };
      });
}

namespace {

// zero-pad the last axis of a [C,L] tensor on both sides
template <class T>
TensorT<T> pad_last(const TensorT<T>& x, int pad) {
  const int c = x.dim(0), l = x.dim(1);
  const int lp = l + 2 * pad;
  std::vector<T> out(static_cast<size_t>(c) * lp, T(0));
  for (int ch = 0; ch < c; ++ch)
    std::copy_n(x.ptr() + static_cast<size_t>(ch) * l, l,
                out.data() + static_cast<size_t>(ch) * lp + pad);
  auto xn = x.node();
  return detail::make_result<T>(Shape{c, lp}, std::move(out), {xn},
                                [xn, c, l, lp, pad](TensorNodeT<T>& n) {
                                  n.backward_fn = [xn, c, l, lp, pad, &n]() {
                                    auto& g = xn->grad_buf();
                                    for (int ch = 0; ch < c; ++ch)
                                      for (int i = 0; i < l; ++i)
                                        g[static_cast<size_t>(ch) * l + i] +=
                                            n.grad[static_cast<size_t>(ch) * lp + pad + i];
                                  };
                                });
}

}  // namespace

template <class T>
TensorT<T> conv1d_op(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                     int stride, int pad) {
  if (x.rank() != 2 || w.rank() != 3 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("conv1d: x " + shape_str(x.shape()) + ", w " +
                                shape_str(w.shape()));
  TensorT<T> xp = pad > 0 ? pad_last(x, pad) : x;
  TensorT<T> x3 = reshape(xp, {xp.dim(0), 1, xp.dim(1)});
  TensorT<T> w4 = reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)});
  TensorT<T> out = conv2d_op(x3, w4, b, stride, 0);
  return reshape(out, {out.dim(0), out.dim(2)});
}

template <class T>
TensorT<T> conv_transpose2d_op(const TensorT<T>& x, const TensorT<T>& w,
                               const TensorT<T>& b, int stride, int pad) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(0) != x.dim(0) || w.dim(2) != w.dim(3))
    throw std::invalid_argument("conv_transpose2d: x " + shape_str(x.shape()) +
                                ", w " + shape_str(w.shape()));
  struct {
    int ci, h, w, co, k, oh, ow, stride, pad;
  } d{};
  d.ci = x.dim(0);
  d.h = x.dim(1);
  d.w = x.dim(2);
  d.co = w.dim(1);
  d.k = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  d.oh = (d.h - 1) * stride + d.k - 2 * pad;
  d.ow = (d.w - 1) * stride + d.k - 2 * pad;
  if (d.oh < 1 || d.ow < 1)
    throw std::invalid_argument("conv_transpose2d: empty output for x " +
                                shape_str(x.shape()));
  if (b.rank() != 1 || b.dim(0) != d.co)
    throw std::invalid_argument("conv_transpose2d: bias " + shape_str(b.shape()));

  const int slots = d.co * d.k * d.k;
  const int64_t hw = static_cast<int64_t>(d.h) * d.w;
  std::vector<T> full(static_cast<size_t>(slots) * hw);
  {
    CMapRowMat<T> W(w.ptr(), d.ci, slots), X(x.ptr(), d.ci, hw);
    MapRowMat<T> F(full.data(), slots, hw);
    F.noalias() = W.transpose() * X;
  }
  std::vector<T> out(static_cast<size_t>(d.co) * d.oh * d.ow);
  for (int co = 0; co < d.co; ++co)
    for (int64_t i = 0; i < static_cast<int64_t>(d.oh) * d.ow; ++i)
      out[static_cast<int64_t>(co) * d.oh * d.ow + i] = b.data()[co];
  for (int co = 0; co < d.co; ++co)
    for (int ki = 0; ki < d.k; ++ki)
      for (int kj = 0; kj < d.k; ++kj) {
        const T* row =
            full.data() + ((static_cast<int64_t>(co) * d.k + ki) * d.k + kj) * hw;
        for (int ih = 0; ih < d.h; ++ih) {
          int oy = ih * d.stride - d.pad + ki;
          if (oy < 0 || oy >= d.oh) continue;
          for (int iw = 0; iw < d.w; ++iw) {
            int ox = iw * d.stride - d.pad + kj;
            if (ox < 0 || ox >= d.ow) continue;
            out[(static_cast<int64_t>(co) * d.oh + oy) * d.ow + ox] +=
                row[static_cast<int64_t>(ih) * d.w + iw];
          }
        }
      }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  auto dd = d;
  return detail::make_result<T>(
      Shape{d.co, d.oh, d.ow}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, dd, slots, hw](TensorNodeT<T>& n) {
        n.backward_fn = [xn, wn, bn, dd, slots, hw, &n]() {
          auto d = dd;
          // gather grad into the slot matrix Gg[slot, ihiw]
          std::vector<T> gg(static_cast<size_t>(slots) * hw, T(0));
          for (int co = 0; co < d.co; ++co)
            for (int ki = 0; ki < d.k; ++ki)
              for (int kj = 0; kj < d.k; ++kj) {
                T* row = gg.data() +
                         ((static_cast<int64_t>(co) * d.k + ki) * d.k + kj) * hw;
                for (int ih = 0; ih < d.h; ++ih) {
                  int oy = ih * d.stride - d.pad + ki;
                  if (oy < 0 || oy >= d.oh) continue;
                  for (int iw = 0; iw < d.w; ++iw) {
                    int ox = iw * d.stride - d.pad + kj;
                    if (ox < 0 || ox >= d.ow) continue;
                    row[static_cast<int64_t>(ih) * d.w + iw] =
                        n.grad[(static_cast<int64_t>(co) * d.oh + oy) * d.ow + ox];
                  }
                }
              }
          CMapRowMat<T> GG(gg.data(), slots, hw);
          if (xn->requires_grad) {
            CMapRowMat<T> W(wn->data.data(), d.ci, slots);
            MapRowMat<T> GX(xn->grad_buf().data(), d.ci, hw);
            GX.noalias() += W * GG;
          }
          if (wn->requires_grad) {
            CMapRowMat<T> X(xn->data.data(), d.ci, hw);
            MapRowMat<T> GW(wn->grad_buf().data(), d.ci, slots);
            GW.noalias() += X * GG.transpose();
          }
          if (bn->requires_grad) {
            auto& gb = bn->grad_buf();
            for (int co = 0; co < d.co; ++co) {
              double acc = 0.0;
              const T* g = n.grad.data() + static_cast<int64_t>(co) * d.oh * d.ow;
              for (int64_t i = 0; i < static_cast<int64_t>(d.oh) * d.ow; ++i) acc += g[i];
              gb[co] += static_cast<T>(acc);
            }
          }
        };
      });
}

template <class T>
TensorT<T> layer_norm_op(const TensorT<T>& x, const TensorT<T>& gamma,
                         const TensorT<T>& beta, T eps) {
  const int nl = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != nl || beta.rank() != 1 || beta.dim(0) != nl)
    throw std::invalid_argument("layer_norm: params " + shape_str(gamma.shape()) +
                                " for input " + shape_str(x.shape()));
  const int64_t lanes = x.size() / nl;
  std::vector<T> out(x.size());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(lanes);
  for (int64_t l = 0; l < lanes; ++l) {
    const T* xr = x.ptr() + l * nl;
    double mu = 0.0;
    for (int i = 0; i < nl; ++i) mu += xr[i];
    mu /= nl;
    double var = 0.0;
    for (int i = 0; i < nl; ++i) {
      double dd = xr[i] - mu;
      var += dd * dd;
    }
    var /= nl;
    T is = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[l] = is;
    for (int i = 0; i < nl; ++i) {
      T xh = (xr[i] - static_cast<T>(mu)) * is;
      (*xhat)[l * nl + i] = xh;
      out[l * nl + i] = gamma.data()[i] * xh + beta.data()[i];
    }
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, lanes, nl, xhat, inv_std](TensorNodeT<T>& n) {
        n.backward_fn = [xn, gn, bn, lanes, nl, xhat, inv_std, &n]() {
          for (int64_t l = 0; l < lanes; ++l) {
            const T* g = n.grad.data() + l * nl;
            const T* xh = xhat->data() + l * nl;
            if (gn->requires_grad) {
              auto& gg = gn->grad_buf();
              for (int i = 0; i < nl; ++i) gg[i] += g[i] * xh[i];
            }
            if (bn->requires_grad) {
              auto& gb = bn->grad_buf();
              for (int i = 0; i < nl; ++i) gb[i] += g[i];
            }
            if (xn->requires_grad) {
              double m1 = 0.0, m2 = 0.0;
              for (int i = 0; i < nl; ++i) {
                double gxh = static_cast<double>(g[i]) * gn->data[i];
                m1 += gxh;
                m2 += gxh * xh[i];
              }
              m1 /= nl;
              m2 /= nl;
              auto& gx = xn->grad_buf();
              T is = (*inv_std)[l];
              for (int i = 0; i < nl; ++i) {
                double gxh = static_cast<double>(g[i]) * gn->data[i];
                gx[l * nl + i] += static_cast<T>(is * (gxh - m1 - xh[i] * m2));
              }
            }
          }
        };
      });
}

template <class T>
TensorT<T> instance_norm2d(const TensorT<T>& x, T eps) {
  if (x.rank() != 3)
    throw std::invalid_argument("instance_norm2d: expects [C,H,W], got " +
                                shape_str(x.shape()));
  const int c = x.dim(0);
  const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  std::vector<T> out(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (int ch = 0; ch < c; ++ch) {
    const T* xr = x.ptr() + ch * hw;
    double mu = 0.0;
    for (int64_t i = 0; i < hw; ++i) mu += xr[i];
    mu /= static_cast<double>(hw);
    double var = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      double dd = xr[i] - mu;
      var += dd * dd;
    }
    var /= static_cast<double>(hw);
    T is = static_cast<T>(1.0 / std::sqrt(var + eps));
    (*inv_std)[ch] = is;
    for (int64_t i = 0; i < hw; ++i)
      out[ch * hw + i] = (xr[i] - static_cast<T>(mu)) * is;
  }
  auto xn = x.node();
  return detail::make_result<T>(
      x.shape(), std::move(out), {xn}, [xn, c, hw, inv_std](TensorNodeT<T>& n) {
        n.backward_fn = [xn, c, hw, inv_std, &n]() {
          auto& gx = xn->grad_buf();
          for (int ch = 0; ch < c; ++ch) {
            const T* g = n.grad.data() + ch * hw;
            const T* y = n.data.data() + ch * hw;
            double m1 = 0.0, m2 = 0.0;
            for (int64_t i = 0; i < hw; ++i) {
              m1 += g[i];
              m2 += static_cast<double>(g[i]) * y[i];
            }
            m1 /= static_cast<double>(hw);
            m2 /= static_cast<double>(hw);
            T is = (*inv_std)[ch];
            for (int64_t i = 0; i < hw; ++i)
              gx[ch * hw + i] += static_cast<T>(is * (g[i] - m1 - y[i] * m2));
          }
        };
      });
}

template <class T>
TensorT<T> avg_pool2d(const TensorT<T>& x, int factor) {
  if (x.rank() != 3 || x.dim(1) % factor != 0 || x.dim(2) % factor != 0)
    throw std::invalid_argument("avg_pool2d: " + shape_str(x.shape()) +
                                " not divisible by " + std::to_string(factor));
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int oh = h / factor, ow = w / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  std::vector<T> out(static_cast<size_t>(c) * oh * ow);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += x.data()[(static_cast<int64_t>(ch) * h + y * factor + dy) * w +
                            xx * factor + dx];
        out[(static_cast<int64_t>(ch) * oh + y) * ow + xx] = static_cast<T>(acc) * inv;
      }
  auto xn = x.node();
  return detail::make_result<T>(
      Shape{c, oh, ow}, std::move(out), {xn},
      [xn, c, h, w, oh, ow, factor, inv](TensorNodeT<T>& n) {
        n.backward_fn = [xn, c, h, w, oh, ow, factor, inv, &n]() {
          auto& gx = xn->grad_buf();
          for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < oh; ++y)
              for (int xx = 0; xx < ow; ++xx) {
                T g = n.grad[(static_cast<int64_t>(ch) * oh + y) * ow + xx] * inv;
                for (int dy = 0; dy < factor; ++dy)
                  for (int dx = 0; dx < factor; ++dx)
                    gx[(static_cast<int64_t>(ch) * h + y * factor + dy) * w +
                       xx * factor + dx] += g;
              }
        };
      });
}

template <class T>
TensorT<T> moments_rows(const TensorT<T>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("moments_rows: expects [T,C], got " +
                                shape_str(x.shape()));
  const int t = x.dim(0), c = x.dim(1);
  std::vector<T> out(static_cast<size_t>(2) * c);
  for (int j = 0; j < c; ++j) {
    double mu = 0.0;
    for (int i = 0; i < t; ++i) mu += x.data()[static_cast<size_t>(i) * c + j];
    mu /= t;
    double var = 0.0;
    for (int i = 0; i < t; ++i) {
      double d = x.data()[static_cast<size_t>(i) * c + j] - mu;
      var += d * d;
    }
    var /= t;
    out[j] = static_cast<T>(mu);
    out[c + j] = static_cast<T>(std::sqrt(var));
  }
  auto xn = x.node();
  return detail::make_result<T>(
      Shape{2 * c}, std::move(out), {xn}, [xn, t, c](TensorNodeT<T>& n) {
        n.backward_fn = [xn, t, c, &n]() {
          auto& gx = xn->grad_buf();
          for (int j = 0; j < c; ++j) {
            T mu = n.data[j], sd = n.data[c + j];
            T gmu = n.grad[j] / static_cast<T>(t);
            T gsd = n.grad[c + j];
            for (int i = 0; i < t; ++i) {
              T v = gmu;
              if (sd > T(0))
                v += gsd * (xn->data[static_cast<size_t>(i) * c + j] - mu) /
                     (static_cast<T>(t) * sd);
              gx[static_cast<size_t>(i) * c + j] += v;
            }
          }
        };
      });
}

template <class T>
TensorT<T> bilinear_warp(const TensorT<T>& img, std::span<const T> flow) {
  if (img.rank() != 3)
    throw std::invalid_argument("bilinear_warp: expects [C,H,W], got " +
                                shape_str(img.shape()));
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (static_cast<int64_t>(flow.size()) != static_cast<int64_t>(h) * w * 2)
    throw std::invalid_argument("bilinear_warp: flow size " +
                                std::to_string(flow.size()) + " for " +
                                shape_str(img.shape()));
  ensure_finite(flow, "bilinear_warp flow");
  std::vector<T> out(img.size(), T(0));
  struct Tap {
    int32_t src;
    T wgt;
  };
  auto taps = std::make_shared<std::vector<std::array<Tap, 4>>>(
      static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int64_t pi = static_cast<int64_t>(y) * w + x;
      T sx = x + flow[pi * 2 + 0];
      T sy = y + flow[pi * 2 + 1];
      int x0 = static_cast<int>(std::floor(sx));
      int y0 = static_cast<int>(std::floor(sy));
      T fx = sx - x0, fy = sy - y0;
      std::array<Tap, 4>& tp = (*taps)[pi];
      int k = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          int xs = x0 + dx, ys = y0 + dy;
          T wt = (dx ? fx : T(1) - fx) * (dy ? fy : T(1) - fy);
          bool in = xs >= 0 && xs < w && ys >= 0 && ys < h;
          tp[k++] = {in ? static_cast<int32_t>(ys * w + xs) : -1, wt};
        }
      for (int ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (auto& t : tp)
          if (t.src >= 0) acc += t.wgt * img.data()[static_cast<int64_t>(ch) * h * w + t.src];
        out[static_cast<int64_t>(ch) * h * w + pi] = acc;
      }
    }
  auto xn = img.node();
  return detail::make_result<T>(
      img.shape(), std::move(out), {xn}, [xn, c, h, w, taps](TensorNodeT<T>& n) {
        n.backward_fn = [xn, c, h, w, taps, &n]() {
          auto& gx = xn->grad_buf();
          const int64_t hw = static_cast<int64_t>(h) * w;
          for (int64_t pi = 0; pi < hw; ++pi) {
            const auto& tp = (*taps)[pi];
            for (int ch = 0; ch < c; ++ch) {
              T g = n.grad[ch * hw + pi];
              if (g == T(0)) continue;
              for (const auto& t : tp)
                if (t.src >= 0) gx[ch * hw + t.src] += g * t.wgt;
            }
          }
        };
      });
}

template <class T>
TensorT<T> he_uniform(Shape shape, int fan_in, Rng& rng) {
  double limit = std::sqrt(6.0 / std::max(1, fan_in));
  TensorT<T> t = TensorT<T>::zeros(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

#define RHM_INSTANTIATE_OPS(T)                                                        \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> scale(const TensorT<T>&, T);                                    \
  template TensorT<T> add_scalar(const TensorT<T>&, T);                               \
  template TensorT<T> tanh(const TensorT<T>&);                                        \
  template TensorT<T> sigmoid(const TensorT<T>&);                                     \
  template TensorT<T> relu(const TensorT<T>&);                                        \
  template TensorT<T> leaky_relu(const TensorT<T>&, T);                               \
  template TensorT<T> abs(const TensorT<T>&);                                         \
  template TensorT<T> square(const TensorT<T>&);                                      \
  template TensorT<T> sum_all(const TensorT<T>&);                                     \
  template TensorT<T> mean_all(const TensorT<T>&);                                    \
  template TensorT<T> mse(const TensorT<T>&, const TensorT<T>&);                      \
  template TensorT<T> l1(const TensorT<T>&, const TensorT<T>&);                       \
  template TensorT<T> masked_l1(const TensorT<T>&, const TensorT<T>&,                 \
                                std::span<const T>);                                  \
  template TensorT<T> softmax(const TensorT<T>&, int);                                \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                              \
  template TensorT<T> concat(const std::vector<TensorT<T>>&, int);                    \
  template TensorT<T> narrow(const TensorT<T>&, int, int);                            \
  template TensorT<T> transpose2d(const TensorT<T>&);                                 \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> add_rowwise(const TensorT<T>&, const TensorT<T>&);              \
  template TensorT<T> linear_op(const TensorT<T>&, const TensorT<T>&,                 \
                                const TensorT<T>&);                                   \
  template TensorT<T> conv1d_op(const TensorT<T>&, const TensorT<T>&,                 \
                                const TensorT<T>&, int, int);                         \
  template TensorT<T> conv2d_op(const TensorT<T>&, const TensorT<T>&,                 \
                                const TensorT<T>&, int, int);                         \
  template TensorT<T> conv_transpose2d_op(const TensorT<T>&, const TensorT<T>&,       \
                                          const TensorT<T>&, int, int);               \
  template TensorT<T> layer_norm_op(const TensorT<T>&, const TensorT<T>&,             \
                                    const TensorT<T>&, T);                            \
  template TensorT<T> instance_norm2d(const TensorT<T>&, T);                          \
  template TensorT<T> avg_pool2d(const TensorT<T>&, int);                             \
  template TensorT<T> moments_rows(const TensorT<T>&);                                \
  template TensorT<T> bilinear_warp(const TensorT<T>&, std::span<const T>);           \
  template TensorT<T> he_uniform<T>(Shape, int, Rng&);

RHM_INSTANTIATE_OPS(float)
RHM_INSTANTIATE_OPS(double)
#undef RHM_INSTANTIATE_OPS

}  // namespace rhm::core
