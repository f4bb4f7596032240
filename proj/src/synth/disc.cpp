#include <stdexcept>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

namespace {

/// One patch discriminator: stride-2 convs with LeakyReLU, stride-1 head.
template <class T>
void run_patch(const std::vector<core::LayerParamsT<T>>& layers, core::TensorT<T> x,
               core::TensorT<T>& score, std::vector<core::TensorT<T>>& feats) {
  for (size_t i = 0; i + 1 < layers.size(); ++i) {
    x = core::leaky_relu(core::forward(layers[i], x));
    feats.push_back(x);
  }
  score = core::forward(layers.back(), x);
}

}  // namespace

template <class T>
DiscOutT<T> discriminate(const DiscriminatorModelT<T>& model, const core::TensorT<T>& image,
                         const core::TensorT<T>& condition) {
  if (image.rank() != 3 || condition.rank() != 3 || image.dim(1) != condition.dim(1) ||
      image.dim(2) != condition.dim(2))
    throw std::invalid_argument("discriminate: image " + core::shape_str(image.shape()) +
                                " vs condition " + core::shape_str(condition.shape()));
  DiscOutT<T> out;
  run_patch(model.d1, core::concat(std::vector<core::TensorT<T>>{image, condition}, 0), out.score1, out.feats1);
  run_patch(model.d2,
            core::concat(std::vector<core::TensorT<T>>{core::avg_pool2d(image),
                                                      core::avg_pool2d(condition)},
                       0),
            out.score2, out.feats2);
  return out;
}

template <class T>
core::TensorT<T> discriminator_loss(const DiscriminatorModelT<T>& disc,
                                    const core::TensorT<T>& fake_detached,
                                    const core::TensorT<T>& real,
                                    const core::TensorT<T>& condition, GanFlavor flavor) {
  auto on_fake = discriminate(disc, fake_detached, condition);
  auto on_real = discriminate(disc, real, condition);
  auto zeros = [](const core::TensorT<T>& s) {
    return core::TensorT<T>::zeros(s.shape());
  };
  auto ones = [](const core::TensorT<T>& s) {
    return core::TensorT<T>::full(s.shape(), T(1));
  };
  if (flavor == GanFlavor::LeastSquares) {
    auto real_term = core::add(core::mse(on_real.score1, ones(on_real.score1)),
                               core::mse(on_real.score2, ones(on_real.score2)));
    auto fake_term = core::add(core::mse(on_fake.score1, zeros(on_fake.score1)),
                               core::mse(on_fake.score2, zeros(on_fake.score2)));
    return core::add(real_term, fake_term);
  }
  // Hinge: mean relu(1 - D(real)) + mean relu(1 + D(fake)) per scale.
  auto hinge_real = [&](const core::TensorT<T>& s) {
    return core::mean_all(core::relu(core::sub(ones(s), s)));
  };
  auto hinge_fake = [&](const core::TensorT<T>& s) {
    return core::mean_all(core::relu(core::add_scalar(s, T(1))));
  };
  return core::add(core::add(hinge_real(on_real.score1), hinge_real(on_real.score2)),
                   core::add(hinge_fake(on_fake.score1), hinge_fake(on_fake.score2)));
}

#define RHM_INSTANTIATE_SYNTH_DISC(T)                                                  \
  template DiscOutT<T> discriminate<T>(const DiscriminatorModelT<T>&,                  \
                                       const core::TensorT<T>&,                        \
                                       const core::TensorT<T>&);                       \
  template core::TensorT<T> discriminator_loss<T>(                                     \
      const DiscriminatorModelT<T>&, const core::TensorT<T>&, const core::TensorT<T>&, \
      const core::TensorT<T>&, GanFlavor);

RHM_INSTANTIATE_SYNTH_DISC(float)
RHM_INSTANTIATE_SYNTH_DISC(double)
#undef RHM_INSTANTIATE_SYNTH_DISC

}  // namespace rhm::synth
