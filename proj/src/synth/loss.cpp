#include <stdexcept>
#include <string>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

PerceptualModel load_perceptual(const std::string& path) {
  auto tensors = core::load_checkpoint(path);
  PerceptualModel m;
  for (size_t i = 0;; ++i) {
    const std::string wname = detail::layer_tag("pct", i, "weight");
    const std::string bname = detail::layer_tag("pct", i, "bias");
    core::Tensor w, b;
    for (auto& [name, t] : tensors) {
      if (name == wname) w = t;
      if (name == bname) b = t;
    }
    if (!w.defined()) break;
    if (!b.defined())
      throw std::runtime_error("load_perceptual: missing " + bname + " in " + path);
    core::LayerParams layer;
    layer.kind = core::LayerKind::Conv2d;
    layer.weight = w;
    layer.bias = b;
    layer.stride = 2;
    layer.padding = 1;
    m.layers.push_back(std::move(layer));
  }
  if (m.layers.empty())
    throw std::runtime_error("load_perceptual: no pct.* tensors in " + path);
  return m;
}

void save_perceptual(const std::string& path, const PerceptualModel& model) {
  core::NamedTensors tensors;
  for (size_t i = 0; i < model.layers.size(); ++i) {
    tensors.emplace_back(detail::layer_tag("pct", i, "weight"), model.layers[i].weight);
    tensors.emplace_back(detail::layer_tag("pct", i, "bias"), model.layers[i].bias);
  }
  core::save_checkpoint(path, tensors);
}

template <class T>
core::TensorT<T> perceptual_loss(const core::TensorT<T>& a, const core::TensorT<T>& b,
                                 const PerceptualModelT<T>* model) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("perceptual_loss: shapes differ, " +
                                core::shape_str(a.shape()) + " vs " +
                                core::shape_str(b.shape()));
  if (model == nullptr || model->layers.empty()) {
    // Image-pyramid stand-in: mean L1 at three scales.
    auto a2 = core::avg_pool2d(a), b2 = core::avg_pool2d(b);
    auto a4 = core::avg_pool2d(a2), b4 = core::avg_pool2d(b2);
    auto sum = core::add(core::add(core::l1(a, b), core::l1(a2, b2)), core::l1(a4, b4));
    return core::scale(sum, T(1) / T(3));
  }
  core::TensorT<T> xa = a, xb = b, sum;
  for (size_t i = 0; i < model->layers.size(); ++i) {
    xa = core::relu(core::forward(model->layers[i], xa));
    xb = core::relu(core::forward(model->layers[i], xb));
    auto term = core::l1(xa, xb);
    sum = i == 0 ? term : core::add(sum, term);
  }
  return core::scale(sum, T(1) / static_cast<T>(model->layers.size()));
}

template <class T>
std::pair<core::TensorT<T>, LossTerms> total_loss(
    const DiscriminatorModelT<T>& disc, const core::TensorT<T>& fake,
    const core::TensorT<T>& target, const core::TensorT<T>& condition,
    const core::TensorT<T>& warped_projected, const core::TensorT<T>& warped_matched,
    std::span<const T> vis_projected, std::span<const T> vis_matched,
    const LossLambdas& lambdas, const PerceptualModelT<T>* perceptual) {
  auto on_fake = discriminate(disc, fake, condition);
  auto on_real = discriminate(disc, target, condition);

  core::TensorT<T> gan;
  if (lambdas.flavor == GanFlavor::LeastSquares) {
    auto ones1 = core::TensorT<T>::full(on_fake.score1.shape(), T(1));
    auto ones2 = core::TensorT<T>::full(on_fake.score2.shape(), T(1));
    gan = core::add(core::mse(on_fake.score1, ones1), core::mse(on_fake.score2, ones2));
  } else {
    gan = core::scale(core::add(core::mean_all(on_fake.score1),
                                core::mean_all(on_fake.score2)),
                      T(-1));
  }

  core::TensorT<T> fm_sum;
  int fm_terms = 0;
  auto add_fm = [&](const std::vector<core::TensorT<T>>& ff,
                    const std::vector<core::TensorT<T>>& fr) {
    for (size_t i = 0; i < ff.size(); ++i) {
      auto term = core::l1(ff[i], fr[i].detach());
      fm_sum = fm_terms == 0 ? term : core::add(fm_sum, term);
      ++fm_terms;
    }
  };
  add_fm(on_fake.feats1, on_real.feats1);
  add_fm(on_fake.feats2, on_real.feats2);
  auto fm = core::scale(fm_sum, static_cast<T>(lambdas.fm) / static_cast<T>(fm_terms));

  auto pct = core::scale(perceptual_loss(fake, target, perceptual),
                         static_cast<T>(lambdas.pct));
  auto wrp = core::scale(core::add(core::masked_l1(warped_projected, target, vis_projected),
                                   core::masked_l1(warped_matched, target, vis_matched)),
                         static_cast<T>(lambdas.wrp));

  auto total = core::add(core::add(core::add(gan, fm), pct), wrp);
  LossTerms terms;
  terms.gan = static_cast<float>(gan.value());
  terms.fm = static_cast<float>(fm.value());
  terms.pct = static_cast<float>(pct.value());
  terms.wrp = static_cast<float>(wrp.value());
  terms.total = static_cast<float>(total.value());
  return {total, terms};
}

#define RHM_INSTANTIATE_SYNTH_LOSS(T)                                                    \
  template core::TensorT<T> perceptual_loss<T>(const core::TensorT<T>&,                  \
                                               const core::TensorT<T>&,                  \
                                               const PerceptualModelT<T>*);              \
  template std::pair<core::TensorT<T>, LossTerms> total_loss<T>(                         \
      const DiscriminatorModelT<T>&, const core::TensorT<T>&, const core::TensorT<T>&,   \
      const core::TensorT<T>&, const core::TensorT<T>&, const core::TensorT<T>&,         \
      std::span<const T>, std::span<const T>, const LossLambdas&,                        \
      const PerceptualModelT<T>*);

RHM_INSTANTIATE_SYNTH_LOSS(float)
RHM_INSTANTIATE_SYNTH_LOSS(double)
#undef RHM_INSTANTIATE_SYNTH_LOSS

}  // namespace rhm::synth
