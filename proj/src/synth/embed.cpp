#include <stdexcept>
#include <string>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

namespace {

template <class T>
void check_chw(const core::TensorT<T>& x, int ch, int size, const char* what) {
  if (x.rank() != 3 || x.dim(0) != ch || x.dim(1) != size || x.dim(2) != size)
    throw std::invalid_argument(std::string(what) + ": expected [" +
                                std::to_string(ch) + "," + std::to_string(size) + "," +
                                std::to_string(size) + "], got " +
                                core::shape_str(x.shape()));
}

/// Convs with ReLU after each, then flatten into the trailing linear layer.
template <class T>
core::TensorT<T> reduce_stack(const std::vector<core::LayerParamsT<T>>& layers,
                              core::TensorT<T> x) {
  for (const auto& layer : layers) {
    if (layer.kind == core::LayerKind::Linear)
      x = core::reshape(x, {static_cast<int>(x.size())});
    x = core::forward(layer, x);
    if (layer.kind != core::LayerKind::Linear) x = core::relu(x);
  }
  return x;
}

}  // namespace

template <class T>
core::TensorT<T> activation_maps(const GeneratorModelT<T>& model,
                                 const std::vector<core::TensorT<T>>& ref_lmk_images,
                                 const core::TensorT<T>& query_lmk_image) {
  if (ref_lmk_images.empty())
    throw std::invalid_argument("activation_maps: need at least one reference");
  check_chw(query_lmk_image, 1, model.img_size, "activation_maps: query");
  auto fq = detail::relu_stack(model.activation, query_lmk_image);
  std::vector<core::TensorT<T>> logits;
  logits.reserve(ref_lmk_images.size());
  for (size_t k = 0; k < ref_lmk_images.size(); ++k) {
    check_chw(ref_lmk_images[k], 1, model.img_size, "activation_maps: reference");
    auto fk = detail::relu_stack(model.activation, ref_lmk_images[k]);
    logits.push_back(detail::channel_sum(core::mul(fk, fq)));
  }
  return core::softmax(core::concat(logits, 0), 0);
}

template <class T>
std::pair<core::TensorT<T>, core::TensorT<T>> embed_references(
    const GeneratorModelT<T>& model, const std::vector<core::TensorT<T>>& ref_frames,
    const std::vector<core::TensorT<T>>& ref_lmk_images, const core::TensorT<T>& alphas) {
  const int k = static_cast<int>(ref_frames.size());
  if (k == 0) throw std::invalid_argument("embed_references: need at least one reference");
  if (ref_lmk_images.size() != ref_frames.size())
    throw std::invalid_argument("embed_references: " + std::to_string(ref_frames.size()) +
                                " frames vs " + std::to_string(ref_lmk_images.size()) +
                                " landmark images");
  const int sites = (model.img_size / 4) * (model.img_size / 4);
  if (alphas.rank() != 2 || alphas.dim(0) != k || alphas.dim(1) != sites)
    throw std::invalid_argument("embed_references: alphas " +
                                core::shape_str(alphas.shape()) + " do not match K=" +
                                std::to_string(k) + ", sites=" + std::to_string(sites));
  if (model.gate == GateMode::Stack && k != model.gate_k)
    throw std::invalid_argument("embed_references: stacked gate built for K=" +
                                std::to_string(model.gate_k) + ", got K=" +
                                std::to_string(k));

  std::vector<core::TensorT<T>> qy, ql, ry, rl;
  for (int i = 0; i < k; ++i) {
    check_chw(ref_frames[static_cast<size_t>(i)], 3, model.img_size,
              "embed_references: frame");
    check_chw(ref_lmk_images[static_cast<size_t>(i)], 1, model.img_size,
              "embed_references: landmark image");
    auto y = detail::relu_stack(model.image_feat, ref_frames[static_cast<size_t>(i)]);
    auto l = detail::relu_stack(model.lmk_feat, ref_lmk_images[static_cast<size_t>(i)]);
    auto joint = detail::relu_stack(model.exchange, core::concat(std::vector<core::TensorT<T>>{y, l}, 0));
    ry.push_back(core::forward(model.refine_image, core::concat(std::vector<core::TensorT<T>>{y, joint}, 0)));
    rl.push_back(core::forward(model.refine_lmk, core::concat(std::vector<core::TensorT<T>>{l, joint}, 0)));
    qy.push_back(std::move(y));
    ql.push_back(std::move(l));
  }

  auto combine = [&](const std::vector<core::TensorT<T>>& raw,
                     const std::vector<core::TensorT<T>>& refined,
                     const std::vector<core::LayerParamsT<T>>& gate) {
    core::TensorT<T> acc;
    for (int i = 0; i < k; ++i) {
      auto term = detail::site_mul(refined[static_cast<size_t>(i)],
                                   detail::select_row(alphas, i));
      acc = i == 0 ? term : core::add(acc, term);
    }
    core::TensorT<T> gate_in;
    if (model.gate == GateMode::Stack) {
      gate_in = core::concat(raw, 0);
    } else {
      core::TensorT<T> mean;
      for (int i = 0; i < k; ++i)
        mean = i == 0 ? raw[static_cast<size_t>(i)]
                      : core::add(mean, raw[static_cast<size_t>(i)]);
      gate_in = core::scale(mean, T(1) / static_cast<T>(k));
    }
    return core::add(acc, detail::relu_stack(gate, gate_in));
  };

  auto e_y = reduce_stack(model.reduce_image, combine(qy, ry, model.gate_image));
  auto e_l = reduce_stack(model.reduce_lmk, combine(ql, rl, model.gate_lmk));
  return {e_y, e_l};
}

template <class T>
ThetaT<T> fuse(const GeneratorModelT<T>& model, const core::TensorT<T>& e_l,
               const core::TensorT<T>& e_y) {
  if (e_l.rank() != 1 || e_l.dim(0) != kLayoutDim)
    throw std::invalid_argument("fuse: e_l must be [" + std::to_string(kLayoutDim) +
                                "], got " + core::shape_str(e_l.shape()));
  if (e_y.rank() != 1 || e_y.dim(0) != kAppearanceDim)
    throw std::invalid_argument("fuse: e_y must be [" + std::to_string(kAppearanceDim) +
                                "], got " + core::shape_str(e_y.shape()));
  auto gate = core::softmax(core::forward(model.fuse_lmk, e_l), 0);
  auto img = core::reshape(
      core::matmul(model.fuse_image_w, core::reshape(e_y, {kAppearanceDim, 1})),
      {gate.dim(0)});
  auto flat = detail::relu_stack(model.fuse_out, core::mul(gate, img));

  ThetaT<T> theta;
  int at = 0;
  auto slice = [&](core::Shape shape) {
    int n = static_cast<int>(core::shape_numel(shape));
    auto t = core::reshape(core::narrow(flat, at, n), std::move(shape));
    at += n;
    return t;
  };
  const auto channels = decoder_channels();
  for (int i = 0; i < kDecoderDepth; ++i) {
    const int cin = i == 0 ? 1 : kPyramidChannels;
    theta.s.push_back(slice({kPyramidChannels, cin, 3, 3}));
  }
  for (int i = 0; i < kDecoderDepth; ++i) {
    theta.gamma.push_back(slice({channels[static_cast<size_t>(i)], kPyramidChannels, 3, 3}));
    theta.beta.push_back(slice({channels[static_cast<size_t>(i)], kPyramidChannels, 3, 3}));
  }
  return theta;
}

#define RHM_INSTANTIATE_SYNTH_EMBED(T)                                                  \
  template core::TensorT<T> activation_maps<T>(const GeneratorModelT<T>&,               \
                                               const std::vector<core::TensorT<T>>&,    \
                                               const core::TensorT<T>&);                \
  template std::pair<core::TensorT<T>, core::TensorT<T>> embed_references<T>(           \
      const GeneratorModelT<T>&, const std::vector<core::TensorT<T>>&,                  \
      const std::vector<core::TensorT<T>>&, const core::TensorT<T>&);                   \
  template ThetaT<T> fuse<T>(const GeneratorModelT<T>&, const core::TensorT<T>&,        \
                             const core::TensorT<T>&);

RHM_INSTANTIATE_SYNTH_EMBED(float)
RHM_INSTANTIATE_SYNTH_EMBED(double)
#undef RHM_INSTANTIATE_SYNTH_EMBED

}  // namespace rhm::synth
