#include <array>
#include <stdexcept>
#include <string>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

namespace {

constexpr std::array<int, kDecoderDepth> kStreamChannels = {48, 32, 16};
constexpr int kFeatChannels = 16;   // q_y / q_l width
constexpr int kActChannels = 8;     // activation-encoder width
constexpr int kJointChannels = 8;   // information-exchange output width
constexpr int kFuseDim = 128;       // gated fusion vector width

// Pyramid-kernel input widths: the query landmark image, then the running
// pyramid feature.
constexpr std::array<int, kDecoderDepth> kPyramidIn = {1, kPyramidChannels,
                                                       kPyramidChannels};

template <class T>
void push(std::vector<core::TensorT<T>>& out, std::vector<core::LayerParamsT<T>>& stack) {
  for (auto& layer : stack)
    for (auto& t : core::layer_tensors(layer)) out.push_back(t);
}

void name_stack(core::NamedTensors& out, const char* tag,
                std::vector<core::LayerParams>& stack) {
  for (size_t i = 0; i < stack.size(); ++i) {
    out.emplace_back(detail::layer_tag(tag, i, "weight"), stack[i].weight);
    out.emplace_back(detail::layer_tag(tag, i, "bias"), stack[i].bias);
  }
}

}  // namespace

namespace detail {
std::string layer_tag(const char* stack, size_t i, const char* leaf) {
  return std::string(stack) + "." + std::to_string(i) + "." + leaf;
}
}  // namespace detail

std::span<const int> decoder_channels() { return kStreamChannels; }

int theta_numel() {
  int n = 0;
  for (int i = 0; i < kDecoderDepth; ++i) {
    n += kPyramidChannels * kPyramidIn[static_cast<size_t>(i)] * 9;  // theta_S
    n += 2 * kStreamChannels[static_cast<size_t>(i)] * kPyramidChannels * 9;
  }
  return n;
}

template <class T>
GeneratorModelT<T> make_generator_model(core::Rng& rng, int img_size, int gate_k,
                                        GateMode gate) {
  if (img_size < 16 || img_size % 16 != 0)
    throw std::invalid_argument("make_generator_model: img_size must be a positive "
                                "multiple of 16, got " + std::to_string(img_size));
  if (gate_k < 1)
    throw std::invalid_argument("make_generator_model: gate_k must be >= 1");

  GeneratorModelT<T> m;
  m.img_size = img_size;
  m.gate_k = gate_k;
  m.gate = gate;

  m.activation = {core::make_conv2d<T>(1, kActChannels, 3, 2, 1, rng),
                  core::make_conv2d<T>(kActChannels, kActChannels, 3, 2, 1, rng)};
  m.image_feat = {core::make_conv2d<T>(3, kFeatChannels, 3, 2, 1, rng),
                  core::make_conv2d<T>(kFeatChannels, kFeatChannels, 3, 2, 1, rng)};
  m.lmk_feat = {core::make_conv2d<T>(1, kFeatChannels, 3, 2, 1, rng),
                core::make_conv2d<T>(kFeatChannels, kFeatChannels, 3, 2, 1, rng)};
  m.exchange = {core::make_conv2d<T>(2 * kFeatChannels, kJointChannels, 1, 1, 0, rng),
                core::make_conv2d<T>(kJointChannels, kJointChannels, 1, 1, 0, rng)};
  m.refine_image = core::make_conv2d<T>(kFeatChannels + kJointChannels, kFeatChannels,
                                        1, 1, 0, rng);
  m.refine_lmk = core::make_conv2d<T>(kFeatChannels + kJointChannels, kFeatChannels,
                                      1, 1, 0, rng);

  const int gate_in = (gate == GateMode::Stack) ? gate_k * kFeatChannels : kFeatChannels;
  m.gate_image = {core::make_conv2d<T>(gate_in, kFeatChannels, 1, 1, 0, rng),
                  core::make_conv2d<T>(kFeatChannels, kFeatChannels, 1, 1, 0, rng)};
  m.gate_lmk = {core::make_conv2d<T>(gate_in, kFeatChannels, 1, 1, 0, rng),
                core::make_conv2d<T>(kFeatChannels, kFeatChannels, 1, 1, 0, rng)};

  const int side = img_size / 16;  // spatial side after the two reduce convs
  m.reduce_image = {core::make_conv2d<T>(kFeatChannels, 32, 3, 2, 1, rng),
                    core::make_conv2d<T>(32, 32, 3, 2, 1, rng),
                    core::make_linear<T>(32 * side * side, kAppearanceDim, rng)};
  m.reduce_lmk = {core::make_conv2d<T>(kFeatChannels, 32, 3, 2, 1, rng),
                  core::make_conv2d<T>(32, 32, 3, 2, 1, rng),
                  core::make_linear<T>(32 * side * side, kLayoutDim, rng)};

  m.fuse_image_w = core::he_uniform<T>({kFuseDim, kAppearanceDim}, kAppearanceDim, rng);
  m.fuse_image_w.set_requires_grad(true);
  m.fuse_lmk = core::make_linear<T>(kLayoutDim, kFuseDim, rng);
  m.fuse_out = {core::make_linear<T>(kFuseDim, kFuseDim, rng),
                core::make_linear<T>(kFuseDim, theta_numel(), rng)};
  // Keep the freshly fused kernels near their bias: shrink the head's weight
  // and give the bias kernel-sized He values so theta works before training.
  auto& head = m.fuse_out.back();
  for (auto& v : head.weight.data()) v *= T(0.02);
  {
    auto bias = head.bias.data();
    size_t at = 0;
    auto fill = [&](int count, int fan) {
      core::TensorT<T> block = core::he_uniform<T>({count}, fan, rng);
      for (int i = 0; i < count; ++i) bias[at++] = block.data()[static_cast<size_t>(i)];
    };
    for (int i = 0; i < kDecoderDepth; ++i) {
      const int cin = kPyramidIn[static_cast<size_t>(i)];
      fill(kPyramidChannels * cin * 9, cin * 9);
    }
    for (int i = 0; i < kDecoderDepth; ++i) {
      const int c = kStreamChannels[static_cast<size_t>(i)];
      fill(2 * c * kPyramidChannels * 9, kPyramidChannels * 9);
    }
  }

  const int coarse = img_size / 8;
  m.stream_init = core::make_linear<T>(kAppearanceDim,
                                       kStreamChannels[0] * coarse * coarse, rng);
  for (int i = 0; i < kDecoderDepth; ++i) {
    const int cin = kPyramidIn[static_cast<size_t>(i)] == 1 ? 3 : kPyramidChannels;
    m.pyr_proj.push_back(core::make_conv2d<T>(cin, kPyramidChannels, 3, 2, 1, rng));
    m.pyr_match.push_back(core::make_conv2d<T>(cin, kPyramidChannels, 3, 2, 1, rng));
  }
  for (int i = 0; i < kDecoderDepth; ++i) {
    const int c = kStreamChannels[static_cast<size_t>(i)];
    for (auto* dst : {&m.spade_proj_gamma, &m.spade_proj_beta, &m.spade_match_gamma,
                      &m.spade_match_beta}) {
      auto conv = core::make_conv2d<T>(kPyramidChannels, c, 3, 1, 1, rng);
      // Small modulation at init keeps the three-branch sum near 3x the
      // normalized stream.
      for (auto& v : conv.weight.data()) v *= T(0.1);
      dst->push_back(std::move(conv));
    }
  }
  for (int i = 0; i < kDecoderDepth; ++i) {
    const int cin = kStreamChannels[static_cast<size_t>(i)];
    const int cout = (i + 1 < kDecoderDepth) ? kStreamChannels[static_cast<size_t>(i) + 1] : 3;
    m.up.push_back(core::make_transposed_conv2d<T>(cin, cout, 4, 2, 1, rng));
  }
  // Start the RGB head small so the tanh opens near zero instead of saturated.
  for (auto& v : m.up.back().weight.data()) v *= T(0.1);
  return m;
}

template <class T>
DiscriminatorModelT<T> make_discriminator_model(core::Rng& rng) {
  DiscriminatorModelT<T> m;
  for (auto* d : {&m.d1, &m.d2}) {
    *d = {core::make_conv2d<T>(4, 16, 3, 2, 1, rng),
          core::make_conv2d<T>(16, 32, 3, 2, 1, rng),
          core::make_conv2d<T>(32, 1, 3, 1, 1, rng)};
  }
  return m;
}

template <class T>
std::vector<core::TensorT<T>> generator_tensors(GeneratorModelT<T>& m) {
  std::vector<core::TensorT<T>> out;
  push(out, m.activation);
  push(out, m.image_feat);
  push(out, m.lmk_feat);
  push(out, m.exchange);
  for (auto& t : core::layer_tensors(m.refine_image)) out.push_back(t);
  for (auto& t : core::layer_tensors(m.refine_lmk)) out.push_back(t);
  push(out, m.gate_image);
  push(out, m.gate_lmk);
  push(out, m.reduce_image);
  push(out, m.reduce_lmk);
  out.push_back(m.fuse_image_w);
  for (auto& t : core::layer_tensors(m.fuse_lmk)) out.push_back(t);
  push(out, m.fuse_out);
  for (auto& t : core::layer_tensors(m.stream_init)) out.push_back(t);
  push(out, m.pyr_proj);
  push(out, m.pyr_match);
  push(out, m.spade_proj_gamma);
  push(out, m.spade_proj_beta);
  push(out, m.spade_match_gamma);
  push(out, m.spade_match_beta);
  push(out, m.up);
  return out;
}

template <class T>
std::vector<core::TensorT<T>> discriminator_tensors(DiscriminatorModelT<T>& m) {
  std::vector<core::TensorT<T>> out;
  push(out, m.d1);
  push(out, m.d2);
  return out;
}

core::NamedTensors generator_named_tensors(GeneratorModel& m) {
  core::NamedTensors out;
  name_stack(out, "ea", m.activation);
  name_stack(out, "qy", m.image_feat);
  name_stack(out, "ql", m.lmk_feat);
  name_stack(out, "xch", m.exchange);
  out.emplace_back("rfy.weight", m.refine_image.weight);
  out.emplace_back("rfy.bias", m.refine_image.bias);
  out.emplace_back("rfl.weight", m.refine_lmk.weight);
  out.emplace_back("rfl.bias", m.refine_lmk.bias);
  name_stack(out, "gy", m.gate_image);
  name_stack(out, "gl", m.gate_lmk);
  name_stack(out, "ry", m.reduce_image);
  name_stack(out, "rl", m.reduce_lmk);
  out.emplace_back("fi.weight", m.fuse_image_w);
  out.emplace_back("fl.weight", m.fuse_lmk.weight);
  out.emplace_back("fl.bias", m.fuse_lmk.bias);
  name_stack(out, "fp", m.fuse_out);
  out.emplace_back("si.weight", m.stream_init.weight);
  out.emplace_back("si.bias", m.stream_init.bias);
  name_stack(out, "pyp", m.pyr_proj);
  name_stack(out, "pym", m.pyr_match);
  name_stack(out, "spg", m.spade_proj_gamma);
  name_stack(out, "spb", m.spade_proj_beta);
  name_stack(out, "smg", m.spade_match_gamma);
  name_stack(out, "smb", m.spade_match_beta);
  name_stack(out, "up", m.up);
  return out;
}

core::NamedTensors discriminator_named_tensors(DiscriminatorModel& m) {
  core::NamedTensors out;
  name_stack(out, "d1", m.d1);
  name_stack(out, "d2", m.d2);
  return out;
}

template <class T>
core::TensorT<T> landmark_tensor(const LandmarkImage& image) {
  std::vector<T> px(image.pixels.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = static_cast<T>(image.pixels[i]);
  return core::TensorT<T>::from({1, image.height, image.width}, std::move(px));
}

#define RHM_INSTANTIATE_SYNTH_MODEL(T)                                                 \
  template GeneratorModelT<T> make_generator_model<T>(core::Rng&, int, int, GateMode); \
  template DiscriminatorModelT<T> make_discriminator_model<T>(core::Rng&);             \
  template std::vector<core::TensorT<T>> generator_tensors<T>(GeneratorModelT<T>&);    \
  template std::vector<core::TensorT<T>> discriminator_tensors<T>(                     \
      DiscriminatorModelT<T>&);                                                        \
  template core::TensorT<T> landmark_tensor<T>(const LandmarkImage&);

RHM_INSTANTIATE_SYNTH_MODEL(float)
RHM_INSTANTIATE_SYNTH_MODEL(double)
#undef RHM_INSTANTIATE_SYNTH_MODEL

}  // namespace rhm::synth
