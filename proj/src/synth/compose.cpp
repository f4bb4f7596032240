#include <stdexcept>
#include <string>

#include "rhm/synth/synth.hpp"
#include "synth_util.hpp"

namespace rhm::synth {

namespace {

template <class T>
void check_input(const core::TensorT<T>& x, int ch, int size, const char* what) {
  if (x.rank() != 3 || x.dim(0) != ch || x.dim(1) != size || x.dim(2) != size)
    throw std::invalid_argument("compose_frame: " + std::string(what) + " expected [" +
                                std::to_string(ch) + "," + std::to_string(size) + "," +
                                std::to_string(size) + "], got " +
                                core::shape_str(x.shape()));
}

/// (1 + g) * n + b where g and b are convolved from the pyramid feature.
template <class T>
core::TensorT<T> modulate(const core::TensorT<T>& n, const core::TensorT<T>& feat,
                          const core::TensorT<T>& gamma_w, const core::TensorT<T>& gamma_b,
                          const core::TensorT<T>& beta_w, const core::TensorT<T>& beta_b) {
  auto g = core::conv2d_op(feat, gamma_w, gamma_b, 1, 1);
  auto b = core::conv2d_op(feat, beta_w, beta_b, 1, 1);
  return core::add(core::add(n, core::mul(g, n)), b);
}

}  // namespace

template <class T>
core::TensorT<T> compose_frame(const GeneratorModelT<T>& model, const ThetaT<T>& theta,
                               const core::TensorT<T>& e_y,
                               const core::TensorT<T>& query_lmk_image,
                               const core::TensorT<T>& warped_projected,
                               const core::TensorT<T>& warped_matched) {
  const int img = model.img_size;
  check_input(query_lmk_image, 1, img, "query landmark image");
  check_input(warped_projected, 3, img, "warped projected frame");
  check_input(warped_matched, 3, img, "warped matched frame");
  if (e_y.rank() != 1 || e_y.dim(0) != kAppearanceDim)
    throw std::invalid_argument("compose_frame: e_y must be [" +
                                std::to_string(kAppearanceDim) + "], got " +
                                core::shape_str(e_y.shape()));
  if (static_cast<int>(theta.s.size()) != kDecoderDepth ||
      static_cast<int>(theta.gamma.size()) != kDecoderDepth ||
      static_cast<int>(theta.beta.size()) != kDecoderDepth)
    throw std::invalid_argument("compose_frame: theta depth does not match the decoder");

  // Three modulation pyramids, index p at spatial size img / 2^(p+1).
  std::vector<core::TensorT<T>> phi_l, phi_p, phi_m;
  {
    auto l = query_lmk_image;
    auto p = warped_projected;
    auto m = warped_matched;
    for (int i = 0; i < kDecoderDepth; ++i) {
      const auto& s = theta.s[static_cast<size_t>(i)];
      l = core::relu(core::conv2d_op(l, s, detail::zero_bias<T>(s.dim(0)), 2, 1));
      p = core::relu(core::forward(model.pyr_proj[static_cast<size_t>(i)], p));
      m = core::relu(core::forward(model.pyr_match[static_cast<size_t>(i)], m));
      phi_l.push_back(l);
      phi_p.push_back(p);
      phi_m.push_back(m);
    }
  }

  auto stream = core::reshape(core::forward(model.stream_init, e_y),
                              {decoder_channels()[0], img / 8, img / 8});
  for (int i = 0; i < kDecoderDepth; ++i) {
    const size_t pi = static_cast<size_t>(kDecoderDepth - 1 - i);  // matching pyramid level
    const auto& fl = phi_l[pi];
    if (fl.dim(1) != stream.dim(1) || fl.dim(2) != stream.dim(2))
      throw std::invalid_argument(
          "compose_frame: decoder layer " + std::to_string(i) + " stream " +
          core::shape_str(stream.shape()) + " vs pyramid feature " +
          core::shape_str(fl.shape()));
    const size_t li = static_cast<size_t>(i);
    const int c = stream.dim(0);
    auto n = core::instance_norm2d(stream);
    auto branch_l = modulate(n, fl, theta.gamma[li], detail::zero_bias<T>(c),
                             theta.beta[li], detail::zero_bias<T>(c));
    auto branch_p = modulate(n, phi_p[pi], model.spade_proj_gamma[li].weight,
                             model.spade_proj_gamma[li].bias,
                             model.spade_proj_beta[li].weight,
                             model.spade_proj_beta[li].bias);
    auto branch_m = modulate(n, phi_m[pi], model.spade_match_gamma[li].weight,
                             model.spade_match_gamma[li].bias,
                             model.spade_match_beta[li].weight,
                             model.spade_match_beta[li].bias);
    auto summed = core::add(core::add(branch_l, branch_p), branch_m);
    stream = core::forward(model.up[li], core::relu(summed));
  }
  return core::tanh(stream);
}

#define RHM_INSTANTIATE_SYNTH_COMPOSE(T)                                              \
  template core::TensorT<T> compose_frame<T>(                                         \
      const GeneratorModelT<T>&, const ThetaT<T>&, const core::TensorT<T>&,           \
      const core::TensorT<T>&, const core::TensorT<T>&, const core::TensorT<T>&);

RHM_INSTANTIATE_SYNTH_COMPOSE(float)
RHM_INSTANTIATE_SYNTH_COMPOSE(double)
#undef RHM_INSTANTIATE_SYNTH_COMPOSE

}  // namespace rhm::synth
