#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rhm/core/checkpoint.hpp"
#include "rhm/core/layers.hpp"
#include "rhm/core/rng.hpp"
#include "rhm/geom/geom.hpp"
#include "rhm/render/render.hpp"

namespace rhm::synth {

/// Grayscale raster of the 68-point connectivity polylines, values in [0,1].
struct LandmarkImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // row-major [height*width]
};

/// Re-pose expression landmarks by the inverse alignment (l = R^T (p - T)),
/// project with the camera, and draw the standard 68-point connectivity
/// (jaw, brows, nose, eyes, lips) as anti-aliased one-pixel polylines.
LandmarkImage render_landmark_image(const geom::LandmarkSet& landmarks,
                                    const geom::RigidTransform& pose,
                                    const render::Camera& camera);

/// The 68-point connectivity as index pairs (shared with the drawing oracle).
const std::vector<std::pair<int, int>>& landmark_segments();

/// [1,H,W] tensor view of a landmark image (fresh leaf, no grad).
template <class T>
core::TensorT<T> landmark_tensor(const LandmarkImage& image);

/// How the ConvGate stacks the K per-reference features before its bottleneck
/// convolutions: Stack concatenates along channels (fixed K, order-sensitive),
/// Average takes the mean over K (any K, invariant to duplication/order).
enum class GateMode { Stack, Average };

/// Identity-preserving generator. One activation encoder serves both the
/// reference and query landmark paths; reference frames and landmark images
/// pass through per-modality feature convs, a shared information-exchange
/// trunk with per-modality refinements, and a ConvGate, and are combined
/// under the activation maps into the vectors e_y (appearance) and e_l
/// (layout). A fusion network turns (e_l, e_y) into the per-layer conv
/// kernels {theta_S, theta_gamma, theta_beta} of the decoder's
/// landmark-conditioned branch. The decoder starts from e_y on the coarsest
/// grid and runs `kDecoderDepth` rounds of three parallel modulation
/// branches (landmark pyramid with hyper-predicted kernels; two fixed-kernel
/// pyramids over the warped projected and warped matched frames), summing
/// the branch outputs and upsampling by transposed convolution, with a final
/// tanh. Built for one square frame size (multiple of 16).
template <class T>
struct GeneratorModelT {
  int img_size = 64;
  int gate_k = 8;  // K the Stack gate was built for; ignored by Average
  GateMode gate = GateMode::Stack;

  std::vector<core::LayerParamsT<T>> activation;  // lmk image -> [8, S, S], S = img/4
  std::vector<core::LayerParamsT<T>> image_feat;  // frame -> q_y [16, S, S]
  std::vector<core::LayerParamsT<T>> lmk_feat;    // lmk image -> q_l [16, S, S]
  std::vector<core::LayerParamsT<T>> exchange;    // [q_y;q_l] -> joint [8, S, S]
  core::LayerParamsT<T> refine_image;             // [q_y;joint] -> q'_y
  core::LayerParamsT<T> refine_lmk;               // [q_l;joint] -> q'_l
  std::vector<core::LayerParamsT<T>> gate_image;  // ConvGate over the q_y stack
  std::vector<core::LayerParamsT<T>> gate_lmk;    // ConvGate over the q_l stack
  std::vector<core::LayerParamsT<T>> reduce_image;  // combined q_y -> e_y [256]
  std::vector<core::LayerParamsT<T>> reduce_lmk;    // combined q_l -> e_l [128]

  core::TensorT<T> fuse_image_w;                  // bias-free map e_y -> gate space
  core::LayerParamsT<T> fuse_lmk;                 // e_l -> gate logits
  std::vector<core::LayerParamsT<T>> fuse_out;    // gated vector -> flat theta

  core::LayerParamsT<T> stream_init;              // e_y -> coarsest decoder grid
  std::vector<core::LayerParamsT<T>> pyr_proj;    // fixed pyramid, warped projected
  std::vector<core::LayerParamsT<T>> pyr_match;   // fixed pyramid, warped matched
  std::vector<core::LayerParamsT<T>> spade_proj_gamma, spade_proj_beta;
  std::vector<core::LayerParamsT<T>> spade_match_gamma, spade_match_beta;
  std::vector<core::LayerParamsT<T>> up;          // transposed convs, last emits RGB
};
using GeneratorModel = GeneratorModelT<float>;

inline constexpr int kDecoderDepth = 3;        // coarse grid = img/8, doubling per layer
inline constexpr int kPyramidChannels = 8;     // width of all three modulation pyramids
inline constexpr int kAppearanceDim = 256;     // |e_y|
inline constexpr int kLayoutDim = 128;         // |e_l|

/// Decoder stream channel widths, coarse to fine.
std::span<const int> decoder_channels();

/// Element count of the flat theta vector (layout: the pyramid kernels
/// theta_S[0..2], then per layer theta_gamma, theta_beta).
int theta_numel();

/// Fresh model for square frames of size `img_size` (multiple of 16). The
/// theta head's weights start small and its bias starts at kernel-sized
/// He-style values, so an untrained fusion already emits usable kernels.
template <class T>
GeneratorModelT<T> make_generator_model(core::Rng& rng, int img_size = 64,
                                        int gate_k = 8, GateMode gate = GateMode::Stack);

/// Per-layer kernel triples predicted by the fusion network, each reshaped
/// for direct use as conv weights.
template <class T>
struct ThetaT {
  std::vector<core::TensorT<T>> s;      // pyramid kernels, coarse-building order
  std::vector<core::TensorT<T>> gamma;  // per decoder layer
  std::vector<core::TensorT<T>> beta;
};
using Theta = ThetaT<float>;

/// Activation maps between K reference landmark images and the query:
/// per spatial site, softmax across K of the channel-summed elementwise
/// product of activation-encoder features. Returns [K, S*S] with S = img/4;
/// non-negative, each column summing to one. K >= 1.
template <class T>
core::TensorT<T> activation_maps(const GeneratorModelT<T>& model,
                                 const std::vector<core::TensorT<T>>& ref_lmk_images,
                                 const core::TensorT<T>& query_lmk_image);

/// Hybrid embedding of K reference (frame, landmark image) pairs under the
/// given activation maps: per-modality features, information exchange,
/// alpha-weighted sum of the refined features plus the ConvGate of the raw
/// stack, then convolutional reduction to (e_y, e_l). Throws if the frame,
/// landmark, and alpha counts disagree, or if a Stack-gated model is given
/// K != gate_k.
template <class T>
std::pair<core::TensorT<T>, core::TensorT<T>> embed_references(
    const GeneratorModelT<T>& model, const std::vector<core::TensorT<T>>& ref_frames,
    const std::vector<core::TensorT<T>>& ref_lmk_images, const core::TensorT<T>& alphas);

/// Kernel prediction: theta = MLP(softmax(W_l e_l + b_l) ⊙ W_i e_y). The
/// image branch carries no bias, so a zero e_y gates the MLP to bias-only
/// output.
template <class T>
ThetaT<T> fuse(const GeneratorModelT<T>& model, const core::TensorT<T>& e_l,
               const core::TensorT<T>& e_y);

/// Decode one frame. The query landmark image is convolved down the pyramid
/// with theta.s as kernels; the two warped frames go down their fixed
/// pyramids; at each decoder layer the instance-normalized stream passes
/// three modulation branches ((1+g)*n + b with g,b convolved from the
/// matching pyramid level — theta kernels for the landmark branch, model
/// kernels for the other two), the branch outputs are summed, upsampled by
/// transposed conv, and the last layer maps to RGB under tanh. Output
/// [3, img, img] in [-1,1]. Spatial mismatches throw naming the layer.
template <class T>
core::TensorT<T> compose_frame(const GeneratorModelT<T>& model, const ThetaT<T>& theta,
                               const core::TensorT<T>& e_y,
                               const core::TensorT<T>& query_lmk_image,
                               const core::TensorT<T>& warped_projected,
                               const core::TensorT<T>& warped_matched);

/// Backward bilinear warp plus the warp confidence: attention = visibility
/// box-filtered 3x3 (border-renormalized) and clamped to [0,1]. `flow` is
/// [H*W*2] (du,dv) pixel offsets toward the source, `visibility` [H*W].
template <class T>
struct WarpedT {
  core::TensorT<T> image;
  std::vector<T> attention;
};
template <class T>
WarpedT<T> warp(const core::TensorT<T>& image, std::span<const T> flow,
                std::span<const T> visibility);

/// Matting composition: out = (1-A)*C + A*I_r elementwise, A tiling over
/// channels. A outside [0,1] is clamped with a warning on stderr.
template <class T>
core::TensorT<T> matting_compose(const core::TensorT<T>& color_mask,
                                 std::span<const T> attention,
                                 const core::TensorT<T>& reference);

/// Two patch discriminators over [frame;landmark] stacks: D1 at full
/// resolution, D2 on the 2x average-pooled inputs. Each runs two stride-2
/// convs (LeakyReLU) and a stride-1 score head, so score maps are input/4 on
/// a side; the post-activation features feed the feature-matching loss.
template <class T>
struct DiscriminatorModelT {
  std::vector<core::LayerParamsT<T>> d1, d2;
};
using DiscriminatorModel = DiscriminatorModelT<float>;

template <class T>
DiscriminatorModelT<T> make_discriminator_model(core::Rng& rng);

template <class T>
struct DiscOutT {
  core::TensorT<T> score1, score2;                  // patch score maps
  std::vector<core::TensorT<T>> feats1, feats2;     // per-layer features
};

template <class T>
DiscOutT<T> discriminate(const DiscriminatorModelT<T>& model, const core::TensorT<T>& image,
                         const core::TensorT<T>& condition);

/// Optional learned feature extractor for the perceptual term. With no
/// layers (the default) the loss falls back to a 3-level image-pyramid L1 —
/// a stand-in, and labeled as such wherever it is reported.
template <class T>
struct PerceptualModelT {
  std::vector<core::LayerParamsT<T>> layers;  // stride-2 3x3 convs
};
using PerceptualModel = PerceptualModelT<float>;

PerceptualModel load_perceptual(const std::string& path);
void save_perceptual(const std::string& path, const PerceptualModel& model);

/// Mean L1 between feature stacks of a and b (or between pyramid levels when
/// `model` is null or empty).
template <class T>
core::TensorT<T> perceptual_loss(const core::TensorT<T>& a, const core::TensorT<T>& b,
                                 const PerceptualModelT<T>* model = nullptr);

enum class GanFlavor { LeastSquares, Hinge };

struct LossLambdas {
  float fm = 10.0f;
  float pct = 10.0f;
  float wrp = 10.0f;
  GanFlavor flavor = GanFlavor::LeastSquares;
};

/// Per-term contributions to the generator objective, lambdas applied;
/// gan + fm + pct + wrp sums to total exactly (same additions, same order).
struct LossTerms {
  float gan = 0.0f;
  float fm = 0.0f;
  float pct = 0.0f;
  float wrp = 0.0f;
  float total = 0.0f;
};

/// Generator-side objective over both discriminator scales: adversarial term
/// plus feature matching, the perceptual term, and L1 of each warped input
/// against the target on its visible pixels.
template <class T>
std::pair<core::TensorT<T>, LossTerms> total_loss(
    const DiscriminatorModelT<T>& disc, const core::TensorT<T>& fake,
    const core::TensorT<T>& target, const core::TensorT<T>& condition,
    const core::TensorT<T>& warped_projected, const core::TensorT<T>& warped_matched,
    std::span<const T> vis_projected, std::span<const T> vis_matched,
    const LossLambdas& lambdas, const PerceptualModelT<T>* perceptual = nullptr);

/// Discriminator-side objective on one (real, detached fake) pair.
template <class T>
core::TensorT<T> discriminator_loss(const DiscriminatorModelT<T>& disc,
                                    const core::TensorT<T>& fake_detached,
                                    const core::TensorT<T>& real,
                                    const core::TensorT<T>& condition, GanFlavor flavor);

/// One training example, all inputs precomputed at the model's frame size.
struct GenSample {
  std::vector<core::Tensor> ref_frames;      // K x [3,img,img] in [-1,1]
  std::vector<core::Tensor> ref_lmk_images;  // K x [1,img,img]
  core::Tensor query_lmk_image;              // [1,img,img]
  core::Tensor warped_projected;             // [3,img,img]
  core::Tensor warped_matched;               // [3,img,img]
  std::vector<float> vis_projected;          // [img*img] in [0,1]
  std::vector<float> vis_matched;
  core::Tensor target;                       // [3,img,img]
};

struct GenTrainConfig {
  int steps = 3000;
  LossLambdas lambdas;
  int save_every = 0;            // 0 = no checkpointing
  std::string checkpoint_path;   // generator checkpoint (required if save_every > 0)
  std::string disc_checkpoint_path;
  std::string log_path;          // CSV "step,term,value"; empty = no log
  const PerceptualModel* perceptual = nullptr;
};

/// Alternating optimization: per step draw a sample (the only use of `rng`),
/// take a generator Adam step on total_loss, then a discriminator Adam step
/// on the detached prediction. Returns per-step terms. A non-finite loss
/// throws, leaving the most recent checkpoint on disk untouched.
std::vector<LossTerms> train_generator(GeneratorModel& gen, DiscriminatorModel& disc,
                                       const std::vector<GenSample>& dataset,
                                       const GenTrainConfig& config, core::Rng& rng);

core::NamedTensors generator_named_tensors(GeneratorModel& model);
core::NamedTensors discriminator_named_tensors(DiscriminatorModel& model);

/// Every trainable tensor, the order the optimizer uses.
template <class T>
std::vector<core::TensorT<T>> generator_tensors(GeneratorModelT<T>& model);
template <class T>
std::vector<core::TensorT<T>> discriminator_tensors(DiscriminatorModelT<T>& model);

}  // namespace rhm::synth
