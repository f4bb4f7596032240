#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rhm/core/checkpoint.hpp"
#include "rhm/core/layers.hpp"
#include "rhm/core/rng.hpp"
#include "rhm/expr/expr.hpp"
#include "rhm/geom/geom.hpp"

namespace rhm::motion {

inline constexpr int kPoseDim = 6;       // axis-angle + translation
inline constexpr int kFeatureDim = 256;  // per-frame audio feature width
inline constexpr int kStackRows = 7;     // stacked audio context rows (t-3..t+3)
inline constexpr int kAudioRate = 50000;
inline constexpr int kSamplesPerFrame = 2000;  // 0.04 s at 50 kHz, 25 fps

/// Weights of the per-frame linear head: pose = W * feature + b.
struct HyperWeights {
  Eigen::Matrix<double, kPoseDim, kFeatureDim> W =
      Eigen::Matrix<double, kPoseDim, kFeatureDim>::Zero();
  Eigen::Matrix<double, kPoseDim, 1> b = Eigen::Matrix<double, kPoseDim, 1>::Zero();
};

/// Head-motion learner: a reference encoder (motion conv stack + audio conv
/// stack + MLP) that emits the hyper weights, an audio extrapolator (two 2D
/// convolutions over the stacked window matrix, then one temporal
/// convolution to per-frame features), and a moment-matching discriminator.
/// Built for a fixed reference length `tau`; the flatten widths depend on it.
template <class T>
struct PhiModelT {
  int tau = 64;
  std::vector<core::LayerParamsT<T>> ref_motion;     // [6,tau] -> 64
  std::vector<core::LayerParamsT<T>> ref_audio;      // [1,tau*2000] -> 64
  std::vector<core::LayerParamsT<T>> hyper;          // 128 -> 6*256+6, zero-init tail
  std::vector<core::LayerParamsT<T>> extrap;         // [1,7,n*2000] -> [256,n]
  std::vector<core::LayerParamsT<T>> discriminator;  // moments [12] -> score [1]
};
using PhiModel = PhiModelT<float>;

/// Fresh model. The hyper MLP's output layer starts at zero, so an untrained
/// encoder emits W = 0, b = 0.
template <class T>
PhiModelT<T> make_phi_model(core::Rng& rng, int tau = 64);

// ---- tensor plumbing (shared by training, evaluation, and gradient checks)

/// [6, count] pose-encoding tensor of poses[start .. start+count).
template <class T>
core::TensorT<T> motion_tensor(const geom::MotionSequence& motion, int start, int count);

/// Stacked drive-audio matrix [1, 7, n*2000] where n = samples/2000: row r of
/// frame block t holds the samples of span frame t-3+r, zeros outside the span.
template <class T>
core::TensorT<T> stack_drive_audio(std::span<const float> samples);

/// Differentiable pipeline: encode the reference clip (motion_ref [6,tau],
/// audio_ref [1,tau*2000]) to hyper weights, run the extrapolator over
/// drive_stack [1,7,n*2000], and apply the per-frame head. Returns predicted
/// pose encodings [6, n].
template <class T>
core::TensorT<T> predict_motion_graph(const PhiModelT<T>& model,
                                      const core::TensorT<T>& motion_ref,
                                      const core::TensorT<T>& audio_ref,
                                      const core::TensorT<T>& drive_stack);

/// Discriminator graph over a [n, 6] frames-by-dims encoding; scalar score.
template <class T>
core::TensorT<T> discriminator_graph(const PhiModelT<T>& model,
                                     const core::TensorT<T>& motion_nc);

// ---- evaluation-time operations -----------------------------------------

/// Encode a tau-frame reference clip and its audio span to hyper weights.
HyperWeights encode_reference(const PhiModel& model, const geom::MotionSequence& motion,
                              const expr::AudioTrack& audio);

/// Run the extrapolator over a drive-audio span (length a whole number of
/// frames) and decode W * feature + b per frame into poses.
geom::MotionSequence extrapolate(const PhiModel& model, const HyperWeights& weights,
                                 const expr::AudioTrack& audio, double fps = 25.0);

/// Score a motion sequence (>= 2 frames) through the moment head. Invariant
/// to frame order: only per-dimension mean and standard deviation enter.
double discriminator_score(const PhiModel& model, const geom::MotionSequence& motion);

// ---- training -----------------------------------------------------------

/// One training clip: T frames of motion and the matching T*2000 samples.
struct PhiSample {
  geom::MotionSequence motion;
  expr::AudioTrack audio;
};

/// Alternating least-squares-adversarial training: per sample, a
/// discriminator step on (real tail, detached prediction), then a generator
/// step on prediction MSE plus `adversarial_weight` times the score deficit.
/// With adversarial_weight = 0 the discriminator is never touched. Returns
/// per-epoch mean prediction MSE. Non-finite losses throw with the
/// epoch/sample position.
std::vector<float> train_motion_learner(PhiModel& model,
                                        const std::vector<PhiSample>& dataset,
                                        int epochs, core::Rng& rng,
                                        double adversarial_weight = 0.01);

/// Trainable tensors under stable names for checkpointing.
core::NamedTensors phi_named_tensors(PhiModel& model);

}  // namespace rhm::motion
