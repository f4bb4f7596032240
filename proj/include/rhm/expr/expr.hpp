#pragma once

#include <span>
#include <string>
#include <vector>

#include "rhm/core/checkpoint.hpp"
#include "rhm/core/layers.hpp"
#include "rhm/core/rng.hpp"
#include "rhm/geom/geom.hpp"

namespace rhm::expr {

inline constexpr int kNumCoeffs = 20;
inline constexpr int kLandmarkDim = 3 * geom::kNumLandmarks;  // 204

/// PCA space of pose-aligned landmarks, flattened row-major (point-major).
struct ExpressionBasis {
  Eigen::VectorXd mean;                // [204]
  Eigen::MatrixXd components;          // [20,204], rows orthonormal
  Eigen::VectorXd explained_variance;  // [20], descending (sample variance)
};

struct ExpressionCoeffs {
  Eigen::Matrix<double, kNumCoeffs, 1> coeffs = decltype(coeffs)::Zero();
};

/// PCA via SVD of the mean-centered frames; components sorted by descending
/// variance, each sign-fixed so its largest-magnitude entry is positive.
/// Throws below 21 frames (20 directions need at least 21 points).
ExpressionBasis fit_expression_basis(const std::vector<geom::LandmarkSet>& aligned_frames);

ExpressionCoeffs encode_expression(const geom::LandmarkSet& frame,
                                   const ExpressionBasis& basis);
geom::LandmarkSet decode_expression(const ExpressionCoeffs& coeffs,
                                    const ExpressionBasis& basis);

/// decode(predicted) plus the reference's off-basis identity residual
/// (reference - decode(encode(reference))); exact when predicted encodes the
/// reference frame itself.
geom::LandmarkSet add_identity(const ExpressionCoeffs& predicted,
                               const geom::LandmarkSet& reference_frame,
                               const ExpressionBasis& basis);

void save_basis(const std::string& path, const ExpressionBasis& basis);
ExpressionBasis load_basis(const std::string& path);

struct AudioTrack {
  std::vector<float> samples;  // mono, [-1,1]
  int sample_rate = 50000;
};

/// PCM-16 mono WAV. Samples quantize by 32767 both ways, so a round-trip
/// moves a value by at most 1/32767.
void save_wav(const std::string& path, const AudioTrack& track);
AudioTrack load_wav(const std::string& path);

/// Samples covering the 7 video frames t-3..t+3 (0.04 s each at 25 fps);
/// length round(7*rate/fps), zero-padded where the window leaves the track.
std::vector<float> audio_window(const AudioTrack& track, int frame_t, double fps);

struct AugmentedWindow {
  std::vector<float> samples;
  double snr_db = 0.0;        // the drawn target (realized exactly)
  bool silent_signal = false; // power ~0: returned unchanged
};

/// Mixes a random slice of `noise` into the window at an SNR drawn uniformly
/// from {6, 9, ..., 30} dB, scaled so the realized ratio matches exactly.
AugmentedWindow augment_with_noise(std::span<const float> window,
                                   const AudioTrack& noise, core::Rng& rng);

/// Audio-to-expression regressor: conv1d stack over the raw window, linear
/// stack over the reference coefficients, concatenated and decoded to 20
/// coefficients. The final decoder layer starts at zero, so a fresh model
/// predicts zero for any input.
struct PsiModel {
  std::vector<core::LayerParams> audio_encoder;
  std::vector<core::LayerParams> landmark_encoder;
  std::vector<core::LayerParams> decoder;
  int window_len = 14000;
};

PsiModel make_psi_model(core::Rng& rng, int window_len = 14000);

/// Tape-building forward; reference must be a [20] tensor.
core::Tensor predict_expression_graph(const PsiModel& model,
                                      std::span<const float> window,
                                      const core::Tensor& reference);
ExpressionCoeffs predict_expression(const PsiModel& model,
                                    std::span<const float> window,
                                    const ExpressionCoeffs& reference);

struct PsiSample {
  std::vector<float> window;
  ExpressionCoeffs reference;
  ExpressionCoeffs target;
};

/// Adam/MSE training pass over the dataset (one step per sample per epoch).
/// When `noise` is given, each window is re-augmented every visit.
/// Returns per-epoch mean loss; throws on non-finite loss.
std::vector<float> train_expression_learner(PsiModel& model,
                                            const std::vector<PsiSample>& dataset,
                                            int epochs, core::Rng& rng,
                                            const AudioTrack* noise = nullptr);

/// Stable-named parameter list for checkpointing.
core::NamedTensors psi_named_tensors(const PsiModel& model);

}  // namespace rhm::expr
