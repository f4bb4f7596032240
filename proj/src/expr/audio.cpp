#include <cmath>
#include <stdexcept>

#include "rhm/expr/expr.hpp"

namespace rhm::expr {

std::vector<float> audio_window(const AudioTrack& track, int frame_t, double fps) {
  if (fps <= 0) throw std::invalid_argument("audio_window: fps must be positive");
  const double per_frame = track.sample_rate / fps;
  const int len = (int)std::llround(7.0 * per_frame);
  const int64_t start = (int64_t)std::llround((frame_t - 3) * per_frame);
  std::vector<float> out((size_t)len, 0.0f);
  for (int i = 0; i < len; ++i) {
    const int64_t s = start + i;
    if (s >= 0 && s < (int64_t)track.samples.size()) {
      out[(size_t)i] = track.samples[(size_t)s];
    }
  }
  return out;
}

AugmentedWindow augment_with_noise(std::span<const float> window,
                                   const AudioTrack& noise, core::Rng& rng) {
  AugmentedWindow out;
  out.samples.assign(window.begin(), window.end());

  double signal_power = 0.0;
  for (float s : window) signal_power += (double)s * s;
  signal_power /= std::max<size_t>(1, window.size());
  if (signal_power < 1e-12) {
    out.silent_signal = true;
    return out;
  }

  if (noise.samples.empty()) {
    throw std::invalid_argument("augment_with_noise: noise source is empty");
  }
  // 6..30 dB in 3 dB steps
  out.snr_db = 6.0 + 3.0 * rng.uniform_int(9);
  const size_t offset = (size_t)rng.uniform_int((int)noise.samples.size());
  std::vector<double> seg(window.size());
  double noise_power = 0.0;
  for (size_t i = 0; i < window.size(); ++i) {
    seg[i] = noise.samples[(offset + i) % noise.samples.size()];
    noise_power += seg[i] * seg[i];
  }
  noise_power /= std::max<size_t>(1, window.size());
  if (noise_power < 1e-12) {
    throw std::invalid_argument("augment_with_noise: noise source is silent");
  }
  const double target_noise_power = signal_power / std::pow(10.0, out.snr_db / 10.0);
  const double gain = std::sqrt(target_noise_power / noise_power);
  for (size_t i = 0; i < window.size(); ++i) {
    out.samples[i] = (float)(window[i] + gain * seg[i]);
  }
  return out;
}

}  // namespace rhm::expr
