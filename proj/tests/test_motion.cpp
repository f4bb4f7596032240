#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "rhm/core/fdcheck.hpp"
#include "rhm/core/ops.hpp"
#include "rhm/motion/motion.hpp"

using namespace rhm;
using namespace rhm::motion;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

geom::RigidTransform random_pose(core::Rng& rng, double rot_scale = 0.3,
                                 double trans_scale = 0.5) {
  Eigen::Vector3d aa;
  for (int i = 0; i < 3; ++i) aa[i] = rng.normal() * rot_scale;
  geom::RigidTransform pose;
  pose.rotation = geom::matrix_from_axis_angle(aa);
  for (int i = 0; i < 3; ++i) pose.translation[i] = rng.normal() * trans_scale;
  return pose;
}

// One synthetic clip: the nod axis follows a sinusoid whose frequency also
// amplitude-modulates the audio, so motion is predictable from sound.
PhiSample make_clip(double freq_hz, double amp, double phase, int total_frames) {
  PhiSample clip;
  clip.motion.fps = 25.0;
  clip.motion.poses.resize((size_t)total_frames);
  for (int t = 0; t < total_frames; ++t) {
    const double m = std::sin(2.0 * M_PI * freq_hz * (t + 0.5) / 25.0 + phase);
    Eigen::Matrix<double, 6, 1> h = Eigen::Matrix<double, 6, 1>::Zero();
    h[0] = amp * m;        // nod
    h[4] = 0.5 * amp * m;  // slight coupled bob
    clip.motion.poses[(size_t)t] = geom::decode_pose(h);
  }
  clip.audio.sample_rate = kAudioRate;
  clip.audio.samples.resize((size_t)total_frames * kSamplesPerFrame);
  for (size_t s = 0; s < clip.audio.samples.size(); ++s) {
    const double sec = (double)s / kAudioRate;
    const double env = 1.0 + 0.8 * std::sin(2.0 * M_PI * freq_hz * sec + phase);
    const double carrier = std::sin(2.0 * M_PI * 1000.0 * sec);
    clip.audio.samples[s] = (float)(0.1 * env + 0.25 * env * carrier);
  }
  return clip;
}

std::vector<double> nod_trace(const geom::MotionSequence& motion) {
  std::vector<double> x;
  x.reserve(motion.poses.size());
  for (const auto& p : motion.poses) x.push_back(geom::encode_pose(p)[0]);
  return x;
}

// Dominant frequency by autocorrelation peak with parabolic refinement.
double dominant_frequency(const std::vector<double>& x, double fps) {
  const int n = (int)x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  auto ac = [&](int lag) {
    double s = 0.0;
    for (int i = 0; i + lag < n; ++i) s += (x[(size_t)i] - mean) * (x[(size_t)(i + lag)] - mean);
    return s / (n - lag);
  };
  int best = -1;
  double best_v = -1e300;
  bool dipped = false;
  for (int lag = 1; lag <= n / 2; ++lag) {
    const double v = ac(lag);
    if (v < 0) dipped = true;
    if (dipped && v > best_v) {
      best_v = v;
      best = lag;
    }
  }
  REQUIRE(best > 1);
  double refined = best;
  if (best + 1 <= n / 2) {
    const double ym = ac(best - 1), y0 = ac(best), yp = ac(best + 1);
    const double denom = ym - 2 * y0 + yp;
    if (std::abs(denom) > 1e-12) refined = best + 0.5 * (ym - yp) / denom;
  }
  return fps / refined;
}

}  // namespace

TEST_CASE("fresh hypernetwork emits zero weights; encoding is deterministic") {
  core::Rng rng(401);
  PhiModel model = make_phi_model<float>(rng, 8);

  core::Rng data_rng(402);
  geom::MotionSequence ref;
  ref.poses.resize(8);
  for (auto& p : ref.poses) p = random_pose(data_rng);
  expr::AudioTrack audio;
  audio.sample_rate = kAudioRate;
  audio.samples.resize(8 * kSamplesPerFrame);
  for (auto& s : audio.samples) s = (float)data_rng.uniform(-0.5, 0.5);

  const HyperWeights w = encode_reference(model, ref, audio);
  CHECK(w.W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(w.b.cwiseAbs().maxCoeff() == 0.0);

  // same seed, same inputs -> identical weights even with a nonzero tail
  core::Rng rng_a(403), rng_b(403);
  PhiModel ma = make_phi_model<float>(rng_a, 8);
  PhiModel mb = make_phi_model<float>(rng_b, 8);
  for (auto& v : ma.hyper.back().weight.data()) v = 0.01f;
  for (auto& v : mb.hyper.back().weight.data()) v = 0.01f;
  const HyperWeights wa = encode_reference(ma, ref, audio);
  const HyperWeights wb = encode_reference(mb, ref, audio);
  CHECK(wa.W == wb.W);
  CHECK(wa.b == wb.b);
  CHECK(wa.W.cwiseAbs().maxCoeff() > 0.0);

  geom::MotionSequence short_ref = ref;
  short_ref.poses.pop_back();
  CHECK_THROWS_AS(encode_reference(model, short_ref, audio), std::invalid_argument);
  expr::AudioTrack bad_rate = audio;
  bad_rate.sample_rate = 44100;
  CHECK_THROWS_AS(encode_reference(model, ref, bad_rate), std::invalid_argument);
  expr::AudioTrack short_audio = audio;
  short_audio.samples.pop_back();
  CHECK_THROWS_AS(encode_reference(model, ref, short_audio), std::invalid_argument);
}

TEST_CASE("extrapolate: constant head gives a constant pose sequence") {
  core::Rng rng(405);
  PhiModel model = make_phi_model<float>(rng, 8);

  geom::RigidTransform fixed = random_pose(rng);
  HyperWeights w;  // W = 0
  w.b = geom::encode_pose(fixed);

  expr::AudioTrack audio;
  audio.sample_rate = kAudioRate;
  audio.samples.resize(5 * kSamplesPerFrame);
  for (auto& s : audio.samples) s = (float)rng.uniform(-0.5, 0.5);

  const geom::MotionSequence out = extrapolate(model, w, audio, 25.0);
  REQUIRE((int)out.poses.size() == 5);
  for (const auto& p : out.poses) {
    CHECK(geom::geodesic_angle(p.rotation, fixed.rotation) < 1e-9);
    CHECK((p.translation - fixed.translation).cwiseAbs().maxCoeff() < 1e-9);
    // decoded poses are honest rotations
    CHECK((p.rotation * p.rotation.transpose() - Eigen::Matrix3d::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  // single-frame drive span
  expr::AudioTrack one;
  one.sample_rate = kAudioRate;
  one.samples.assign(kSamplesPerFrame, 0.1f);
  CHECK((int)extrapolate(model, w, one, 25.0).poses.size() == 1);

  expr::AudioTrack ragged;
  ragged.sample_rate = kAudioRate;
  ragged.samples.assign(kSamplesPerFrame + 7, 0.1f);
  CHECK_THROWS_AS(extrapolate(model, w, ragged, 25.0), std::invalid_argument);
}

TEST_CASE("stacked drive audio holds shifted frame rows with zero padding") {
  const int n = 5;
  std::vector<float> samples((size_t)n * kSamplesPerFrame);
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i < kSamplesPerFrame; ++i) {
      samples[(size_t)t * kSamplesPerFrame + i] = (float)(t + 1) + 1e-4f * (float)i;
    }
  }
  const core::Tensor stack = stack_drive_audio<float>(samples);
  REQUIRE(stack.shape() == core::Shape{1, kStackRows, n * kSamplesPerFrame});
  auto at = [&](int r, int t, int i) {
    return stack.data()[((size_t)r * n + t) * kSamplesPerFrame + i];
  };
  for (int t = 0; t < n; ++t) {
    for (int r = 0; r < kStackRows; ++r) {
      const int src = t - 3 + r;
      const float want0 =
          (src < 0 || src >= n) ? 0.0f : samples[(size_t)src * kSamplesPerFrame];
      REQUIRE(at(r, t, 0) == want0);
      REQUIRE(at(r, t, kSamplesPerFrame - 1) ==
              ((src < 0 || src >= n)
                   ? 0.0f
                   : samples[(size_t)(src + 1) * kSamplesPerFrame - 1]));
    }
  }
}

TEST_CASE("discriminator score ignores frame order and rejects short input") {
  core::Rng rng(406);
  PhiModel model = make_phi_model<float>(rng, 8);

  geom::MotionSequence motion;
  motion.poses.resize(12);
  for (auto& p : motion.poses) p = random_pose(rng);
  const double score = discriminator_score(model, motion);
  CHECK(std::isfinite(score));

  geom::MotionSequence shuffled = motion;
  for (size_t i = shuffled.poses.size(); i > 1; --i) {
    std::swap(shuffled.poses[i - 1], shuffled.poses[(size_t)rng.uniform_int((int)i)]);
  }
  CHECK(discriminator_score(model, shuffled) == score);

  geom::MotionSequence single;
  single.poses.resize(1);
  CHECK_THROWS_AS(discriminator_score(model, single), std::invalid_argument);
}

TEST_CASE("gradients flow end to end through the hypernetwork pathway") {
  core::Rng rng(407);
  PhiModelT<double> model = make_phi_model<double>(rng, 8);
  // Finite differences need a smooth point: shrink weights and lift biases so
  // every pre-activation stays strictly positive (no relu kinks within the
  // probe radius).
  auto soften = [](std::vector<core::LayerParamsT<double>>& stack) {
    for (auto& layer : stack) {
      for (auto& v : layer.weight.data()) v *= 0.05;
      for (auto& v : layer.bias.data()) v = 1.0;
    }
  };
  soften(model.ref_motion);
  soften(model.ref_audio);
  soften(model.extrap);
  soften(model.hyper);
  // wake the zero tail so every path carries signal
  for (auto& v : model.hyper.back().weight.data()) v = rng.normal() * 0.02;
  for (auto& v : model.hyper.back().bias.data()) v = rng.normal() * 0.02;

  geom::MotionSequence seq;
  seq.poses.resize(10);
  for (auto& p : seq.poses) p = random_pose(rng);
  std::vector<float> audio((size_t)10 * kSamplesPerFrame);
  for (auto& s : audio) s = (float)rng.uniform(-0.5, 0.5);

  const core::TensorD motion_ref = motion_tensor<double>(seq, 0, 8);
  std::vector<double> head((size_t)8 * kSamplesPerFrame);
  for (size_t i = 0; i < head.size(); ++i) head[i] = audio[i];
  const core::TensorD audio_ref =
      core::TensorD::from({1, 8 * kSamplesPerFrame}, std::move(head));
  const core::TensorD drive = stack_drive_audio<double>(
      std::span<const float>(audio.data() + (size_t)8 * kSamplesPerFrame,
                             (size_t)2 * kSamplesPerFrame));
  const core::TensorD target = motion_tensor<double>(seq, 8, 2);

  auto loss_with = [&](const PhiModelT<double>& m, const core::TensorD& mr) {
    return core::mse(predict_motion_graph(m, mr, audio_ref, drive), target);
  };

  CHECK(core::finite_difference_check(
            [&](const core::TensorD& x) {
              PhiModelT<double> m = model;
              m.extrap[0].weight = x;
              return loss_with(m, motion_ref);
            },
            model.extrap[0].weight, 1e-4) < 1e-4);
  CHECK(core::finite_difference_check(
            [&](const core::TensorD& x) {
              PhiModelT<double> m = model;
              m.ref_motion[0].bias = x;
              return loss_with(m, motion_ref);
            },
            model.ref_motion[0].bias, 1e-4) < 1e-4);
  CHECK(core::finite_difference_check(
            [&](const core::TensorD& x) {
              PhiModelT<double> m = model;
              m.ref_audio[2].bias = x;
              return loss_with(m, motion_ref);
            },
            model.ref_audio[2].bias, 1e-4) < 1e-4);
  CHECK(core::finite_difference_check(
            [&](const core::TensorD& x) {
              PhiModelT<double> m = model;
              m.hyper[0].bias = x;
              return loss_with(m, motion_ref);
            },
            model.hyper[0].bias, 1e-4) < 1e-4);
  // and into the reference motion itself
  CHECK(core::finite_difference_check(
            [&](const core::TensorD& x) { return loss_with(model, x); }, motion_ref,
            1e-4) < 1e-4);
}

TEST_CASE("training: overfit, constant motions, determinism") {
  SUBCASE("single clip, no adversary, reaches 1e-3 within 2000 steps") {
    core::Rng rng(408);
    PhiModel model = make_phi_model<float>(rng, 8);
    const std::vector<PhiSample> dataset{make_clip(2.0, 0.08, 0.4, 12)};
    std::vector<float> history;
    for (int chunk = 0; chunk < 8 && (int)history.size() < 2000; ++chunk) {
      auto h = train_motion_learner(model, dataset, 250, rng, 0.0);
      history.insert(history.end(), h.begin(), h.end());
      if (history.back() < 1e-4f) break;
    }
    for (float v : history) REQUIRE(std::isfinite(v));
    CHECK(history.back() < 1e-3f);
  }

  SUBCASE("constant motions drive the bias to the shared pose") {
    core::Rng rng(409);
    PhiModel model = make_phi_model<float>(rng, 8);
    Eigen::Matrix<double, 6, 1> h;
    h << 0.02, -0.015, 0.01, 0.03, -0.02, 0.025;
    const geom::RigidTransform pose = geom::decode_pose(h);
    std::vector<PhiSample> dataset(2);
    for (size_t s = 0; s < 2; ++s) {
      dataset[s].motion.poses.assign(12, pose);
      dataset[s].audio.sample_rate = kAudioRate;
      dataset[s].audio.samples.resize(12 * kSamplesPerFrame);
      core::Rng arng(500 + (uint64_t)s);
      for (auto& v : dataset[s].audio.samples) v = (float)arng.uniform(-0.3, 0.3);
    }
    train_motion_learner(model, dataset, 400, rng, 0.0);

    const geom::MotionSequence ref{25.0, dataset[0].motion.poses};
    geom::MotionSequence ref_head = ref;
    ref_head.poses.resize(8);
    expr::AudioTrack ref_audio;
    ref_audio.sample_rate = kAudioRate;
    ref_audio.samples.assign(dataset[0].audio.samples.begin(),
                             dataset[0].audio.samples.begin() + 8 * kSamplesPerFrame);
    const HyperWeights w = encode_reference(model, ref_head, ref_audio);
    expr::AudioTrack drive;
    drive.sample_rate = kAudioRate;
    drive.samples.assign(dataset[1].audio.samples.begin() + 8 * kSamplesPerFrame,
                         dataset[1].audio.samples.end());
    const geom::MotionSequence out = extrapolate(model, w, drive, 25.0);
    for (const auto& p : out.poses) {
      const Eigen::Matrix<double, 6, 1> got = geom::encode_pose(p);
      CHECK((got - h).cwiseAbs().maxCoeff() < 1e-2);
    }
  }

  SUBCASE("fixed seed reproduces the run bit for bit") {
    auto run = [] {
      core::Rng rng(410);
      PhiModel model = make_phi_model<float>(rng, 8);
      const std::vector<PhiSample> dataset{make_clip(2.5, 0.06, 0.0, 12),
                                           make_clip(1.5, 0.09, 1.0, 12)};
      auto history = train_motion_learner(model, dataset, 12, rng, 0.01);
      const auto bias = model.hyper.back().bias.data();
      return std::pair{history, std::vector<float>(bias.begin(), bias.end())};
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

TEST_CASE("two subjects imprint different hyper weights") {
  core::Rng rng(411);
  PhiModel model = make_phi_model<float>(rng, 8);
  std::vector<PhiSample> dataset;
  for (double phase : {0.0, 2.1}) {
    dataset.push_back(make_clip(2.0, 0.10, phase, 16));  // subject A
    dataset.push_back(make_clip(3.2, 0.05, phase, 16));  // subject B
  }
  train_motion_learner(model, dataset, 60, rng, 0.0);

  auto head = [&](const PhiSample& clip) {
    geom::MotionSequence m;
    m.poses.assign(clip.motion.poses.begin(), clip.motion.poses.begin() + 8);
    expr::AudioTrack a;
    a.sample_rate = kAudioRate;
    a.samples.assign(clip.audio.samples.begin(),
                     clip.audio.samples.begin() + 8 * kSamplesPerFrame);
    return encode_reference(model, m, a);
  };
  const HyperWeights wa = head(dataset[0]);
  const HyperWeights wb = head(dataset[1]);
  const double dist = (wa.W - wb.W).norm() + (wa.b - wb.b).norm();
  CHECK(dist > 0.0);
}

TEST_CASE("phi checkpoint round-trip preserves behavior bit for bit") {
  core::Rng rng(412);
  PhiModel model = make_phi_model<float>(rng, 8);
  for (auto& v : model.hyper.back().weight.data()) v = (float)rng.normal() * 0.01f;

  geom::MotionSequence ref;
  ref.poses.resize(8);
  for (auto& p : ref.poses) p = random_pose(rng);
  expr::AudioTrack audio;
  audio.sample_rate = kAudioRate;
  audio.samples.resize(8 * kSamplesPerFrame);
  for (auto& s : audio.samples) s = (float)rng.uniform(-0.5, 0.5);
  const HyperWeights before = encode_reference(model, ref, audio);

  const std::string path = temp_path("rhm_phi_test.ckpt");
  core::save_checkpoint(path, phi_named_tensors(model));
  core::Rng rng2(999);
  PhiModel other = make_phi_model<float>(rng2, 8);
  core::load_checkpoint_into(path, phi_named_tensors(other));
  const HyperWeights after = encode_reference(other, ref, audio);
  CHECK(before.W == after.W);
  CHECK(before.b == after.b);
  std::filesystem::remove(path);
}
