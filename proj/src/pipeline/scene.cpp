#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

namespace {

constexpr double kTwoPi = 6.283185307179586477;

// Two seeded low-frequency sinusoids per rotation axis: smooth, zero-mean
// drift that keeps the track from being a pure sinusoid.
struct Drift {
  double amp[2], hz[2], phase[2];
  double at(double s) const {
    return amp[0] * std::sin(kTwoPi * hz[0] * s + phase[0]) +
           amp[1] * std::sin(kTwoPi * hz[1] * s + phase[1]);
  }
};

Drift draw_drift(core::Rng& rng, double base_amp) {
  Drift d;
  for (int i = 0; i < 2; ++i) {
    d.amp[i] = 0.25 * base_amp * rng.uniform();
    d.hz[i] = 0.15 + 0.75 * rng.uniform();
    d.phase[i] = kTwoPi * rng.uniform();
  }
  return d;
}

double pattern_value(int variant, double scale, double phase, double phase2,
                     const Eigen::RowVector3d& v) {
  switch (variant) {
    case 0: return 0.5 + 0.5 * std::sin(scale * v.y() + phase);
    case 1: return 0.5 + 0.5 * std::sin(scale * v.x() + phase);
    case 2:
      return 0.5 + 0.5 * std::sin(scale * v.x() + phase) * std::sin(scale * v.y() + phase2);
    default: {
      const double r = std::hypot(v.x(), v.y());
      return 0.5 + 0.5 * std::sin(3.0 * scale * r + phase);
    }
  }
}

}  // namespace

SyntheticScene synth_scene(uint64_t subject_seed, int length,
                           const PipelineConfig& config, double motion_scale,
                           double expression_scale) {
  validate_config(config);
  if (length <= config.tau)
    throw std::invalid_argument("synth_scene: length must exceed tau");

  core::Rng rng(subject_seed);
  SyntheticScene scene;
  auto& st = scene.style;
  st.nod_hz = 1.0 + 1.5 * rng.uniform();
  st.nod_amp = 0.12 + 0.08 * rng.uniform();
  st.sway_hz = 0.25 + 0.35 * rng.uniform();
  st.sway_amp = 0.10 + 0.06 * rng.uniform();
  st.roll_amp = 0.03 + 0.03 * rng.uniform();
  st.trans_amp = 0.04 + 0.04 * rng.uniform();
  st.envelope_hz = 0.35 + 0.30 * rng.uniform();
  st.carrier_hz = 180.0 + 120.0 * rng.uniform();
  st.lip_gain = 0.10 + 0.06 * rng.uniform();
  st.brow_gain = 0.04 + 0.03 * rng.uniform();
  st.brow_hz = 0.2 + 0.3 * rng.uniform();
  st.texture_variant = rng.uniform_int(4);

  const double phi_env = kTwoPi * rng.uniform();
  const double phi_car = kTwoPi * rng.uniform();
  const double phi_car2 = kTwoPi * rng.uniform();
  const double phi_yaw = kTwoPi * rng.uniform();
  const double phi_roll = kTwoPi * rng.uniform();
  const double phi_brow = kTwoPi * rng.uniform();
  double trans_hz[3], trans_phase[3];
  for (int d = 0; d < 3; ++d) {
    trans_hz[d] = 0.3 + 0.4 * rng.uniform();
    trans_phase[d] = kTwoPi * rng.uniform();
  }
  const Drift drift[3] = {draw_drift(rng, st.nod_amp), draw_drift(rng, st.sway_amp),
                          draw_drift(rng, st.roll_amp)};

  Eigen::RowVector3d pal0, pal1;
  for (int i = 0; i < 3; ++i) pal0[i] = 0.15 + 0.8 * rng.uniform();
  for (int i = 0; i < 3; ++i) pal1[i] = 0.15 + 0.8 * rng.uniform();
  const double tex_scale = 2.0 + 2.0 * rng.uniform();
  const double tex_phase = kTwoPi * rng.uniform();
  const double tex_phase2 = kTwoPi * rng.uniform();

  // ---- audio ----
  const int spf = static_cast<int>(config.sample_rate / config.fps);
  scene.audio.sample_rate = config.sample_rate;
  scene.audio.samples.resize(static_cast<size_t>(length) * spf);
  for (size_t i = 0; i < scene.audio.samples.size(); ++i) {
    const double s = static_cast<double>(i) / config.sample_rate;
    const double env = 0.55 + 0.45 * std::sin(kTwoPi * st.envelope_hz * s + phi_env);
    const double tone = 0.8 * std::sin(kTwoPi * st.carrier_hz * s + phi_car) +
                        0.2 * std::sin(kTwoPi * 2.0 * st.carrier_hz * s + phi_car2);
    scene.audio.samples[i] = static_cast<float>(0.7 * env * tone);
  }

  // Per-frame energy; the lip track is proportional to it by construction.
  std::vector<double> energy(length), env_mid(length);
  double peak = 0.0;
  for (int t = 0; t < length; ++t) {
    double e = 0.0;
    for (int i = 0; i < spf; ++i) {
      const double v = scene.audio.samples[static_cast<size_t>(t) * spf + i];
      e += v * v;
    }
    energy[t] = e / spf;
    peak = std::max(peak, energy[t]);
    const double sc = (t + 0.5) * spf / config.sample_rate;
    env_mid[t] = 0.55 + 0.45 * std::sin(kTwoPi * st.envelope_hz * sc + phi_env);
  }
  scene.lip_track.resize(length);
  for (int t = 0; t < length; ++t)
    scene.lip_track[t] =
        peak > 0 ? st.lip_gain * expression_scale * energy[t] / peak : 0.0;

  // ---- geometry ----
  scene.canonical = geom::build_canonical_face();
  scene.mesh = render::build_template_mesh();
  for (Eigen::Index v = 0; v < scene.mesh.vertices.rows(); ++v) {
    const double m = pattern_value(st.texture_variant, tex_scale, tex_phase, tex_phase2,
                                   scene.mesh.vertices.row(v));
    scene.mesh.colors.row(v) = pal0 + m * (pal1 - pal0);
  }

  const render::Camera cam = scene_camera(config.image_size);
  const render::RasterSettings raster;
  scene.motion.fps = config.fps;
  scene.frames.reserve(length);
  scene.landmarks.reserve(length);
  scene.aligned.reserve(length);

  for (int t = 0; t < length; ++t) {
    const double s = t / config.fps;
    const Eigen::Vector3d rotvec =
        motion_scale *
        Eigen::Vector3d(
            st.nod_amp * env_mid[t] * std::sin(kTwoPi * st.nod_hz * s) + drift[0].at(s),
            st.sway_amp * std::sin(kTwoPi * st.sway_hz * s + phi_yaw) + drift[1].at(s),
            st.roll_amp * std::sin(kTwoPi * 0.7 * st.sway_hz * s + phi_roll) +
                drift[2].at(s));
    Eigen::Vector3d trans;
    for (int d = 0; d < 3; ++d)
      trans[d] = motion_scale * st.trans_amp * (d == 2 ? 0.5 : 1.0) *
                 std::sin(kTwoPi * trans_hz[d] * s + trans_phase[d]);
    geom::RigidTransform pose{geom::matrix_from_axis_angle(rotvec), trans};
    scene.motion.poses.push_back(pose);

    // Expression offsets stay off the near-rigid landmarks, so rigid fitting
    // recovers the pose exactly.
    Eigen::Matrix<double, geom::kNumLandmarks, 3> offsets =
        Eigen::Matrix<double, geom::kNumLandmarks, 3>::Zero();
    const double lip = scene.lip_track[t];
    const double brow = st.brow_gain * expression_scale *
                        (0.5 + 0.5 * std::sin(kTwoPi * st.brow_hz * s + phi_brow));
    for (int i = 55; i <= 59; ++i) offsets(i, 1) -= lip;   // lower outer lip
    for (int i = 65; i <= 67; ++i) offsets(i, 1) -= lip;   // lower inner lip
    for (int i = 61; i <= 63; ++i) offsets(i, 1) += 0.3 * lip;  // upper inner lip
    offsets(8, 1) -= 0.7 * lip;                            // chin follows the jaw
    for (int i = 17; i <= 26; ++i) offsets(i, 1) += brow;

    geom::LandmarkSet aligned;
    aligned.points = scene.canonical.landmarks.points + offsets;
    scene.aligned.push_back(aligned);

    geom::LandmarkSet observed;
    for (int i = 0; i < geom::kNumLandmarks; ++i)
      observed.points.row(i) =
          (pose.rotation.transpose() * (aligned.points.row(i).transpose() - trans))
              .transpose();
    scene.landmarks.push_back(observed);

    render::TexturedMesh deformed = scene.mesh;
    if (lip != 0.0 || brow != 0.0) {
      const auto tps = render::tps_fit(scene.canonical.landmarks.points, offsets);
      deformed.vertices += render::tps_eval(tps, scene.mesh.vertices);
    }
    const auto hr = render::hard_rasterize(render::pose_mesh(deformed, {}, pose), cam,
                                           raster);
    render::Image img;
    img.height = hr.height;
    img.width = hr.width;
    img.data.assign(hr.image.begin(), hr.image.end());
    scene.frames.push_back(std::move(img));
  }
  return scene;
}

void save_scene(const std::string& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir + "/frames");
  char name[64];
  for (size_t t = 0; t < scene.frames.size(); ++t) {
    std::snprintf(name, sizeof(name), "/frames/frame_%05zu.png", t);
    const auto& f = scene.frames[t];
    render::save_png(dir + name, f.data, f.height, f.width);
  }
  geom::save_landmarks(dir + "/landmarks.json", scene.motion.fps, scene.landmarks);
  geom::save_motion_csv(dir + "/motion.csv", scene.motion);
  expr::save_wav(dir + "/audio.wav", scene.audio);
}

std::vector<render::Image> load_frame_dir(const std::string& dir) {
  std::vector<render::Image> frames;
  char name[64];
  for (int t = 0;; ++t) {
    std::snprintf(name, sizeof(name), "/frame_%05d.png", t);
    const std::string path = dir + name;
    if (!std::filesystem::exists(path)) break;
    frames.push_back(render::load_png(path));
  }
  return frames;
}

}  // namespace rhm::pipeline
