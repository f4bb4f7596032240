#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pipeline_util.hpp"
#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

namespace {

core::Tensor image_tensor(const render::Image& img) {
  return core::Tensor::from({3, img.height, img.width},
                            std::vector<float>(img.data.begin(), img.data.end()));
}

std::string tensors_hash(const core::NamedTensors& named) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, tensor] : named) {
    h = detail::fnv1a(name.data(), name.size(), h);
    const auto values = tensor.data();
    h = detail::fnv1a(values.data(), values.size() * sizeof(float), h);
  }
  return detail::hex16(h);
}

}  // namespace

std::vector<int> reference_subset(int tau, int k) {
  if (k < 1 || tau < k)
    throw std::invalid_argument("reference_subset: need tau >= k >= 1");
  std::vector<int> idx(static_cast<size_t>(k));
  if (k == 1) {
    idx[0] = (tau - 1) / 2;
    return idx;
  }
  for (int i = 0; i < k; ++i)
    idx[static_cast<size_t>(i)] =
        static_cast<int>(std::lround(i * (tau - 1) / (k - 1.0)));
  return idx;
}

FrameInputs build_frame_inputs(const render::TexturedMesh& reference_mesh,
                               const geom::RigidTransform& reference_pose,
                               const geom::LandmarkSet& target_aligned,
                               const geom::RigidTransform& target_pose,
                               const std::vector<render::Image>& ref_frames,
                               const std::vector<geom::RigidTransform>& ref_poses,
                               const render::Camera& camera, double match_temperature,
                               core::Rng* rng) {
  if (ref_frames.empty() || ref_frames.size() != ref_poses.size())
    throw std::invalid_argument("build_frame_inputs: reference frame/pose counts differ");
  if (match_temperature > 0 && rng == nullptr)
    throw std::invalid_argument("build_frame_inputs: perturbation needs an rng");

  FrameInputs out;
  out.query_lmk = synth::render_landmark_image(target_aligned, target_pose, camera);

  const render::RasterSettings raster;
  const auto projected = render::hard_rasterize(
      render::pose_mesh(reference_mesh, reference_pose, target_pose), camera, raster);
  out.warped_projected =
      core::Tensor::from({3, projected.height, projected.width},
                         std::vector<float>(projected.image.begin(), projected.image.end()));
  out.vis_projected.assign(projected.mask.begin(), projected.mask.end());

  auto match = geom::match_motion(target_pose, ref_poses);
  int index = match.index;
  if (match_temperature > 0)
    index = geom::perturb_match(match.index, match.cost, ref_poses, match_temperature, *rng);
  out.matched_index = index;

  const auto mesh_at_match =
      render::pose_mesh(reference_mesh, reference_pose, ref_poses[static_cast<size_t>(index)]);
  const auto field = render::rigid_flow(mesh_at_match, ref_poses[static_cast<size_t>(index)],
                                        target_pose, camera);
  const std::vector<float> flow(field.flow.begin(), field.flow.end());
  const std::vector<float> visibility(field.visibility.begin(), field.visibility.end());
  auto warped = synth::warp<float>(image_tensor(ref_frames[static_cast<size_t>(index)]),
                                   flow, visibility);
  out.warped_matched = std::move(warped.image);
  out.vis_matched = std::move(warped.attention);
  return out;
}

std::vector<synth::GenSample> build_generator_dataset(
    const std::vector<render::Image>& frames,
    const std::vector<geom::LandmarkSet>& landmarks, const PipelineConfig& config,
    core::Rng& rng) {
  validate_config(config);
  if (frames.size() != landmarks.size())
    throw std::invalid_argument("build_generator_dataset: frame and landmark counts differ");
  if (static_cast<int>(frames.size()) < config.tau)
    throw std::invalid_argument("build_generator_dataset: need at least tau frames");
  for (const auto& f : frames)
    if (f.height != config.image_size || f.width != config.image_size)
      throw std::invalid_argument("build_generator_dataset: frame size differs from config");

  const auto canonical = geom::build_canonical_face();
  const auto dis = geom::disentangle(landmarks, canonical);
  const render::Camera camera = scene_camera(config.image_size);

  const auto subset = reference_subset(config.tau, config.k);
  std::vector<render::Image> ref_images;
  std::vector<geom::RigidTransform> ref_poses;
  std::vector<core::Tensor> ref_tensors, ref_lmk_tensors;
  for (int idx : subset) {
    ref_images.push_back(frames[static_cast<size_t>(idx)]);
    ref_poses.push_back(dis.motion.poses[static_cast<size_t>(idx)]);
    ref_tensors.push_back(image_tensor(ref_images.back()));
    ref_lmk_tensors.push_back(synth::landmark_tensor<float>(synth::render_landmark_image(
        dis.aligned[static_cast<size_t>(idx)], ref_poses.back(), camera)));
  }

  geom::MotionSequence head;
  head.fps = dis.motion.fps;
  head.poses.assign(dis.motion.poses.begin(), dis.motion.poses.begin() + config.tau);
  const int most_frontal = geom::select_reference_frame(head);
  const auto& anchor = frames[static_cast<size_t>(most_frontal)];
  const auto reference_mesh =
      render::unproject(anchor.data, anchor.height, anchor.width,
                        landmarks[static_cast<size_t>(most_frontal)],
                        render::build_template_mesh(), camera);
  const auto& reference_pose = dis.motion.poses[static_cast<size_t>(most_frontal)];

  std::vector<synth::GenSample> dataset;
  dataset.reserve(frames.size());
  for (size_t t = 0; t < frames.size(); ++t) {
    auto inputs = build_frame_inputs(reference_mesh, reference_pose, dis.aligned[t],
                                     dis.motion.poses[t], ref_images, ref_poses, camera,
                                     config.match_temperature, &rng);
    synth::GenSample s;
    s.ref_frames = ref_tensors;
    s.ref_lmk_images = ref_lmk_tensors;
    s.query_lmk_image = synth::landmark_tensor<float>(inputs.query_lmk);
    s.warped_projected = std::move(inputs.warped_projected);
    s.warped_matched = std::move(inputs.warped_matched);
    s.vis_projected = std::move(inputs.vis_projected);
    s.vis_matched = std::move(inputs.vis_matched);
    s.target = image_tensor(frames[t]);
    dataset.push_back(std::move(s));
  }
  return dataset;
}

// ---- models --------------------------------------------------------------

Models make_models(const PipelineConfig& config, core::Rng& rng) {
  validate_config(config);
  Models m;
  m.phi = motion::make_phi_model<float>(rng, config.tau);
  const int window_len =
      static_cast<int>(std::lround(7.0 * config.sample_rate / config.fps));
  m.psi = expr::make_psi_model(rng, window_len);
  m.gen = synth::make_generator_model<float>(rng, config.image_size, config.k);

  // Placeholder identity basis (decode(0) = canonical face) so an untrained
  // bundle is still runnable end to end; training replaces it with PCA.
  const auto canonical = geom::build_canonical_face();
  m.basis.mean = Eigen::VectorXd::Zero(expr::kLandmarkDim);
  for (int i = 0; i < geom::kNumLandmarks; ++i)
    for (int d = 0; d < 3; ++d) m.basis.mean[3 * i + d] = canonical.landmarks.points(i, d);
  m.basis.components = Eigen::MatrixXd::Zero(expr::kNumCoeffs, expr::kLandmarkDim);
  for (int i = 0; i < expr::kNumCoeffs; ++i) m.basis.components(i, i) = 1.0;
  m.basis.explained_variance = Eigen::VectorXd::Ones(expr::kNumCoeffs);
  return m;
}

void save_models(const std::string& dir, Models& models) {
  std::filesystem::create_directories(dir);
  core::save_checkpoint(dir + "/phi.ckpt", motion::phi_named_tensors(models.phi));
  core::save_checkpoint(dir + "/psi.ckpt", expr::psi_named_tensors(models.psi));
  expr::save_basis(dir + "/basis.json", models.basis);
  core::save_checkpoint(dir + "/gen.ckpt", synth::generator_named_tensors(models.gen));
  models.checkpoint_hashes = {{"phi", file_hash(dir + "/phi.ckpt")},
                              {"psi", file_hash(dir + "/psi.ckpt")},
                              {"basis", file_hash(dir + "/basis.json")},
                              {"generator", file_hash(dir + "/gen.ckpt")}};
}

Models load_models(const std::string& dir, const PipelineConfig& config) {
  core::Rng rng(0);  // shapes only; every parameter is overwritten below
  Models m = make_models(config, rng);
  core::load_checkpoint_into(dir + "/phi.ckpt", motion::phi_named_tensors(m.phi));
  core::load_checkpoint_into(dir + "/psi.ckpt", expr::psi_named_tensors(m.psi));
  m.basis = expr::load_basis(dir + "/basis.json");
  core::load_checkpoint_into(dir + "/gen.ckpt", synth::generator_named_tensors(m.gen));
  m.checkpoint_hashes = {{"phi", file_hash(dir + "/phi.ckpt")},
                         {"psi", file_hash(dir + "/psi.ckpt")},
                         {"basis", file_hash(dir + "/basis.json")},
                         {"generator", file_hash(dir + "/gen.ckpt")}};
  return m;
}

// ---- manifest ------------------------------------------------------------

void write_manifest(const std::string& dir, const PipelineConfig& config,
                    const std::map<std::string, std::string>& checkpoint_hashes,
                    const std::vector<StageTiming>& timings,
                    const std::map<std::string, std::string>& extra) {
  nlohmann::json j;
  j["config_hash"] = config_hash(config);
  j["config"] = nlohmann::json::parse(config_to_json(config));
  j["checkpoints"] = checkpoint_hashes;
  auto stages = nlohmann::json::array();
  for (const auto& t : timings)
    stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  j["stages"] = std::move(stages);
  for (const auto& [key, value] : extra) j[key] = value;

  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("write_manifest: cannot open " + dir + "/manifest.json");
  out << j.dump(2) << "\n";
}

// ---- generation ----------------------------------------------------------

namespace {

struct StageClock {
  std::vector<StageTiming>& timings;
  std::string stage;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~StageClock() {
    timings.push_back(
        {stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count()});
  }
};

[[noreturn]] void stage_fail(const std::string& stage, const std::exception& e) {
  throw std::runtime_error("generate_video: stage " + stage + ": " + e.what());
}

}  // namespace

GenerateResult generate_video(const PipelineConfig& config,
                              const ReferenceClip& reference,
                              const expr::AudioTrack& driving_audio, Models& models,
                              const std::string& output_dir,
                              const geom::MotionSequence* motion_override) {
  GenerateResult result;
  const int spf = static_cast<int>(config.sample_rate / config.fps);
  const size_t tau = static_cast<size_t>(config.tau);

  // validate
  try {
    StageClock clock{result.timings, "validate"};
    validate_config(config);
    if (reference.frames.size() != tau || reference.landmarks.size() != tau)
      throw std::invalid_argument("reference clip must hold exactly tau frames");
    if (reference.audio.samples.size() < tau * static_cast<size_t>(spf))
      throw std::invalid_argument("reference audio shorter than tau frames");
    for (const auto& f : reference.frames)
      if (f.height != config.image_size || f.width != config.image_size)
        throw std::invalid_argument("reference frame size differs from config");
    if (spf != motion::kSamplesPerFrame || reference.audio.sample_rate != config.sample_rate)
      throw std::invalid_argument("audio-driven motion expects 2000 samples per frame");
    if (models.gen.img_size != config.image_size)
      throw std::invalid_argument("generator frame size differs from config");
    if (models.gen.gate == synth::GateMode::Stack && models.gen.gate_k != config.k)
      throw std::invalid_argument("generator reference count differs from config");
    if (models.phi.tau != config.tau)
      throw std::invalid_argument("motion model reference length differs from config");
    if (driving_audio.samples.size() < static_cast<size_t>(spf))
      throw std::invalid_argument("driving audio shorter than one frame");
  } catch (const std::exception& e) {
    stage_fail("validate", e);
  }

  const int n_frames = static_cast<int>(driving_audio.samples.size()) / spf;
  expr::AudioTrack driving;  // truncated to whole frames
  driving.sample_rate = driving_audio.sample_rate;
  driving.samples.assign(driving_audio.samples.begin(),
                         driving_audio.samples.begin() +
                             static_cast<size_t>(n_frames) * spf);
  expr::AudioTrack ref_audio;
  ref_audio.sample_rate = reference.audio.sample_rate;
  ref_audio.samples.assign(reference.audio.samples.begin(),
                           reference.audio.samples.begin() + tau * spf);

  const render::Camera camera = scene_camera(config.image_size);
  const auto canonical = geom::build_canonical_face();

  geom::Disentangled dis;
  try {
    StageClock clock{result.timings, "disentangle"};
    dis = geom::disentangle(reference.landmarks, canonical);
    dis.motion.fps = config.fps;
  } catch (const std::exception& e) {
    stage_fail("disentangle", e);
  }

  int most_frontal = 0;
  try {
    StageClock clock{result.timings, "select-reference"};
    most_frontal = geom::select_reference_frame(dis.motion);
  } catch (const std::exception& e) {
    stage_fail("select-reference", e);
  }

  render::TexturedMesh reference_mesh;
  try {
    StageClock clock{result.timings, "unproject"};
    const auto& anchor = reference.frames[static_cast<size_t>(most_frontal)];
    reference_mesh = render::unproject(anchor.data, anchor.height, anchor.width,
                                       reference.landmarks[static_cast<size_t>(most_frontal)],
                                       render::build_template_mesh(), camera);
  } catch (const std::exception& e) {
    stage_fail("unproject", e);
  }

  try {
    StageClock clock{result.timings, "extrapolate-motion"};
    if (motion_override != nullptr) {
      if (static_cast<int>(motion_override->poses.size()) != n_frames)
        throw std::invalid_argument("motion override length differs from the driving audio");
      result.motion = *motion_override;
      result.motion.fps = config.fps;
    } else {
      const auto weights = motion::encode_reference(models.phi, dis.motion, ref_audio);
      result.motion = motion::extrapolate(models.phi, weights, driving, config.fps);
    }
  } catch (const std::exception& e) {
    stage_fail("extrapolate-motion", e);
  }

  try {
    StageClock clock{result.timings, "predict-expression"};
    const auto ref_coeffs = expr::encode_expression(
        dis.aligned[static_cast<size_t>(most_frontal)], models.basis);
    result.coeffs.reserve(static_cast<size_t>(n_frames));
    for (int t = 0; t < n_frames; ++t) {
      const auto window = expr::audio_window(driving, t, config.fps);
      result.coeffs.push_back(expr::predict_expression(models.psi, window, ref_coeffs));
    }
  } catch (const std::exception& e) {
    stage_fail("predict-expression", e);
  }

  const auto subset = reference_subset(config.tau, config.k);
  std::vector<render::Image> ref_images;
  std::vector<geom::RigidTransform> ref_poses;
  std::vector<core::Tensor> ref_tensors, ref_lmk_tensors;
  for (int idx : subset) {
    ref_images.push_back(reference.frames[static_cast<size_t>(idx)]);
    ref_poses.push_back(dis.motion.poses[static_cast<size_t>(idx)]);
    ref_tensors.push_back(image_tensor(ref_images.back()));
    ref_lmk_tensors.push_back(synth::landmark_tensor<float>(synth::render_landmark_image(
        dis.aligned[static_cast<size_t>(idx)], ref_poses.back(), camera)));
  }
  const auto& reference_pose = dis.motion.poses[static_cast<size_t>(most_frontal)];
  const auto& identity_anchor = dis.aligned[static_cast<size_t>(most_frontal)];

  {
    StageClock clock{result.timings, "synthesize"};
    std::filesystem::create_directories(output_dir + "/frames");
    for (int t = 0; t < n_frames; ++t) {
      try {
        const auto aligned =
            expr::add_identity(result.coeffs[static_cast<size_t>(t)], identity_anchor,
                               models.basis);
        const auto& pose = result.motion.poses[static_cast<size_t>(t)];
        geom::LandmarkSet observed;
        for (int i = 0; i < geom::kNumLandmarks; ++i)
          observed.points.row(i) = (pose.rotation.transpose() *
                                    (aligned.points.row(i).transpose() - pose.translation))
                                       .transpose();
        result.landmarks.push_back(observed);

        auto inputs = build_frame_inputs(reference_mesh, reference_pose, aligned, pose,
                                         ref_images, ref_poses, camera);
        auto query = synth::landmark_tensor<float>(inputs.query_lmk);
        auto alphas = synth::activation_maps(models.gen, ref_lmk_tensors, query);
        auto [e_y, e_l] =
            synth::embed_references(models.gen, ref_tensors, ref_lmk_tensors, alphas);
        auto theta = synth::fuse(models.gen, e_l, e_y);
        auto fake = synth::compose_frame(models.gen, theta, e_y, query,
                                         inputs.warped_projected, inputs.warped_matched);
        if (config.matting)
          fake = synth::matting_compose<float>(
              fake, std::span<const float>(inputs.vis_matched), inputs.warped_matched);

        render::Image img;
        img.height = config.image_size;
        img.width = config.image_size;
        img.data.assign(fake.data().begin(), fake.data().end());
        char name[64];
        std::snprintf(name, sizeof(name), "/frames/frame_%05d.png", t);
        render::save_png(output_dir + name, img.data, img.height, img.width);
        result.frames.push_back(std::move(img));
      } catch (const std::exception& e) {
        throw std::runtime_error("generate_video: stage synthesize: frame " +
                                 std::to_string(t) + ": " + e.what());
      }
    }
  }

  try {
    StageClock clock{result.timings, "write-outputs"};
    geom::save_landmarks(output_dir + "/landmarks.json", config.fps, result.landmarks);
    geom::save_motion_csv(output_dir + "/motion.csv", result.motion);
    std::ofstream coeffs(output_dir + "/coeffs.csv");
    if (!coeffs) throw std::runtime_error("cannot open coeffs.csv");
    for (int i = 0; i < expr::kNumCoeffs; ++i) coeffs << (i ? "," : "") << "c" << i;
    coeffs << "\n";
    char cell[32];
    for (const auto& c : result.coeffs) {
      for (int i = 0; i < expr::kNumCoeffs; ++i) {
        std::snprintf(cell, sizeof(cell), "%.17g", c.coeffs[i]);
        coeffs << (i ? "," : "") << cell;
      }
      coeffs << "\n";
    }
  } catch (const std::exception& e) {
    stage_fail("write-outputs", e);
  }

  auto hashes = models.checkpoint_hashes;
  if (hashes.empty())
    hashes = {{"phi", tensors_hash(motion::phi_named_tensors(models.phi))},
              {"psi", tensors_hash(expr::psi_named_tensors(models.psi))},
              {"generator", tensors_hash(synth::generator_named_tensors(models.gen))}};
  write_manifest(output_dir, config, hashes, result.timings,
                 {{"command", "generate"}, {"frames", std::to_string(n_frames)}});
  result.manifest_path = output_dir + "/manifest.json";
  return result;
}

}  // namespace rhm::pipeline
