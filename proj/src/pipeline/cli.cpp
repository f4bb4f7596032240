#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

namespace {

struct Stopwatch {
  std::chrono::steady_clock::time_point mark = std::chrono::steady_clock::now();
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - mark).count();
    mark = now;
    return s;
  }
};

struct LoadedScene {
  std::vector<render::Image> frames;
  geom::LandmarkFile landmarks;
  expr::AudioTrack audio;
};

LoadedScene load_scene_dir(const std::string& dir, bool with_frames) {
  LoadedScene s;
  if (with_frames) {
    s.frames = load_frame_dir(dir + "/frames");
    if (s.frames.empty())
      throw std::runtime_error("no frames under " + dir + "/frames");
  }
  s.landmarks = geom::load_landmarks(dir + "/landmarks.json");
  s.audio = expr::load_wav(dir + "/audio.wav");
  return s;
}

void write_loss_csv(const std::string& path, const std::vector<float>& losses) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epoch,loss\n";
  char cell[32];
  for (size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(cell, sizeof(cell), "%.9g", static_cast<double>(losses[i]));
    out << i << "," << cell << "\n";
  }
}

geom::Disentangled disentangle_scene(const LoadedScene& scene) {
  auto dis = geom::disentangle(scene.landmarks.frames, geom::build_canonical_face());
  dis.motion.fps = scene.landmarks.fps;
  return dis;
}

int do_synth_data(const PipelineConfig& config, uint64_t subject_seed, int frames,
                  double motion_scale, double expression_scale, const std::string& out) {
  Stopwatch watch;
  std::vector<StageTiming> timings;
  auto scene = synth_scene(subject_seed, frames, config, motion_scale, expression_scale);
  timings.push_back({"synth", watch.lap()});
  save_scene(out, scene);
  timings.push_back({"write", watch.lap()});
  write_manifest(out, config, {}, timings,
                 {{"command", "synth-data"},
                  {"subject_seed", std::to_string(subject_seed)},
                  {"frames", std::to_string(frames)}});
  std::cout << "wrote " << scene.frames.size() << " frames to " << out << "\n";
  return 0;
}

int do_disentangle(const PipelineConfig& config, const std::string& landmarks_path,
                   const std::string& out) {
  Stopwatch watch;
  std::vector<StageTiming> timings;
  const auto file = geom::load_landmarks(landmarks_path);
  auto dis = geom::disentangle(file.frames, geom::build_canonical_face());
  dis.motion.fps = file.fps;
  timings.push_back({"disentangle", watch.lap()});
  std::filesystem::create_directories(out);
  geom::save_motion_csv(out + "/motion.csv", dis.motion);
  geom::save_landmarks(out + "/aligned.json", file.fps, dis.aligned);
  timings.push_back({"write", watch.lap()});
  write_manifest(out, config, {}, timings, {{"command", "disentangle"}});
  std::cout << "split " << file.frames.size() << " frames into " << out
            << "/motion.csv and aligned.json\n";
  return 0;
}

int do_export_motion(const std::string& landmarks_path, const std::string& out) {
  const auto file = geom::load_landmarks(landmarks_path);
  auto dis = geom::disentangle(file.frames, geom::build_canonical_face());
  dis.motion.fps = file.fps;
  geom::save_motion_csv(out, dis.motion);
  std::cout << "wrote " << dis.motion.poses.size() << " poses to " << out << "\n";
  return 0;
}

int do_train_motion(const PipelineConfig& config, const std::vector<std::string>& data,
                    const std::string& out) {
  Stopwatch watch;
  std::vector<StageTiming> timings;
  std::vector<motion::PhiSample> samples;
  for (const auto& dir : data) {
    auto scene = load_scene_dir(dir, /*with_frames=*/false);
    auto dis = disentangle_scene(scene);
    samples.push_back({std::move(dis.motion), std::move(scene.audio)});
  }
  timings.push_back({"load", watch.lap()});

  core::Rng rng(config.seed);
  auto model = motion::make_phi_model<float>(rng, config.tau);
  const auto losses =
      motion::train_motion_learner(model, samples, config.motion_epochs, rng);
  timings.push_back({"train", watch.lap()});

  std::filesystem::create_directories(out);
  core::save_checkpoint(out + "/phi.ckpt", motion::phi_named_tensors(model));
  write_loss_csv(out + "/loss_motion.csv", losses);
  timings.push_back({"write", watch.lap()});
  write_manifest(out, config, {{"phi", file_hash(out + "/phi.ckpt")}}, timings,
                 {{"command", "train-motion"},
                  {"final_loss", std::to_string(losses.empty() ? 0.0 : losses.back())}});
  std::cout << "trained motion learner on " << samples.size() << " clips, final mse "
            << (losses.empty() ? 0.0f : losses.back()) << "\n";
  return 0;
}

int do_train_expression(const PipelineConfig& config, const std::vector<std::string>& data,
                        const std::string& noise_path, const std::string& out) {
  Stopwatch watch;
  std::vector<StageTiming> timings;

  std::vector<LoadedScene> scenes;
  std::vector<geom::Disentangled> split;
  std::vector<geom::LandmarkSet> pooled;
  for (const auto& dir : data) {
    scenes.push_back(load_scene_dir(dir, /*with_frames=*/false));
    split.push_back(disentangle_scene(scenes.back()));
    pooled.insert(pooled.end(), split.back().aligned.begin(), split.back().aligned.end());
  }
  const auto basis = expr::fit_expression_basis(pooled);

  std::vector<expr::PsiSample> samples;
  for (size_t i = 0; i < scenes.size(); ++i) {
    const int anchor = geom::select_reference_frame(split[i].motion);
    const auto reference =
        expr::encode_expression(split[i].aligned[static_cast<size_t>(anchor)], basis);
    for (size_t t = 0; t < split[i].aligned.size(); ++t)
      samples.push_back({expr::audio_window(scenes[i].audio, static_cast<int>(t), config.fps),
                         reference, expr::encode_expression(split[i].aligned[t], basis)});
  }
  timings.push_back({"load", watch.lap()});

  expr::AudioTrack noise;
  if (!noise_path.empty()) noise = expr::load_wav(noise_path);

  core::Rng rng(config.seed);
  const int window_len =
      static_cast<int>(std::lround(7.0 * config.sample_rate / config.fps));
  auto model = expr::make_psi_model(rng, window_len);
  const auto losses = expr::train_expression_learner(
      model, samples, config.expression_epochs, rng,
      noise_path.empty() ? nullptr : &noise);
  timings.push_back({"train", watch.lap()});

  std::filesystem::create_directories(out);
  core::save_checkpoint(out + "/psi.ckpt", expr::psi_named_tensors(model));
  expr::save_basis(out + "/basis.json", basis);
  write_loss_csv(out + "/loss_expression.csv", losses);
  timings.push_back({"write", watch.lap()});
  write_manifest(out, config,
                 {{"psi", file_hash(out + "/psi.ckpt")},
                  {"basis", file_hash(out + "/basis.json")}},
                 timings,
                 {{"command", "train-expression"},
                  {"final_loss", std::to_string(losses.empty() ? 0.0 : losses.back())}});
  std::cout << "trained expression learner on " << samples.size() << " windows, final mse "
            << (losses.empty() ? 0.0f : losses.back()) << "\n";
  return 0;
}

int do_train_generator(const PipelineConfig& config, const std::string& data,
                       const std::string& out) {
  Stopwatch watch;
  std::vector<StageTiming> timings;
  auto scene = load_scene_dir(data, /*with_frames=*/true);
  core::Rng rng(config.seed);
  auto dataset = build_generator_dataset(scene.frames, scene.landmarks.frames, config, rng);
  timings.push_back({"load", watch.lap()});

  auto gen = synth::make_generator_model<float>(rng, config.image_size, config.k);
  auto disc = synth::make_discriminator_model<float>(rng);
  std::filesystem::create_directories(out);
  synth::GenTrainConfig train;
  train.steps = config.generator_steps;
  train.lambdas = config.lambdas;
  train.save_every = config.generator_steps;  // initial snapshot plus the final state
  train.checkpoint_path = out + "/gen.ckpt";
  train.disc_checkpoint_path = out + "/disc.ckpt";
  train.log_path = out + "/loss_generator.csv";
  const auto history = synth::train_generator(gen, disc, dataset, train, rng);
  timings.push_back({"train", watch.lap()});

  write_manifest(out, config,
                 {{"generator", file_hash(out + "/gen.ckpt")},
                  {"discriminator", file_hash(out + "/disc.ckpt")}},
                 timings,
                 {{"command", "train-generator"},
                  {"final_loss",
                   std::to_string(history.empty() ? 0.0 : history.back().total)}});
  std::cout << "trained generator for " << history.size() << " steps on "
            << dataset.size() << " samples\n";
  return 0;
}

int do_generate(const PipelineConfig& config, const std::string& reference_dir,
                const std::string& audio_path, const std::string& models_dir,
                const std::string& motion_csv, const std::string& out) {
  auto scene = load_scene_dir(reference_dir, /*with_frames=*/true);
  const size_t tau = static_cast<size_t>(config.tau);
  if (scene.frames.size() < tau)
    throw std::runtime_error("reference clip holds fewer than tau frames");
  ReferenceClip reference;
  reference.frames.assign(scene.frames.begin(), scene.frames.begin() + tau);
  reference.landmarks.assign(scene.landmarks.frames.begin(),
                             scene.landmarks.frames.begin() + tau);
  const size_t ref_samples =
      tau * static_cast<size_t>(config.sample_rate / config.fps);
  if (scene.audio.samples.size() < ref_samples)
    throw std::runtime_error("reference audio shorter than tau frames");
  reference.audio.sample_rate = scene.audio.sample_rate;
  reference.audio.samples.assign(scene.audio.samples.begin(),
                                 scene.audio.samples.begin() + ref_samples);

  const auto driving = expr::load_wav(audio_path);
  auto models = load_models(models_dir, config);

  geom::MotionSequence override_motion;
  const geom::MotionSequence* override_ptr = nullptr;
  if (!motion_csv.empty()) {
    override_motion = geom::load_motion_csv(motion_csv, config.fps);
    override_ptr = &override_motion;
  }

  const auto result =
      generate_video(config, reference, driving, models, out, override_ptr);
  std::cout << "generated " << result.frames.size() << " frames into " << out << "\n";
  return 0;
}

int do_eval(const std::string& gen_dir, const std::string& ref_dir, int ref_offset) {
  const auto gen_lmk = geom::load_landmarks(gen_dir + "/landmarks.json");
  const auto ref_lmk = geom::load_landmarks(ref_dir + "/landmarks.json");
  const auto gen_frames = load_frame_dir(gen_dir + "/frames");
  const auto ref_frames = load_frame_dir(ref_dir + "/frames");

  const size_t n = gen_frames.size();
  if (n == 0) throw std::runtime_error("no generated frames under " + gen_dir);
  if (gen_lmk.frames.size() != n)
    throw std::runtime_error("generated landmark count differs from the frame count");
  if (ref_offset < 0 || ref_frames.size() < ref_offset + n ||
      ref_lmk.frames.size() < ref_offset + n)
    throw std::runtime_error("reference shorter than the generated span at this offset");

  const std::vector<geom::LandmarkSet> ref_slice(
      ref_lmk.frames.begin() + ref_offset, ref_lmk.frames.begin() + ref_offset + n);
  const double lmd = compute_lmd(gen_lmk.frames, ref_slice);
  double ssim = 0.0;
  for (size_t i = 0; i < n; ++i)
    ssim += compute_ssim(gen_frames[i], ref_frames[static_cast<size_t>(ref_offset) + i]);
  ssim /= static_cast<double>(n);

  nlohmann::json j{{"frames", n},
                   {"lmd", lmd},
                   {"ssim", ssim},
                   {"note", "fid and csim require pretrained metric networks and are "
                            "not computed"}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int do_gradcheck(const PipelineConfig& config) {
  const auto rows = run_gradcheck(config.seed);
  return print_gradcheck(rows, std::cout) ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"audio-driven talking-head pipeline"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  int64_t seed_override = -1;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_override, "override the config seed");

  auto* synth_cmd = app.add_subcommand("synth-data", "render a labeled synthetic scene");
  std::string out_dir, landmarks_path, noise_path, audio_path, models_dir, motion_csv;
  std::string gen_dir, ref_dir, data_dir;
  std::vector<std::string> data_dirs;
  int64_t subject_seed = -1;
  int frames_override = -1, ref_offset = 0;
  double motion_scale = 1.0, expression_scale = 1.0;
  synth_cmd->add_option("--out", out_dir, "output directory")->required();
  synth_cmd->add_option("--subject-seed", subject_seed, "subject identity seed");
  synth_cmd->add_option("--frames", frames_override, "clip length in frames");
  synth_cmd->add_option("--motion-scale", motion_scale, "head-motion amplitude factor");
  synth_cmd->add_option("--expression-scale", expression_scale,
                        "expression amplitude factor");

  auto* dis_cmd = app.add_subcommand("disentangle", "split landmarks into pose and expression");
  dis_cmd->add_option("--landmarks", landmarks_path, "landmark JSON file")->required();
  dis_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* train_motion_cmd =
      app.add_subcommand("train-motion", "train the audio-to-head-motion learner");
  train_motion_cmd->add_option("--data", data_dirs, "scene directories")->required();
  train_motion_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* train_expr_cmd =
      app.add_subcommand("train-expression", "train the audio-to-expression learner");
  train_expr_cmd->add_option("--data", data_dirs, "scene directories")->required();
  train_expr_cmd->add_option("--out", out_dir, "output directory")->required();
  train_expr_cmd->add_option("--noise", noise_path, "noise WAV for SNR augmentation");

  auto* train_gen_cmd = app.add_subcommand("train-generator", "train the frame generator");
  train_gen_cmd->add_option("--data", data_dir, "scene directory")->required();
  train_gen_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* generate_cmd = app.add_subcommand("generate", "synthesize frames from driving audio");
  generate_cmd->add_option("--reference", ref_dir, "reference scene directory")->required();
  generate_cmd->add_option("--audio", audio_path, "driving audio WAV")->required();
  generate_cmd->add_option("--models", models_dir, "trained model directory")->required();
  generate_cmd->add_option("--out", out_dir, "output directory")->required();
  generate_cmd->add_option("--motion-csv", motion_csv,
                           "use this head-motion track instead of the audio prediction");

  auto* eval_cmd = app.add_subcommand("eval", "landmark distance and ssim between runs");
  eval_cmd->add_option("--gen", gen_dir, "generated run directory")->required();
  eval_cmd->add_option("--ref", ref_dir, "reference scene directory")->required();
  eval_cmd->add_option("--ref-offset", ref_offset,
                       "first reference frame the generated run corresponds to");

  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "finite-difference audit of every layer");
  (void)gradcheck_cmd;

  auto* export_cmd =
      app.add_subcommand("export-motion-csv", "disentangle landmarks straight to a pose CSV");
  export_cmd->add_option("--landmarks", landmarks_path, "landmark JSON file")->required();
  export_cmd->add_option("--out", out_dir, "output CSV path")->required();

  std::vector<std::string> argv_storage = args;
  std::vector<const char*> argv = {"rhm"};
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    PipelineConfig config =
        config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed_override >= 0) config.seed = static_cast<uint64_t>(seed_override);
    validate_config(config);

    if (*synth_cmd)
      return do_synth_data(config,
                           subject_seed >= 0 ? static_cast<uint64_t>(subject_seed)
                                             : config.seed,
                           frames_override > 0 ? frames_override : config.frames,
                           motion_scale, expression_scale, out_dir);
    if (*dis_cmd) return do_disentangle(config, landmarks_path, out_dir);
    if (*train_motion_cmd) return do_train_motion(config, data_dirs, out_dir);
    if (*train_expr_cmd)
      return do_train_expression(config, data_dirs, noise_path, out_dir);
    if (*train_gen_cmd) return do_train_generator(config, data_dir, out_dir);
    if (*generate_cmd)
      return do_generate(config, ref_dir, audio_path, models_dir, motion_csv, out_dir);
    if (*eval_cmd) return do_eval(gen_dir, ref_dir, ref_offset);
    if (*gradcheck_cmd) return do_gradcheck(config);
    if (*export_cmd) return do_export_motion(landmarks_path, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}

}  // namespace rhm::pipeline
