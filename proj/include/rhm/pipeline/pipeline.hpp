#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rhm/expr/expr.hpp"
#include "rhm/geom/geom.hpp"
#include "rhm/motion/motion.hpp"
#include "rhm/render/image_io.hpp"
#include "rhm/render/render.hpp"
#include "rhm/synth/synth.hpp"

namespace rhm::pipeline {

/// Run-wide knobs shared by every stage and every CLI subcommand. Serialized
/// as flat JSON; unknown keys are rejected so config typos fail loudly.
struct PipelineConfig {
  int tau = 64;        // reference clip length, frames
  int k = 8;           // reference set size fed to the generator
  double fps = 25.0;
  int sample_rate = 50000;
  int image_size = 64;  // square frames, multiple of 16
  int frames = 128;     // synthetic scene length T
  uint64_t seed = 1;
  synth::LossLambdas lambdas;
  int generator_steps = 3000;
  int motion_epochs = 300;
  int expression_epochs = 500;
  double match_temperature = 0.0;  // training-time reference-match perturbation
  bool matting = false;  // blend generated frames with the matched warp on output
};

/// Throws std::invalid_argument unless tau >= k >= 1, all sizes are positive,
/// image_size is a positive multiple of 16, and sample_rate/fps divide into a
/// whole number of samples per frame.
void validate_config(const PipelineConfig& config);

std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);
PipelineConfig load_config(const std::string& path);

/// 16-hex-digit FNV-1a of the canonical JSON serialization.
std::string config_hash(const PipelineConfig& config);
/// Same digest over a file's bytes; throws if the file cannot be read.
std::string file_hash(const std::string& path);

/// Default orthographic camera scaled to the configured frame size (the
/// stock framing is defined at 64 px).
render::Camera scene_camera(int image_size);

// ---- synthetic scenes ---------------------------------------------------

/// Per-subject parameters drawn from the subject seed: the head-motion style
/// (nod frequency/amplitude, sway, drift), expression gains, and the texture
/// pattern. Distinct subjects get distinct nod frequencies, which is the
/// identity signal the motion learner is meant to recover.
struct SceneStyle {
  double nod_hz = 1.5;    // pitch oscillation driven by the audio envelope
  double nod_amp = 0.15;
  double sway_hz = 0.4;   // yaw oscillation
  double sway_amp = 0.12;
  double roll_amp = 0.05;
  double trans_amp = 0.06;
  double envelope_hz = 0.5;  // audio loudness modulation
  double carrier_hz = 220.0;
  double lip_gain = 0.12;  // canonical units of lip opening at peak energy
  double brow_gain = 0.05;
  double brow_hz = 0.3;
  int texture_variant = 0;  // bands / columns / checker / rings
};

/// Fully labeled synthetic clip: audio, ground-truth poses, expression
/// tracks, observed landmarks, and rendered frames of one textured subject.
struct SyntheticScene {
  SceneStyle style;
  geom::CanonicalFace canonical;
  render::TexturedMesh mesh;  // neutral-expression subject mesh, aligned space
  std::vector<render::Image> frames;
  std::vector<geom::LandmarkSet> landmarks;  // observed (posed) space
  std::vector<geom::LandmarkSet> aligned;    // canonical + expression offsets
  geom::MotionSequence motion;               // alignment-convention poses
  std::vector<double> lip_track;  // per-frame lip opening, canonical units
  expr::AudioTrack audio;
};

/// Deterministic scene generator. Motion is sinusoid-plus-smooth-noise with
/// the nod amplitude modulated by the audio envelope; the lip track is
/// proportional to measured per-frame audio energy; expression offsets avoid
/// the near-rigid landmarks so rigid fitting recovers the poses exactly.
/// The scale knobs damp motion/expression to zero for degenerate tests.
/// Throws unless length > config.tau.
SyntheticScene synth_scene(uint64_t subject_seed, int length,
                           const PipelineConfig& config, double motion_scale = 1.0,
                           double expression_scale = 1.0);

/// Writes dir/frames/frame_%05d.png, landmarks.json, motion.csv, audio.wav.
void save_scene(const std::string& dir, const SyntheticScene& scene);

/// Loads frame_00000.png, frame_00001.png, ... until the first missing index.
std::vector<render::Image> load_frame_dir(const std::string& dir);

// ---- metrics ------------------------------------------------------------

/// Mean Euclidean landmark distance over frames and points after removing
/// each frame's centroid from both sequences. Throws on length mismatch or
/// empty input.
double compute_lmd(const std::vector<geom::LandmarkSet>& generated,
                   const std::vector<geom::LandmarkSet>& target);

/// Structural similarity on the grayscale conversions: 11x11 Gaussian window
/// (sigma 1.5), C1=(0.01L)^2, C2=(0.03L)^2 on the [0,1] luminance range,
/// averaged over fully interior windows. Throws on size mismatch or frames
/// smaller than the window.
double compute_ssim(const render::Image& a, const render::Image& b);

// ---- generation ---------------------------------------------------------

/// The tau conditioning frames with their landmarks and audio span.
struct ReferenceClip {
  std::vector<render::Image> frames;
  std::vector<geom::LandmarkSet> landmarks;  // observed space
  expr::AudioTrack audio;
};

/// Trained components the generation pass composes. `checkpoint_hashes` is
/// whatever the loader recorded (file digests when loaded from disk); when
/// empty the manifest falls back to digests of the in-memory parameters.
struct Models {
  motion::PhiModel phi;
  expr::PsiModel psi;
  expr::ExpressionBasis basis;
  synth::GeneratorModel gen;
  std::map<std::string, std::string> checkpoint_hashes;
};

/// Fresh untrained models sized for the config.
Models make_models(const PipelineConfig& config, core::Rng& rng);
/// phi.ckpt / psi.ckpt / basis.json / gen.ckpt under `dir`.
void save_models(const std::string& dir, Models& models);
Models load_models(const std::string& dir, const PipelineConfig& config);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct GenerateResult {
  std::vector<render::Image> frames;
  geom::MotionSequence motion;  // predicted poses
  std::vector<expr::ExpressionCoeffs> coeffs;
  std::vector<geom::LandmarkSet> landmarks;  // predicted, observed space
  std::vector<StageTiming> timings;
  std::string manifest_path;
};

/// The K frame indices the generator conditions on: evenly spaced over the
/// tau reference frames (the middle frame when k == 1).
std::vector<int> reference_subset(int tau, int k);

/// Per-frame conditioning inputs shared by training-set construction and
/// generation: the query landmark raster, the reference mesh re-projected to
/// the target pose, and the pose-matched reference frame warped by the rigid
/// flow between its pose and the target's.
struct FrameInputs {
  synth::LandmarkImage query_lmk;
  core::Tensor warped_projected;  // [3,s,s]
  std::vector<float> vis_projected;
  core::Tensor warped_matched;  // [3,s,s]
  std::vector<float> vis_matched;
  int matched_index = 0;  // position within the reference subset
};

/// With match_temperature > 0 (training-time robustness) the matched index is
/// perturbed through `rng`; generation passes the defaults and stays
/// deterministic.
FrameInputs build_frame_inputs(const render::TexturedMesh& reference_mesh,
                               const geom::RigidTransform& reference_pose,
                               const geom::LandmarkSet& target_aligned,
                               const geom::RigidTransform& target_pose,
                               const std::vector<render::Image>& ref_frames,
                               const std::vector<geom::RigidTransform>& ref_poses,
                               const render::Camera& camera,
                               double match_temperature = 0.0,
                               core::Rng* rng = nullptr);

/// Self-supervised training set over a labeled clip: every frame becomes a
/// target conditioned on the first-tau reference window (poses and aligned
/// landmarks re-derived through rigid fitting, reference mesh lifted from the
/// most frontal reference frame). With match_temperature > 0 the matched
/// reference is perturbed through `rng`; otherwise `rng` is untouched.
std::vector<synth::GenSample> build_generator_dataset(
    const std::vector<render::Image>& frames,
    const std::vector<geom::LandmarkSet>& landmarks, const PipelineConfig& config,
    core::Rng& rng);

/// Audio-driven synthesis: disentangle the reference clip, lift the textured
/// mesh from its most frontal frame, extrapolate head motion from the driving
/// audio (or take `motion_override` verbatim), predict expression
/// coefficients per frame, and compose each output frame from the landmark
/// raster, the re-projected mesh, and the pose-matched warped reference.
/// Writes frames/frame_%05d.png, landmarks.json, motion.csv, coeffs.csv, and
/// manifest.json under `output_dir`. Deterministic: equal inputs give
/// byte-identical outputs. Errors carry the stage name (and frame index
/// inside the per-frame loop).
GenerateResult generate_video(const PipelineConfig& config,
                              const ReferenceClip& reference,
                              const expr::AudioTrack& driving_audio, Models& models,
                              const std::string& output_dir,
                              const geom::MotionSequence* motion_override = nullptr);

/// manifest.json: config hash, checkpoint digests, per-stage timings, plus
/// any extra top-level entries (JSON text values).
void write_manifest(const std::string& dir, const PipelineConfig& config,
                    const std::map<std::string, std::string>& checkpoint_hashes,
                    const std::vector<StageTiming>& timings,
                    const std::map<std::string, std::string>& extra = {});

// ---- gradient audit ------------------------------------------------------

struct GradCheckRow {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Finite-difference audit of every differentiable building block (double
/// instantiation), the soft rasterizer, and the full scalar compose path.
std::vector<GradCheckRow> run_gradcheck(uint64_t seed);

/// Fixed-width table; returns true when every row passes.
bool print_gradcheck(const std::vector<GradCheckRow>& rows, std::ostream& out);

// ---- command line --------------------------------------------------------

/// The `rhm` tool: synth-data, disentangle, train-motion, train-expression,
/// train-generator, generate, eval, gradcheck, export-motion-csv, with
/// --config/--seed shared by all. Returns 0 on success, 1 on usage errors,
/// 2 on runtime failures. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace rhm::pipeline
