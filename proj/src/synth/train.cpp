#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "rhm/core/adam.hpp"
#include "rhm/synth/synth.hpp"

namespace rhm::synth {

namespace {

void save_models(GeneratorModel& gen, DiscriminatorModel& disc,
                 const GenTrainConfig& config) {
  core::save_checkpoint(config.checkpoint_path, generator_named_tensors(gen));
  const std::string dpath = config.disc_checkpoint_path.empty()
                                ? config.checkpoint_path + ".disc"
                                : config.disc_checkpoint_path;
  core::save_checkpoint(dpath, discriminator_named_tensors(disc));
}

}  // namespace

std::vector<LossTerms> train_generator(GeneratorModel& gen, DiscriminatorModel& disc,
                                       const std::vector<GenSample>& dataset,
                                       const GenTrainConfig& config, core::Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train_generator: empty dataset");
  if (config.save_every > 0 && config.checkpoint_path.empty())
    throw std::invalid_argument("train_generator: save_every set without checkpoint_path");

  const bool pct_substitute =
      config.perceptual == nullptr || config.perceptual->layers.empty();
  std::ofstream log;
  if (!config.log_path.empty()) {
    log.open(config.log_path);
    if (!log) throw std::runtime_error("train_generator: cannot open " + config.log_path);
    log << "step,term,value\n";
  }

  core::Adam g_adam(generator_tensors(gen));
  core::Adam d_adam(discriminator_tensors(disc));
  if (config.save_every > 0) save_models(gen, disc, config);

  std::vector<LossTerms> history;
  history.reserve(static_cast<size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    const auto& sample =
        dataset[static_cast<size_t>(rng.uniform_int(static_cast<int>(dataset.size())))];

    std::vector<core::Tensor> ref_lmks(sample.ref_lmk_images.begin(),
                                       sample.ref_lmk_images.end());
    std::vector<core::Tensor> ref_frames(sample.ref_frames.begin(),
                                         sample.ref_frames.end());
    auto alphas = activation_maps(gen, ref_lmks, sample.query_lmk_image);
    auto [e_y, e_l] = embed_references(gen, ref_frames, ref_lmks, alphas);
    auto theta = fuse(gen, e_l, e_y);
    auto fake = compose_frame(gen, theta, e_y, sample.query_lmk_image,
                              sample.warped_projected, sample.warped_matched);
    auto [g_loss, terms] = total_loss<float>(
        disc, fake, sample.target, sample.query_lmk_image, sample.warped_projected,
        sample.warped_matched, sample.vis_projected, sample.vis_matched, config.lambdas,
        config.perceptual);
    if (!std::isfinite(terms.total))
      throw std::runtime_error(
          "train_generator: non-finite generator loss at step " + std::to_string(step) +
          (config.save_every > 0 ? "; last-good checkpoint retained" : ""));
    g_adam.zero_grad();
    d_adam.zero_grad();
    core::backward(g_loss);
    g_adam.step();

    auto d_loss = discriminator_loss(disc, fake.detach(), sample.target,
                                     sample.query_lmk_image, config.lambdas.flavor);
    if (!std::isfinite(static_cast<double>(d_loss.value())))
      throw std::runtime_error(
          "train_generator: non-finite discriminator loss at step " +
          std::to_string(step) +
          (config.save_every > 0 ? "; last-good checkpoint retained" : ""));
    d_adam.zero_grad();
    core::backward(d_loss);
    d_adam.step();

    if (log) {
      log << step << ",gan," << terms.gan << "\n";
      log << step << ",fm," << terms.fm << "\n";
      log << step << "," << (pct_substitute ? "pct_substitute" : "pct") << ","
          << terms.pct << "\n";
      log << step << ",wrp," << terms.wrp << "\n";
      log << step << ",disc," << d_loss.value() << "\n";
      log << step << ",total," << terms.total << "\n";
    }
    history.push_back(terms);

    if (config.save_every > 0 && (step + 1) % config.save_every == 0)
      save_models(gen, disc, config);
  }
  if (config.save_every > 0) save_models(gen, disc, config);
  return history;
}

}  // namespace rhm::synth
