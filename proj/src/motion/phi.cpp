#include "rhm/motion/motion.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "rhm/core/adam.hpp"
#include "rhm/core/ops.hpp"

namespace rhm::motion {

namespace {

int conv_out_len(int len, int k, int stride, int pad) {
  return (len + 2 * pad - k) / stride + 1;
}

// Linear layers flatten whatever the convs produced; ReLU between layers.
template <class T>
core::TensorT<T> run_stack(const std::vector<core::LayerParamsT<T>>& stack,
                           core::TensorT<T> x) {
  for (size_t i = 0; i < stack.size(); ++i) {
    if (stack[i].kind == core::LayerKind::Linear && x.rank() != 1) {
      x = core::reshape(x, {static_cast<int>(x.size())});
    }
    x = core::forward(stack[i], x);
    if (i + 1 < stack.size()) x = core::relu(x);
  }
  return x;
}

template <class T>
core::TensorT<T> audio_tensor(std::span<const float> samples) {
  std::vector<T> data(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) data[i] = static_cast<T>(samples[i]);
  return core::TensorT<T>::from({1, static_cast<int>(samples.size())}, std::move(data));
}

// Reference clip -> flat hyper-weight vector [6*256 + 6].
template <class T>
core::TensorT<T> hyper_graph(const PhiModelT<T>& model,
                             const core::TensorT<T>& motion_ref,
                             const core::TensorT<T>& audio_ref) {
  auto m = run_stack(model.ref_motion, motion_ref);
  auto a = run_stack(model.ref_audio, audio_ref);
  return run_stack(model.hyper, core::concat<T>({m, a}, 0));
}

// Stacked drive audio -> per-frame features [256, n].
template <class T>
core::TensorT<T> features_graph(const PhiModelT<T>& model,
                                const core::TensorT<T>& drive_stack) {
  auto x = core::relu(core::forward(model.extrap[0], drive_stack));
  x = core::relu(core::forward(model.extrap[1], x));
  x = core::reshape(x, {x.dim(0) * x.dim(1), x.dim(2)});
  return core::forward(model.extrap[2], x);
}

void check_audio_rate(const expr::AudioTrack& audio, const char* where) {
  if (audio.sample_rate != kAudioRate) {
    throw std::invalid_argument(std::string(where) + ": audio rate " +
                                std::to_string(audio.sample_rate) + ", expected " +
                                std::to_string(kAudioRate));
  }
}

}  // namespace

template <class T>
PhiModelT<T> make_phi_model(core::Rng& rng, int tau) {
  if (tau < 4) {
    throw std::invalid_argument("make_phi_model: reference length must be >= 4, got " +
                                std::to_string(tau));
  }
  PhiModelT<T> model;
  model.tau = tau;

  model.ref_motion.push_back(core::make_conv1d<T>(kPoseDim, 16, 5, 2, 2, rng));
  model.ref_motion.push_back(core::make_conv1d<T>(16, 16, 5, 2, 2, rng));
  const int mlen = conv_out_len(conv_out_len(tau, 5, 2, 2), 5, 2, 2);
  model.ref_motion.push_back(core::make_linear<T>(16 * mlen, 64, rng));

  // strides 8*10*25 pool exactly one 2000-sample frame per step
  model.ref_audio.push_back(core::make_conv1d<T>(1, 8, 8, 8, 0, rng));
  model.ref_audio.push_back(core::make_conv1d<T>(8, 16, 10, 10, 0, rng));
  model.ref_audio.push_back(core::make_conv1d<T>(16, 16, 25, 25, 0, rng));
  model.ref_audio.push_back(core::make_linear<T>(16 * tau, 64, rng));

  model.hyper.push_back(core::make_linear<T>(128, 128, rng));
  auto tail = core::make_linear<T>(128, kPoseDim * kFeatureDim + kPoseDim, rng);
  std::fill(tail.weight.data().begin(), tail.weight.data().end(), T(0));
  model.hyper.push_back(std::move(tail));

  // width per stage: 2000n -> 1000n -> 500n -> n, exact for every n >= 1
  model.extrap.push_back(core::make_conv2d<T>(1, 4, 2, 2, 0, rng));
  model.extrap.push_back(core::make_conv2d<T>(4, 8, 2, 2, 0, rng));
  model.extrap.push_back(core::make_conv1d<T>(8, kFeatureDim, kSamplesPerFrame / 4,
                                              kSamplesPerFrame / 4, 0, rng));

  model.discriminator.push_back(core::make_linear<T>(2 * kPoseDim, 32, rng));
  model.discriminator.push_back(core::make_linear<T>(32, 1, rng));
  return model;
}

template <class T>
core::TensorT<T> motion_tensor(const geom::MotionSequence& motion, int start, int count) {
  if (start < 0 || count < 1 ||
      start + count > static_cast<int>(motion.poses.size())) {
    throw std::invalid_argument("motion_tensor: frames [" + std::to_string(start) +
                                "," + std::to_string(start + count) + ") out of " +
                                std::to_string(motion.poses.size()));
  }
  std::vector<T> data(static_cast<size_t>(kPoseDim) * count);
  for (int t = 0; t < count; ++t) {
    const Eigen::Matrix<double, 6, 1> h = geom::encode_pose(motion.poses[(size_t)(start + t)]);
    for (int d = 0; d < kPoseDim; ++d) {
      data[static_cast<size_t>(d) * count + t] = static_cast<T>(h[d]);
    }
  }
  return core::TensorT<T>::from({kPoseDim, count}, std::move(data));
}

template <class T>
core::TensorT<T> stack_drive_audio(std::span<const float> samples) {
  if (samples.empty() || samples.size() % kSamplesPerFrame != 0) {
    throw std::invalid_argument("stack_drive_audio: length " +
                                std::to_string(samples.size()) +
                                " is not a positive multiple of " +
                                std::to_string(kSamplesPerFrame));
  }
  const int n = static_cast<int>(samples.size()) / kSamplesPerFrame;
  std::vector<T> data(static_cast<size_t>(kStackRows) * n * kSamplesPerFrame, T(0));
  for (int t = 0; t < n; ++t) {
    for (int r = 0; r < kStackRows; ++r) {
      const int src = t - 3 + r;
      if (src < 0 || src >= n) continue;
      T* dst = data.data() + (static_cast<size_t>(r) * n + t) * kSamplesPerFrame;
      const float* s = samples.data() + static_cast<size_t>(src) * kSamplesPerFrame;
      for (int i = 0; i < kSamplesPerFrame; ++i) dst[i] = static_cast<T>(s[i]);
    }
  }
  return core::TensorT<T>::from({1, kStackRows, n * kSamplesPerFrame}, std::move(data));
}

template <class T>
core::TensorT<T> predict_motion_graph(const PhiModelT<T>& model,
                                      const core::TensorT<T>& motion_ref,
                                      const core::TensorT<T>& audio_ref,
                                      const core::TensorT<T>& drive_stack) {
  if (motion_ref.rank() != 2 || motion_ref.dim(0) != kPoseDim ||
      motion_ref.dim(1) != model.tau) {
    throw std::invalid_argument("predict_motion_graph: reference motion " +
                                core::shape_str(motion_ref.shape()) + ", expected [" +
                                std::to_string(kPoseDim) + "," +
                                std::to_string(model.tau) + "]");
  }
  if (audio_ref.rank() != 2 || audio_ref.dim(0) != 1 ||
      audio_ref.dim(1) != model.tau * kSamplesPerFrame) {
    throw std::invalid_argument("predict_motion_graph: reference audio " +
                                core::shape_str(audio_ref.shape()) + ", expected [1," +
                                std::to_string(model.tau * kSamplesPerFrame) + "]");
  }
  if (drive_stack.rank() != 3 || drive_stack.dim(0) != 1 ||
      drive_stack.dim(1) != kStackRows || drive_stack.dim(2) <= 0 ||
      drive_stack.dim(2) % kSamplesPerFrame != 0) {
    throw std::invalid_argument("predict_motion_graph: drive stack " +
                                core::shape_str(drive_stack.shape()) +
                                ", expected [1," + std::to_string(kStackRows) +
                                ",n*" + std::to_string(kSamplesPerFrame) + "]");
  }
  auto w = hyper_graph(model, motion_ref, audio_ref);
  auto W = core::reshape(core::narrow(w, 0, kPoseDim * kFeatureDim),
                         {kPoseDim, kFeatureDim});
  auto b = core::narrow(w, kPoseDim * kFeatureDim, kPoseDim);
  auto feat = features_graph(model, drive_stack);
  return core::add_rowwise(core::matmul(W, feat), b);
}

template <class T>
core::TensorT<T> discriminator_graph(const PhiModelT<T>& model,
                                     const core::TensorT<T>& motion_nc) {
  if (motion_nc.rank() != 2 || motion_nc.dim(1) != kPoseDim || motion_nc.dim(0) < 2) {
    throw std::invalid_argument("discriminator_graph: expected [n>=2," +
                                std::to_string(kPoseDim) + "], got " +
                                core::shape_str(motion_nc.shape()));
  }
  return run_stack(model.discriminator, core::moments_rows(motion_nc));
}

HyperWeights encode_reference(const PhiModel& model, const geom::MotionSequence& motion,
                              const expr::AudioTrack& audio) {
  if (static_cast<int>(motion.poses.size()) != model.tau) {
    throw std::invalid_argument("encode_reference: expected " +
                                std::to_string(model.tau) + " reference frames, got " +
                                std::to_string(motion.poses.size()));
  }
  check_audio_rate(audio, "encode_reference");
  const size_t want = static_cast<size_t>(model.tau) * kSamplesPerFrame;
  if (audio.samples.size() != want) {
    throw std::invalid_argument("encode_reference: expected " + std::to_string(want) +
                                " audio samples, got " +
                                std::to_string(audio.samples.size()));
  }
  auto w = hyper_graph(model, motion_tensor<float>(motion, 0, model.tau),
                       audio_tensor<float>(audio.samples));
  HyperWeights out;
  for (int i = 0; i < kPoseDim; ++i) {
    for (int j = 0; j < kFeatureDim; ++j) {
      out.W(i, j) = w.data()[static_cast<size_t>(i) * kFeatureDim + j];
    }
    out.b[i] = w.data()[static_cast<size_t>(kPoseDim) * kFeatureDim + i];
  }
  return out;
}

geom::MotionSequence extrapolate(const PhiModel& model, const HyperWeights& weights,
                                 const expr::AudioTrack& audio, double fps) {
  check_audio_rate(audio, "extrapolate");
  if (!weights.W.allFinite() || !weights.b.allFinite()) {
    throw std::invalid_argument("extrapolate: non-finite hyper weights");
  }
  auto feat = features_graph(model, stack_drive_audio<float>(audio.samples));
  const int n = feat.dim(1);
  geom::MotionSequence out;
  out.fps = fps;
  out.poses.resize(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t) {
    Eigen::Matrix<double, kFeatureDim, 1> f;
    for (int j = 0; j < kFeatureDim; ++j) {
      f[j] = feat.data()[static_cast<size_t>(j) * n + t];
    }
    out.poses[static_cast<size_t>(t)] = geom::decode_pose(weights.W * f + weights.b);
  }
  return out;
}

double discriminator_score(const PhiModel& model, const geom::MotionSequence& motion) {
  const int n = static_cast<int>(motion.poses.size());
  if (n < 2) {
    throw std::invalid_argument("discriminator_score: need >= 2 frames, got " +
                                std::to_string(n));
  }
  std::vector<float> data(static_cast<size_t>(n) * kPoseDim);
  for (int t = 0; t < n; ++t) {
    const Eigen::Matrix<double, 6, 1> h = geom::encode_pose(motion.poses[(size_t)t]);
    for (int d = 0; d < kPoseDim; ++d) {
      data[static_cast<size_t>(t) * kPoseDim + d] = static_cast<float>(h[d]);
    }
  }
  auto s = discriminator_graph(model, core::Tensor::from({n, kPoseDim}, std::move(data)));
  return s.data()[0];
}

std::vector<float> train_motion_learner(PhiModel& model,
                                        const std::vector<PhiSample>& dataset,
                                        int epochs, core::Rng& rng,
                                        double adversarial_weight) {
  if (dataset.empty()) throw std::invalid_argument("train_motion_learner: empty dataset");
  if (adversarial_weight < 0) {
    throw std::invalid_argument("train_motion_learner: negative adversarial weight");
  }

  struct Prepared {
    core::Tensor motion_ref, audio_ref, drive_stack, target, real_nc;
    int n = 0;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(dataset.size());
  for (size_t s = 0; s < dataset.size(); ++s) {
    const PhiSample& sample = dataset[s];
    const int total = static_cast<int>(sample.motion.poses.size());
    if (total <= model.tau) {
      throw std::invalid_argument("train_motion_learner: sample " + std::to_string(s) +
                                  " has " + std::to_string(total) +
                                  " frames, need more than tau = " +
                                  std::to_string(model.tau));
    }
    check_audio_rate(sample.audio, "train_motion_learner");
    const size_t want = static_cast<size_t>(total) * kSamplesPerFrame;
    if (sample.audio.samples.size() != want) {
      throw std::invalid_argument("train_motion_learner: sample " + std::to_string(s) +
                                  " has " + std::to_string(sample.audio.samples.size()) +
                                  " audio samples for " + std::to_string(total) +
                                  " frames, expected " + std::to_string(want));
    }
    Prepared p;
    p.n = total - model.tau;
    p.motion_ref = motion_tensor<float>(sample.motion, 0, model.tau);
    p.audio_ref = audio_tensor<float>(
        std::span<const float>(sample.audio.samples.data(),
                               static_cast<size_t>(model.tau) * kSamplesPerFrame));
    p.drive_stack = stack_drive_audio<float>(std::span<const float>(
        sample.audio.samples.data() + static_cast<size_t>(model.tau) * kSamplesPerFrame,
        static_cast<size_t>(p.n) * kSamplesPerFrame));
    p.target = motion_tensor<float>(sample.motion, model.tau, p.n);
    if (p.n >= 2) {
      std::vector<float> real(static_cast<size_t>(p.n) * kPoseDim);
      for (int t = 0; t < p.n; ++t) {
        for (int d = 0; d < kPoseDim; ++d) {
          real[static_cast<size_t>(t) * kPoseDim + d] =
              p.target.data()[static_cast<size_t>(d) * p.n + t];
        }
      }
      p.real_nc = core::Tensor::from({p.n, kPoseDim}, std::move(real));
    }
    prepared.push_back(std::move(p));
  }

  std::vector<core::Tensor> gen_params;
  for (auto* stack : {&model.ref_motion, &model.ref_audio, &model.hyper, &model.extrap}) {
    for (auto& layer : *stack) {
      for (auto& t : core::layer_tensors(layer)) gen_params.push_back(t);
    }
  }
  core::Adam gen_opt(gen_params);
  std::optional<core::Adam> disc_opt;
  if (adversarial_weight > 0) {
    std::vector<core::Tensor> disc_params;
    for (auto& layer : model.discriminator) {
      for (auto& t : core::layer_tensors(layer)) disc_params.push_back(t);
    }
    disc_opt.emplace(std::move(disc_params));
  }

  std::vector<float> history;
  history.reserve(static_cast<size_t>(epochs));
  std::vector<int> order(dataset.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[(size_t)rng.uniform_int(static_cast<int>(i))]);
    }
    double epoch_mse = 0.0;
    for (int idx : order) {
      Prepared& p = prepared[(size_t)idx];
      // the moment discriminator needs a std; skip the adversarial term for
      // single-frame tails
      const bool adv = disc_opt.has_value() && p.n >= 2;

      auto pred = predict_motion_graph(model, p.motion_ref, p.audio_ref, p.drive_stack);
      auto loss_mse = core::mse(pred, p.target);
      core::Tensor loss = loss_mse;
      if (adv) {
        auto s = discriminator_graph(model, core::transpose2d(pred));
        loss = core::add(loss, core::scale(core::square(core::add_scalar(s, -1.0f)),
                                           static_cast<float>(adversarial_weight)));
      }
      if (!std::isfinite(loss.data()[0])) {
        throw std::runtime_error("train_motion_learner: non-finite generator loss at epoch " +
                                 std::to_string(epoch) + ", sample " + std::to_string(idx));
      }
      gen_opt.zero_grad();
      core::backward(loss);
      gen_opt.step();
      epoch_mse += loss_mse.data()[0];

      if (adv) {
        std::vector<float> fake(static_cast<size_t>(p.n) * kPoseDim);
        for (int t = 0; t < p.n; ++t) {
          for (int d = 0; d < kPoseDim; ++d) {
            fake[static_cast<size_t>(t) * kPoseDim + d] =
                pred.data()[static_cast<size_t>(d) * p.n + t];
          }
        }
        auto s_real = discriminator_graph(model, p.real_nc);
        auto s_fake = discriminator_graph(
            model, core::Tensor::from({p.n, kPoseDim}, std::move(fake)));
        auto d_loss = core::add(core::square(core::add_scalar(s_real, -1.0f)),
                                core::square(s_fake));
        if (!std::isfinite(d_loss.data()[0])) {
          throw std::runtime_error(
              "train_motion_learner: non-finite discriminator loss at epoch " +
              std::to_string(epoch) + ", sample " + std::to_string(idx));
        }
        disc_opt->zero_grad();
        core::backward(d_loss);
        disc_opt->step();
      }
    }
    history.push_back(static_cast<float>(epoch_mse / (double)dataset.size()));
  }
  return history;
}

core::NamedTensors phi_named_tensors(PhiModel& model) {
  core::NamedTensors out;
  auto emit = [&out](const char* prefix, std::vector<core::LayerParams>& stack) {
    for (size_t i = 0; i < stack.size(); ++i) {
      const std::string base = std::string("phi.") + prefix + "." + std::to_string(i);
      out.emplace_back(base + ".weight", stack[i].weight);
      out.emplace_back(base + ".bias", stack[i].bias);
    }
  };
  emit("ref_motion", model.ref_motion);
  emit("ref_audio", model.ref_audio);
  emit("hyper", model.hyper);
  emit("extrap", model.extrap);
  emit("disc", model.discriminator);
  return out;
}

#define RHM_INSTANTIATE_PHI(T)                                                        \
  template PhiModelT<T> make_phi_model<T>(core::Rng&, int);                           \
  template core::TensorT<T> motion_tensor<T>(const geom::MotionSequence&, int, int);  \
  template core::TensorT<T> stack_drive_audio<T>(std::span<const float>);             \
  template core::TensorT<T> predict_motion_graph<T>(                                  \
      const PhiModelT<T>&, const core::TensorT<T>&, const core::TensorT<T>&,          \
      const core::TensorT<T>&);                                                       \
  template core::TensorT<T> discriminator_graph<T>(const PhiModelT<T>&,               \
                                                   const core::TensorT<T>&);

RHM_INSTANTIATE_PHI(float)
RHM_INSTANTIATE_PHI(double)
#undef RHM_INSTANTIATE_PHI

}  // namespace rhm::motion
