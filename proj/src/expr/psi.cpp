#include <cmath>
#include <stdexcept>

#include "rhm/core/adam.hpp"
#include "rhm/core/ops.hpp"
#include "rhm/expr/expr.hpp"

namespace rhm::expr {

namespace {

int conv_out_len(int len, int k, int stride, int pad) {
  return (len + 2 * pad - k) / stride + 1;
}

core::Tensor coeffs_tensor(const ExpressionCoeffs& c) {
  std::vector<float> v(kNumCoeffs);
  for (int i = 0; i < kNumCoeffs; ++i) v[(size_t)i] = (float)c.coeffs[i];
  return core::Tensor::from({kNumCoeffs}, v);
}

}  // namespace

PsiModel make_psi_model(core::Rng& rng, int window_len) {
  if (window_len < 64) {
    throw std::invalid_argument("make_psi_model: window of " +
                                std::to_string(window_len) + " samples is too short");
  }
  PsiModel model;
  model.window_len = window_len;
  model.audio_encoder.push_back(core::make_conv1d<float>(1, 8, 8, 4, 2, rng));
  model.audio_encoder.push_back(core::make_conv1d<float>(8, 16, 8, 4, 2, rng));
  model.audio_encoder.push_back(core::make_conv1d<float>(16, 16, 8, 4, 2, rng));
  int len = window_len;
  for (int i = 0; i < 3; ++i) len = conv_out_len(len, 8, 4, 2);
  model.audio_encoder.push_back(core::make_linear<float>(16 * len, 64, rng));
  model.audio_encoder.push_back(core::make_linear<float>(64, 32, rng));

  model.landmark_encoder.push_back(core::make_linear<float>(kNumCoeffs, 32, rng));
  model.landmark_encoder.push_back(core::make_linear<float>(32, 32, rng));

  model.decoder.push_back(core::make_linear<float>(64, 64, rng));
  core::LayerParams head = core::make_linear<float>(64, kNumCoeffs, rng);
  // zero start: a fresh model predicts zero, and early training is stable
  std::fill(head.weight.data().begin(), head.weight.data().end(), 0.0f);
  model.decoder.push_back(head);
  return model;
}

core::Tensor predict_expression_graph(const PsiModel& model,
                                      std::span<const float> window,
                                      const core::Tensor& reference) {
  if ((int)window.size() != model.window_len) {
    throw std::invalid_argument("predict_expression: window has " +
                                std::to_string(window.size()) + " samples, model expects " +
                                std::to_string(model.window_len));
  }
  if (reference.rank() != 1 || reference.dim(0) != kNumCoeffs) {
    throw std::invalid_argument("predict_expression: reference must be [" +
                                std::to_string(kNumCoeffs) + "], got " +
                                core::shape_str(reference.shape()));
  }

  core::Tensor a = core::Tensor::from({1, model.window_len},
                                      {window.begin(), window.end()});
  for (size_t i = 0; i < model.audio_encoder.size(); ++i) {
    const auto& layer = model.audio_encoder[i];
    if (layer.kind == core::LayerKind::Linear && a.rank() != 1) {
      a = core::reshape(a, {(int)a.size()});
    }
    a = core::forward(layer, a);
    if (i + 1 < model.audio_encoder.size()) a = core::relu(a);
  }

  core::Tensor l = reference;
  for (size_t i = 0; i < model.landmark_encoder.size(); ++i) {
    l = core::forward(model.landmark_encoder[i], l);
    if (i + 1 < model.landmark_encoder.size()) l = core::relu(l);
  }

  core::Tensor h = core::concat<float>({a, l}, 0);
  for (size_t i = 0; i < model.decoder.size(); ++i) {
    h = core::forward(model.decoder[i], h);
    if (i + 1 < model.decoder.size()) h = core::relu(h);
  }
  return h;
}

ExpressionCoeffs predict_expression(const PsiModel& model,
                                    std::span<const float> window,
                                    const ExpressionCoeffs& reference) {
  const core::Tensor out =
      predict_expression_graph(model, window, coeffs_tensor(reference));
  ExpressionCoeffs coeffs;
  for (int i = 0; i < kNumCoeffs; ++i) coeffs.coeffs[i] = out.data()[(size_t)i];
  return coeffs;
}

std::vector<float> train_expression_learner(PsiModel& model,
                                            const std::vector<PsiSample>& dataset,
                                            int epochs, core::Rng& rng,
                                            const AudioTrack* noise) {
  if (dataset.empty()) {
    throw std::invalid_argument("train_expression_learner: empty dataset");
  }
  std::vector<core::Tensor> params;
  for (const auto& [name, t] : psi_named_tensors(model)) params.push_back(t);
  core::Adam opt(params);

  std::vector<float> history;
  history.reserve((size_t)epochs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (size_t si = 0; si < dataset.size(); ++si) {
      const PsiSample& sample = dataset[si];
      std::span<const float> window = sample.window;
      AugmentedWindow aug;
      if (noise) {
        aug = augment_with_noise(sample.window, *noise, rng);
        window = aug.samples;
      }
      opt.zero_grad();
      core::Tensor pred =
          predict_expression_graph(model, window, coeffs_tensor(sample.reference));
      core::Tensor loss = core::mse(pred, coeffs_tensor(sample.target));
      const float value = loss.data()[0];
      if (!std::isfinite(value)) {
        throw std::runtime_error("train_expression_learner: loss " +
                                 std::to_string(value) + " at epoch " +
                                 std::to_string(epoch) + ", sample " +
                                 std::to_string(si));
      }
      core::backward(loss);
      opt.step();
      epoch_loss += value;
    }
    history.push_back((float)(epoch_loss / dataset.size()));
  }
  return history;
}

core::NamedTensors psi_named_tensors(const PsiModel& model) {
  core::NamedTensors named;
  auto push = [&named](const std::string& prefix,
                       const std::vector<core::LayerParams>& layers) {
    for (size_t i = 0; i < layers.size(); ++i) {
      named.emplace_back(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
      named.emplace_back(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
    }
  };
  push("psi.audio", model.audio_encoder);
  push("psi.landmark", model.landmark_encoder);
  push("psi.decoder", model.decoder);
  return named;
}

}  // namespace rhm::expr
