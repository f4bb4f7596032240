#include "rhm/core/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace rhm::core {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(static_cast<size_t>(params_[i].size()), 0.0f);
    v_[i].assign(static_cast<size_t>(params_[i].size()), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad())
      throw std::runtime_error("adam: parameter " + std::to_string(i) + " of shape " +
                               shape_str(p.shape()) + " has no grad");
    auto g = p.grad_view();
    auto d = p.data();
    for (size_t j = 0; j < d.size(); ++j) {
      float gj = g[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0f - cfg_.beta1) * gj;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0f - cfg_.beta2) * gj * gj;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      d[j] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.drop_grad();
}

}  // namespace rhm::core
