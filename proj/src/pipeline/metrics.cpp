#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rhm/pipeline/pipeline.hpp"

namespace rhm::pipeline {

double compute_lmd(const std::vector<geom::LandmarkSet>& generated,
                   const std::vector<geom::LandmarkSet>& target) {
  if (generated.size() != target.size())
    throw std::invalid_argument("compute_lmd: sequence lengths differ");
  if (generated.empty()) throw std::invalid_argument("compute_lmd: empty sequences");

  double total = 0.0;
  for (size_t f = 0; f < generated.size(); ++f) {
    const auto& a = generated[f].points;
    const auto& b = target[f].points;
    const Eigen::RowVector3d ca = a.colwise().mean();
    const Eigen::RowVector3d cb = b.colwise().mean();
    double frame = 0.0;
    for (int i = 0; i < geom::kNumLandmarks; ++i)
      frame += ((a.row(i) - ca) - (b.row(i) - cb)).norm();
    total += frame / geom::kNumLandmarks;
  }
  return total / static_cast<double>(generated.size());
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> luminance01(const render::Image& img) {
  const size_t plane = static_cast<size_t>(img.height) * img.width;
  std::vector<double> y(plane);
  for (size_t i = 0; i < plane; ++i) {
    const double v = 0.299 * img.data[i] + 0.587 * img.data[plane + i] +
                     0.114 * img.data[2 * plane + i];
    y[i] = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
  }
  return y;
}

}  // namespace

double compute_ssim(const render::Image& a, const render::Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("compute_ssim: image sizes differ");
  if (a.height < kWindow || a.width < kWindow)
    throw std::invalid_argument("compute_ssim: images smaller than the 11x11 window");

  const auto ya = luminance01(a);
  const auto yb = luminance01(b);

  double kernel[kWindow];
  double ksum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  constexpr double kC1 = 0.01 * 0.01;  // (0.01 L)^2 at L = 1
  constexpr double kC2 = 0.03 * 0.03;

  const int h = a.height, w = a.width;
  double total = 0.0;
  int count = 0;
  for (int y0 = 0; y0 + kWindow <= h; ++y0)
    for (int x0 = 0; x0 + kWindow <= w; ++x0) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int dy = 0; dy < kWindow; ++dy)
        for (int dx = 0; dx < kWindow; ++dx) {
          const double wgt = kernel[dy] * kernel[dx];
          const double va = ya[static_cast<size_t>(y0 + dy) * w + x0 + dx];
          const double vb = yb[static_cast<size_t>(y0 + dy) * w + x0 + dx];
          mu_a += wgt * va;
          mu_b += wgt * vb;
          aa += wgt * va * va;
          bb += wgt * vb * vb;
          ab += wgt * va * vb;
        }
      const double var_a = aa - mu_a * mu_a;
      const double var_b = bb - mu_b * mu_b;
      const double cov = ab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + kC1) * (2 * cov + kC2)) /
               ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
      ++count;
    }
  return total / count;
}

}  // namespace rhm::pipeline
