#include <algorithm>
#include <cmath>

#include "rhm/synth/synth.hpp"

namespace rhm::synth {

namespace {

// Full intensity within kCore of the segment axis, linear falloff to zero at
// kCore + kFeather. The band is sized so the lit-pixel count of a polyline
// tracks a one-pixel stepping rasterizer across orientations.
constexpr double kCore = 0.22;
constexpr double kFeather = 0.26;

double point_segment_dist(double px, double py, double ax, double ay, double bx,
                          double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx, cy = ay + t * dy;
  return std::hypot(px - cx, py - cy);
}

std::vector<std::pair<int, int>> build_segments() {
  std::vector<std::pair<int, int>> s;
  auto chain = [&](int first, int last, bool closed) {
    for (int i = first; i < last; ++i) s.emplace_back(i, i + 1);
    if (closed) s.emplace_back(last, first);
  };
  chain(0, 16, false);   // jaw
  chain(17, 21, false);  // right brow
  chain(22, 26, false);  // left brow
  chain(27, 30, false);  // nose bridge
  chain(31, 35, false);  // nostril base
  chain(36, 41, true);   // right eye
  chain(42, 47, true);   // left eye
  chain(48, 59, true);   // outer lip
  chain(60, 67, true);   // inner lip
  return s;
}

}  // namespace

const std::vector<std::pair<int, int>>& landmark_segments() {
  static const std::vector<std::pair<int, int>> segments = build_segments();
  return segments;
}

LandmarkImage render_landmark_image(const geom::LandmarkSet& landmarks,
                                    const geom::RigidTransform& pose,
                                    const render::Camera& camera) {
  LandmarkImage img;
  img.height = camera.height;
  img.width = camera.width;
  img.pixels.assign(static_cast<size_t>(img.height) * static_cast<size_t>(img.width),
                    0.0f);

  // Undo the alignment, then project.
  Eigen::Matrix<double, geom::kNumLandmarks, 2> uv;
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    const Eigen::Vector3d p = pose.rotation.transpose() *
                              (landmarks.points.row(i).transpose() - pose.translation);
    uv(i, 0) = camera.cx + camera.sx * p.x();
    uv(i, 1) = camera.cy + camera.sy * p.y();
  }

  const double reach = kCore + kFeather;
  for (const auto& [a, b] : landmark_segments()) {
    const double ax = uv(a, 0), ay = uv(a, 1), bx = uv(b, 0), by = uv(b, 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - reach)));
    const int x1 = std::min(img.width - 1,
                            static_cast<int>(std::ceil(std::max(ax, bx) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - reach)));
    const int y1 = std::min(img.height - 1,
                            static_cast<int>(std::ceil(std::max(ay, by) + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = point_segment_dist(x, y, ax, ay, bx, by);
        const double cov = std::clamp((reach - d) / kFeather, 0.0, 1.0);
        if (cov <= 0.0) continue;
        float& px = img.pixels[static_cast<size_t>(y) * static_cast<size_t>(img.width) +
                               static_cast<size_t>(x)];
        px = std::max(px, static_cast<float>(cov));
      }
    }
  }
  return img;
}

}  // namespace rhm::synth
