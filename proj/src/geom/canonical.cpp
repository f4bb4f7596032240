#include <cmath>

#include "rhm/geom/geom.hpp"

namespace rhm::geom {

std::vector<int> default_rigid_indices() {
  std::vector<int> idx;
  for (int i = 0; i <= 16; ++i) {
    if (i != 8) idx.push_back(i);  // jaw contour minus the chin tip
  }
  for (int i = 27; i <= 35; ++i) idx.push_back(i);  // nose bridge + base
  idx.push_back(39);  // inner eye corners
  idx.push_back(42);
  return idx;
}

CanonicalFace build_canonical_face() {
  Eigen::Matrix<double, kNumLandmarks, 3> p;
  const double pi = M_PI;

  // Jaw contour 0..16, ear to ear through the chin. Ears sit high and far
  // back, the chin low and forward.
  for (int i = 0; i <= 16; ++i) {
    const double s = (i - 8) / 8.0;  // -1 at one ear, +1 at the other
    const double a = s * pi / 2.0;
    p.row(i) << 0.80 * std::sin(a), -0.15 - 0.75 * std::cos(a),
        0.10 - 0.45 * std::sin(std::abs(a));
  }

  // Eyebrows 17..21 and 22..26, arched, mirror pairs 17+j <-> 26-j.
  for (int j = 0; j < 5; ++j) {
    const double u = j / 4.0;
    const double y = 0.42 + 0.06 * std::sin(pi * u);
    const double x = 0.52 - 0.40 * u;  // 0.52 down to 0.12
    p.row(17 + j) << -x, y, 0.25;
    p.row(26 - j) << x, y, 0.25;
  }

  // Nose bridge 27..30 descends and comes forward to the tip.
  const double bridge_y[4] = {0.30, 0.19, 0.08, -0.02};
  const double bridge_z[4] = {0.30, 0.36, 0.42, 0.48};
  for (int j = 0; j < 4; ++j) p.row(27 + j) << 0.0, bridge_y[j], bridge_z[j];

  // Nose base 31..35 under the nostrils.
  const double base_x[5] = {-0.16, -0.08, 0.0, 0.08, 0.16};
  const double base_z[5] = {0.30, 0.36, 0.40, 0.36, 0.30};
  for (int j = 0; j < 5; ++j) p.row(31 + j) << base_x[j], -0.12, base_z[j];

  // Eyes 36..41 (viewer-left) and 42..47, six points each, inner corners at
  // 39 and 42. Mirror pairs 36<->45, 37<->44, 38<->43, 39<->42, 40<->47,
  // 41<->46.
  const double ex[6] = {-0.44, -0.37, -0.27, -0.20, -0.27, -0.37};
  const double ey[6] = {0.25, 0.29, 0.29, 0.25, 0.21, 0.21};
  for (int j = 0; j < 6; ++j) {
    p.row(36 + j) << ex[j], ey[j], 0.28;
    p.row(42 + j) << -ex[(9 - j) % 6], ey[(9 - j) % 6], 0.28;
  }

  // Outer lip 48..59 on an ellipse, corners at 48 and 54; the lower lip
  // hangs slightly deeper than the upper arcs.
  for (int j = 0; j < 12; ++j) {
    const double a = pi - j * (pi / 6.0);
    const double ry = a > 0.0 ? 0.10 : 0.14;
    p.row(48 + j) << 0.28 * std::cos(a), -0.47 + ry * std::sin(a),
        0.30 + 0.06 * (1.0 - std::abs(std::cos(a)));
  }

  // Inner lip 60..67.
  for (int j = 0; j < 8; ++j) {
    const double a = pi - j * (pi / 4.0);
    p.row(60 + j) << 0.20 * std::cos(a), -0.47 + 0.05 * std::sin(a), 0.33;
  }

  // Normalize: centroid at the origin, mean point radius 1.
  p.rowwise() -= p.colwise().mean().eval();
  p /= p.rowwise().norm().mean();

  CanonicalFace face;
  face.landmarks.points = p;
  face.rigid_indices = default_rigid_indices();
  return face;
}

}  // namespace rhm::geom
