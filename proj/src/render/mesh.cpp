#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rhm/render/render.hpp"

namespace rhm::render {

ThinPlateMap tps_fit(const Eigen::MatrixXd& sites, const Eigen::MatrixXd& values) {
  const int n = (int)sites.rows();
  const int d = (int)sites.cols();
  if (n != values.rows() || n < d + 1) {
    throw std::invalid_argument("tps_fit: need more sites than dimensions");
  }
  // [K + ridge, P; P^T, 0] [w; a] = [values; 0], K_ij = |s_i - s_j|
  const int sz = n + d + 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(sz, sz);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      a(i, j) = (sites.row(i) - sites.row(j)).norm();
    }
    a(i, i) += 1e-10;
    a(i, n) = a(n, i) = 1.0;
    for (int c = 0; c < d; ++c) {
      a(i, n + 1 + c) = a(n + 1 + c, i) = sites(i, c);
    }
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(sz, values.cols());
  rhs.topRows(n) = values;
  ThinPlateMap map;
  map.sites = sites;
  map.weights = a.fullPivLu().solve(rhs);
  return map;
}

Eigen::MatrixXd tps_eval(const ThinPlateMap& map, const Eigen::MatrixXd& points) {
  const int n = (int)map.sites.rows();
  const int d = (int)map.sites.cols();
  if (points.cols() != d) {
    throw std::invalid_argument("tps_eval: point dimension mismatch");
  }
  Eigen::MatrixXd out(points.rows(), map.weights.cols());
  for (int q = 0; q < points.rows(); ++q) {
    Eigen::RowVectorXd acc = map.weights.row(n);  // constant term
    for (int c = 0; c < d; ++c) acc += points(q, c) * map.weights.row(n + 1 + c);
    for (int i = 0; i < n; ++i) {
      acc += (points.row(q) - map.sites.row(i)).norm() * map.weights.row(i);
    }
    out.row(q) = acc;
  }
  return out;
}

TexturedMesh pose_mesh(const TexturedMesh& mesh, const geom::RigidTransform& pose_src,
                       const geom::RigidTransform& pose_dst) {
  TexturedMesh out = mesh;
  out.vertices = geom::repose_vertices(mesh.vertices, pose_src, pose_dst);
  return out;
}

template <class T>
std::pair<core::TensorT<T>, core::TensorT<T>> project_frame(
    const TexturedMesh& mesh, const geom::RigidTransform& pose_src,
    const geom::RigidTransform& pose_dst, const Camera& camera,
    const RasterSettings& settings) {
  const TexturedMesh posed = pose_mesh(mesh, pose_src, pose_dst);
  const int n = (int)posed.vertices.rows();
  std::vector<T> v((size_t)n * 3), c((size_t)n * 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      v[(size_t)3 * i + k] = (T)posed.vertices(i, k);
      c[(size_t)3 * i + k] = (T)posed.colors(i, k);
    }
  }
  return soft_rasterize<T>(core::TensorT<T>::from({n, 3}, v), posed.faces,
                           core::TensorT<T>::from({n, 3}, c), camera, settings);
}

template std::pair<core::TensorT<float>, core::TensorT<float>> project_frame<float>(
    const TexturedMesh&, const geom::RigidTransform&, const geom::RigidTransform&,
    const Camera&, const RasterSettings&);
template std::pair<core::TensorT<double>, core::TensorT<double>>
project_frame<double>(const TexturedMesh&, const geom::RigidTransform&,
                      const geom::RigidTransform&, const Camera&,
                      const RasterSettings&);

namespace {

// Andrew monotone chain; returns hull vertices counter-clockwise.
std::vector<Eigen::Vector2d> convex_hull(std::vector<Eigen::Vector2d> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a,
                  const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (size_t i = pts.size() - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool inside_hull(const std::vector<Eigen::Vector2d>& hull, double x, double y) {
  for (size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    if ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x()) < 0) {
      return false;
    }
  }
  return true;
}

double sample_bilinear(std::span<const float> image, int height, int width, int ch,
                       double col, double row) {
  col = std::clamp(col, 0.0, (double)width - 1);
  row = std::clamp(row, 0.0, (double)height - 1);
  const int c0 = (int)std::floor(col), r0 = (int)std::floor(row);
  const int c1 = std::min(c0 + 1, width - 1), r1 = std::min(r0 + 1, height - 1);
  const double fc = col - c0, fr = row - r0;
  auto at = [&](int r, int c) {
    return (double)image[(size_t)ch * height * width + (size_t)r * width + c];
  };
  return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c1)) +
         fr * ((1 - fc) * at(r1, c0) + fc * at(r1, c1));
}

}  // namespace

TexturedMesh unproject(std::span<const float> image, int height, int width,
                       const geom::LandmarkSet& landmarks,
                       const TexturedMesh& canonical_mesh, const Camera& camera) {
  if (canonical_mesh.vertices.rows() < geom::kNumLandmarks) {
    throw std::invalid_argument("unproject: template lacks the 68 landmark vertices");
  }
  if ((int64_t)image.size() != (int64_t)3 * height * width) {
    throw std::invalid_argument("unproject: image size does not match 3*H*W");
  }

  // Deform the template by the thin-plate interpolant of the 68 landmark
  // displacements (sites are the template's landmark vertices).
  const Eigen::MatrixXd sites = canonical_mesh.vertices.topRows(geom::kNumLandmarks);
  const Eigen::MatrixXd disp = landmarks.points - sites;
  const ThinPlateMap map = tps_fit(sites, disp);
  TexturedMesh out = canonical_mesh;
  out.vertices = canonical_mesh.vertices + tps_eval(map, canonical_mesh.vertices);

  const int n = (int)out.vertices.rows();
  std::vector<Eigen::Vector2d> proj((size_t)n);
  for (int i = 0; i < n; ++i) {
    proj[(size_t)i] = {camera.cx + camera.sx * out.vertices(i, 0),
                       camera.cy + camera.sy * out.vertices(i, 1)};
  }
  // Alignment gate on the landmark vertices only: the scalp/neck fringe of
  // the template may legitimately extend past a tight face crop.
  int off_image = 0;
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    if (proj[(size_t)i].x() < 0 || proj[(size_t)i].x() > camera.width ||
        proj[(size_t)i].y() < 0 || proj[(size_t)i].y() > camera.height) {
      ++off_image;
    }
  }
  if (2 * off_image > geom::kNumLandmarks) {
    throw std::runtime_error("unproject: " + std::to_string(off_image) + " of " +
                             std::to_string(geom::kNumLandmarks) +
                             " landmark vertices project outside the image; "
                             "landmarks misaligned with the camera");
  }

  const std::vector<Eigen::Vector2d> hull = convex_hull(
      {proj.begin(), proj.begin() + geom::kNumLandmarks});
  for (int i = 0; i < n; ++i) {
    const double u = proj[(size_t)i].x(), v = proj[(size_t)i].y();
    const bool on_image = u >= 0 && u <= camera.width && v >= 0 && v <= camera.height;
    if (on_image && inside_hull(hull, u, v)) {
      for (int ch = 0; ch < 3; ++ch) {
        const double s = sample_bilinear(image, height, width, ch, u - 0.5, v - 0.5);
        out.colors(i, ch) = std::clamp((s + 1.0) * 0.5, 0.0, 1.0);
      }
    } else {
      out.colors.row(i).setConstant(0.5);  // template gray
    }
  }
  return out;
}

}  // namespace rhm::render
