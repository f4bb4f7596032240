#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rhm/render/render.hpp"

namespace rhm::render {

namespace {

struct Tri {
  int a, b, c;
};

// Bowyer-Watson over fixed insertion order; deterministic for a fixed point
// set. Points must be in general position (the builder jitters its grid).
std::vector<std::array<int, 3>> delaunay(const std::vector<Eigen::Vector2d>& pts) {
  const int n = (int)pts.size();
  std::vector<Eigen::Vector2d> p = pts;
  p.push_back({-1e3, -1e3});
  p.push_back({1e3, -1e3});
  p.push_back({0.0, 1e3});
  std::vector<Tri> tris{{n, n + 1, n + 2}};

  auto ccw = [&](Tri& t) {
    const auto &a = p[(size_t)t.a], &b = p[(size_t)t.b], &c = p[(size_t)t.c];
    if ((b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x()) < 0) {
      std::swap(t.b, t.c);
    }
  };
  auto in_circumcircle = [&](const Tri& t, const Eigen::Vector2d& q) {
    const auto &a = p[(size_t)t.a], &b = p[(size_t)t.b], &c = p[(size_t)t.c];
    const double ax = a.x() - q.x(), ay = a.y() - q.y();
    const double bx = b.x() - q.x(), by = b.y() - q.y();
    const double cx = c.x() - q.x(), cy = c.y() - q.y();
    const double det =
        (ax * ax + ay * ay) * (bx * cy - by * cx) -
        (bx * bx + by * by) * (ax * cy - ay * cx) +
        (cx * cx + cy * cy) * (ax * by - ay * bx);
    return det > 0.0;  // triangles kept CCW
  };

  for (Tri& t : tris) ccw(t);
  for (int i = 0; i < n; ++i) {
    std::vector<Tri> keep;
    std::vector<std::pair<int, int>> cavity;
    for (const Tri& t : tris) {
      if (in_circumcircle(t, p[(size_t)i])) {
        cavity.push_back({t.a, t.b});
        cavity.push_back({t.b, t.c});
        cavity.push_back({t.c, t.a});
      } else {
        keep.push_back(t);
      }
    }
    // boundary edges of the cavity appear exactly once
    for (const auto& e : cavity) {
      bool shared = false;
      for (const auto& o : cavity) {
        if (e.first == o.second && e.second == o.first) {
          shared = true;
          break;
        }
      }
      if (!shared) {
        Tri t{e.first, e.second, i};
        ccw(t);
        keep.push_back(t);
      }
    }
    tris = std::move(keep);
  }

  std::vector<std::array<int, 3>> faces;
  for (const Tri& t : tris) {
    if (t.a < n && t.b < n && t.c < n) faces.push_back({t.a, t.b, t.c});
  }
  return faces;
}

}  // namespace

TexturedMesh build_template_mesh() {
  const geom::CanonicalFace face = geom::build_canonical_face();
  std::vector<Eigen::Vector3d> verts;
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    verts.push_back(face.landmarks.points.row(i));
  }

  // Face extents drive the surrounding rings.
  const double xmax = face.landmarks.points.col(0).cwiseAbs().maxCoeff();
  const double ymin = face.landmarks.points.col(1).minCoeff();
  const double ymax = face.landmarks.points.col(1).maxCoeff();
  const double yc = 0.5 * (ymin + ymax) + 0.15;  // head center sits above the chin
  const double ax0 = 1.12 * xmax;
  const double by0 = 0.72 * (ymax - ymin);

  // Three elliptical rings: cheek line, skull, outer silhouette. Ring z
  // recedes toward the back of the head; sites pin the scalp interpolation.
  const double ring_r[3] = {1.25, 1.55, 1.90};
  const double ring_z[3] = {-0.15, -0.55, -0.95};
  const int ring_n[3] = {28, 32, 36};
  std::vector<Eigen::Vector3d> ring_sites;
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < ring_n[k]; ++j) {
      const double a = 2.0 * M_PI * (j + 0.5 * (k % 2)) / ring_n[k];
      ring_sites.push_back({ring_r[k] * ax0 * std::cos(a),
                            yc + ring_r[k] * by0 * std::sin(a), ring_z[k]});
    }
  }

  // Scalp height field: thin-plate over landmark (x,y,z) plus the rings,
  // evaluated at grid-fill points between them.
  Eigen::MatrixXd sites2d(geom::kNumLandmarks + (int)ring_sites.size(), 2);
  Eigen::MatrixXd sitesz(sites2d.rows(), 1);
  for (int i = 0; i < geom::kNumLandmarks; ++i) {
    sites2d.row(i) = face.landmarks.points.row(i).head<2>();
    sitesz(i, 0) = face.landmarks.points(i, 2);
  }
  for (size_t i = 0; i < ring_sites.size(); ++i) {
    sites2d.row(geom::kNumLandmarks + (int)i) = ring_sites[i].head<2>().transpose();
    sitesz(geom::kNumLandmarks + (int)i, 0) = ring_sites[i].z();
  }
  const ThinPlateMap height_field = tps_fit(sites2d, sitesz);

  for (const auto& r : ring_sites) verts.push_back(r);

  // Deterministically jittered grid fill inside the outer ring (jitter keeps
  // the grid out of cocircular Delaunay degeneracies).
  const double spacing = 0.28;
  const double ao = ring_r[2] * ax0, bo = ring_r[2] * by0;
  std::vector<Eigen::Vector2d> fill;
  int row = 0;
  for (double y = yc - bo; y <= yc + bo; y += spacing * 0.87, ++row) {
    const double x0 = (row % 2) ? spacing * 0.5 : 0.0;
    for (double x = -ao + x0; x <= ao; x += spacing) {
      const int idx = (int)fill.size();
      const double jx = 0.03 * std::sin(12.9898 * idx + 4.1414 * row);
      const double jy = 0.03 * std::sin(78.233 * idx + 1.3371 * row);
      const Eigen::Vector2d q(x + jx, y + jy);
      const double ex = q.x() / ao, ey = (q.y() - yc) / bo;
      if (ex * ex + ey * ey > 0.94) continue;
      bool close = false;
      for (const auto& v : verts) {
        if ((v.head<2>() - q).squaredNorm() < 0.18 * 0.18) {
          close = true;
          break;
        }
      }
      if (!close) {
        for (const auto& f2 : fill) {
          if ((f2 - q).squaredNorm() < 0.18 * 0.18) {
            close = true;
            break;
          }
        }
      }
      if (!close) fill.push_back(q);
    }
  }
  if (!fill.empty()) {
    Eigen::MatrixXd fill_mat((int)fill.size(), 2);
    for (size_t i = 0; i < fill.size(); ++i) fill_mat.row((int)i) = fill[i];
    const Eigen::MatrixXd fz = tps_eval(height_field, fill_mat);
    for (size_t i = 0; i < fill.size(); ++i) {
      verts.push_back({fill[i].x(), fill[i].y(), fz((int)i, 0)});
    }
  }

  std::vector<Eigen::Vector2d> flat;
  flat.reserve(verts.size());
  for (const auto& v : verts) flat.push_back(v.head<2>());

  TexturedMesh mesh;
  mesh.vertices.resize((int)verts.size(), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row((int)i) = verts[i];
  mesh.faces = delaunay(flat);
  mesh.colors = Eigen::MatrixX3d::Constant((int)verts.size(), 3, 0.5);
  return mesh;
}

}  // namespace rhm::render
