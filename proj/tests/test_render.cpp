#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "rhm/core/fdcheck.hpp"
#include "rhm/core/ops.hpp"
#include "rhm/core/rng.hpp"
#include "rhm/render/image_io.hpp"
#include "rhm/render/render.hpp"

using namespace rhm;
using namespace rhm::render;
using core::TensorD;
using core::TensorT;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Smoothly colored copy of the template, for tests that need texture.
TexturedMesh colored_template() {
  TexturedMesh mesh = build_template_mesh();
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    mesh.colors(i, 0) = 0.5 + 0.2 * std::sin(1.7 * mesh.vertices(i, 0));
    mesh.colors(i, 1) = 0.5 + 0.2 * std::sin(2.3 * mesh.vertices(i, 1));
    mesh.colors(i, 2) = 0.5 + 0.2 * std::cos(1.1 * mesh.vertices(i, 2));
  }
  return mesh;
}

// Template under a smooth random warp with random smooth texture: a
// realistic, non-self-intersecting surface for soft/hard comparisons.
TexturedMesh deformed_template(core::Rng& rng) {
  TexturedMesh mesh = build_template_mesh();
  double kx[3], ky[3], ph[3], amp[3] = {0.1, 0.1, 0.08};
  double ck[3][2], cp[3];
  for (int a = 0; a < 3; ++a) {
    kx[a] = rng.uniform(0.8, 1.8);
    ky[a] = rng.uniform(0.8, 1.8);
    ph[a] = rng.uniform(0.0, 6.283185);
    ck[a][0] = rng.uniform(0.5, 2.5);
    ck[a][1] = rng.uniform(0.5, 2.5);
    cp[a] = rng.uniform(0.0, 6.283185);
  }
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    const double x = mesh.vertices(i, 0), y = mesh.vertices(i, 1);
    for (int a = 0; a < 3; ++a) {
      mesh.vertices(i, a) += amp[a] * std::sin(kx[a] * x + ky[a] * y + ph[a]);
      mesh.colors(i, a) = 0.5 + 0.35 * std::sin(ck[a][0] * x + ck[a][1] * y + cp[a]);
    }
  }
  return mesh;
}

TexturedMesh random_mesh(core::Rng& rng, int nv = 30, int nf = 20) {
  TexturedMesh mesh;
  mesh.vertices.resize(nv, 3);
  mesh.colors.resize(nv, 3);
  for (int i = 0; i < nv; ++i) {
    for (int k = 0; k < 3; ++k) {
      mesh.vertices(i, k) = rng.uniform(-1.2, 1.2);
      mesh.colors(i, k) = rng.uniform();
    }
  }
  for (int f = 0; f < nf; ++f) {
    mesh.faces.push_back({rng.uniform_int(nv), rng.uniform_int(nv), rng.uniform_int(nv)});
  }
  return mesh;
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> mesh_tensors(const TexturedMesh& mesh,
                                               bool requires_grad = false) {
  const int n = (int)mesh.vertices.rows();
  std::vector<T> v((size_t)n * 3), c((size_t)n * 3);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) {
      v[(size_t)3 * i + k] = (T)mesh.vertices(i, k);
      c[(size_t)3 * i + k] = (T)mesh.colors(i, k);
    }
  }
  return {TensorT<T>::from({n, 3}, v, requires_grad),
          TensorT<T>::from({n, 3}, c, requires_grad)};
}

geom::RigidTransform yaw_pose(double radians) {
  geom::RigidTransform pose;
  pose.rotation = geom::matrix_from_axis_angle({0.0, radians, 0.0});
  return pose;
}

}  // namespace

TEST_CASE("template mesh: size, landmarks, validity") {
  const TexturedMesh mesh = build_template_mesh();
  CHECK(mesh.vertices.rows() >= 420);
  CHECK(mesh.vertices.rows() <= 580);
  CHECK(mesh.faces.size() >= 800);
  CHECK(mesh.faces.size() <= 1100);

  const geom::CanonicalFace face = geom::build_canonical_face();
  CHECK((mesh.vertices.topRows(68) - face.landmarks.points).cwiseAbs().maxCoeff() <
        1e-12);

  for (const auto& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      CHECK(f[k] >= 0);
      CHECK(f[k] < mesh.vertices.rows());
    }
    CHECK(f[0] != f[1]);
    CHECK(f[1] != f[2]);
    CHECK(f[0] != f[2]);
  }
  CHECK(mesh.colors.minCoeff() >= 0.0);
  CHECK(mesh.colors.maxCoeff() <= 1.0);

  // distinct 2D vertex positions (Delaunay precondition)
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    for (int j = i + 1; j < mesh.vertices.rows(); ++j) {
      const double dx = mesh.vertices(i, 0) - mesh.vertices(j, 0);
      const double dy = mesh.vertices(i, 1) - mesh.vertices(j, 1);
      CHECK(dx * dx + dy * dy > 1e-8);
    }
  }
}

TEST_CASE("obj round-trip and errors") {
  const TexturedMesh mesh = colored_template();
  const std::string path = temp_path("rhm_mesh_test.obj");
  save_obj(path, mesh);
  const TexturedMesh back = load_obj(path);
  REQUIRE(back.vertices.rows() == mesh.vertices.rows());
  REQUIRE(back.faces.size() == mesh.faces.size());
  CHECK((back.vertices - mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.colors - mesh.colors).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.faces == mesh.faces);
  std::filesystem::remove(path);

  const std::string bad = temp_path("rhm_mesh_bad.obj");
  {
    std::ofstream out(bad);
    out << "v 1 2\n";
  }
  CHECK_THROWS_AS(load_obj(bad), std::runtime_error);
  {
    std::ofstream out(bad);
    out << "v 0 0 0 1 1 1\nf 1 2 3\n";
  }
  CHECK_THROWS_AS(load_obj(bad), std::runtime_error);
  std::filesystem::remove(bad);
}

TEST_CASE("shipped template obj matches the builder") {
  const std::string path = "data/canonical_mesh.obj";
  if (!std::filesystem::exists(path)) return;  // not running from repo root
  const TexturedMesh file = load_obj(path);
  const TexturedMesh built = build_template_mesh();
  REQUIRE(file.vertices.rows() == built.vertices.rows());
  CHECK((file.vertices - built.vertices).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(file.faces == built.faces);
}

TEST_CASE("soft rasterizer limit cases") {
  Camera cam;
  cam.width = cam.height = 32;
  cam.cx = cam.cy = 16;
  cam.sx = 10;
  cam.sy = -10;

  SUBCASE("single covering triangle, sigma -> 0: interpolated color, sil ~1") {
    TexturedMesh mesh;
    mesh.vertices.resize(3, 3);
    mesh.vertices << -2, -2, 0, 2, -2, 0, 0, 2.5, 0;
    mesh.colors.resize(3, 3);
    mesh.colors << 0.8, 0.1, 0.1, 0.8, 0.1, 0.1, 0.8, 0.1, 0.1;
    mesh.faces = {{0, 1, 2}};
    RasterSettings s;
    s.sigma = 1e-5;
    s.gamma = 1e-5;
    auto [v, c] = mesh_tensors<double>(mesh);
    auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c, cam, s);
    const size_t center = 16 * 32 + 16;
    CHECK(img.data()[center] == doctest::Approx(2 * 0.8 - 1).epsilon(1e-6));
    CHECK(img.data()[32 * 32 + center] == doctest::Approx(2 * 0.1 - 1).epsilon(1e-6));
    CHECK(sil.data()[center] == doctest::Approx(1.0).epsilon(1e-9));
    // corner pixel far outside -> background, sil 0
    CHECK(sil.data()[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(img.data()[0] == doctest::Approx(-1.0).epsilon(1e-6));
  }

  SUBCASE("stacked triangles, gamma -> 0: nearer wins") {
    TexturedMesh mesh;
    mesh.vertices.resize(6, 3);
    mesh.vertices << -2, -2, 0.5, 2, -2, 0.5, 0, 2.5, 0.5,  // near, red
        -2, -2, 0.0, 2, -2, 0.0, 0, 2.5, 0.0;               // far, blue
    mesh.colors.resize(6, 3);
    mesh.colors << 1, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1;
    mesh.faces = {{0, 1, 2}, {3, 4, 5}};
    RasterSettings s;
    s.sigma = 1e-5;
    s.gamma = 1e-5;
    auto [v, c] = mesh_tensors<double>(mesh);
    auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c, cam, s);
    const size_t center = 16 * 32 + 16;
    CHECK(img.data()[center] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(img.data()[2 * 32 * 32 + center] == doctest::Approx(-1.0).epsilon(1e-6));
  }
}

TEST_CASE("soft vs hard rasterizer at sigma=gamma=1e-4") {
  core::Rng rng(101);
  Camera cam;
  cam.sx = 10;
  cam.sy = -10;
  cam.cx = cam.cy = 32;
  RasterSettings s;
  s.sigma = 1e-4;
  s.gamma = 1e-4;
  const int trials = 5;
  const size_t plane = (size_t)cam.height * cam.width;
  int disagree = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const TexturedMesh mesh = deformed_template(rng);
    auto [v, c] = mesh_tensors<double>(mesh);
    auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c, cam, s);
    const HardRaster hard = hard_rasterize(mesh, cam, s);
    for (size_t pi = 0; pi < plane; ++pi) {
      double diff = 0;
      for (int ch = 0; ch < 3; ++ch) {
        diff = std::max(diff, std::abs(img.data()[ch * plane + pi] -
                                       hard.image[ch * plane + pi]));
      }
      if (diff > 0.02) ++disagree;
    }
  }
  CHECK(disagree < 0.01 * (double)(trials * plane));
}

TEST_CASE("rendering bounds and face-permutation invariance") {
  core::Rng rng(111);
  Camera cam;
  RasterSettings s;  // default soft settings
  const TexturedMesh mesh = random_mesh(rng);
  auto [v, c] = mesh_tensors<double>(mesh);
  auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c, cam, s);
  for (double x : img.data()) {
    CHECK(x >= -1.0);
    CHECK(x <= 1.0);
  }
  for (double x : sil.data()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }

  // reversed and rotated face lists must render bit-identically
  std::vector<std::array<int, 3>> perm(mesh.faces.rbegin(), mesh.faces.rend());
  auto [img2, sil2] = soft_rasterize<double>(v, perm, c, cam, s);
  CHECK(std::memcmp(img.data().data(), img2.data().data(),
                    img.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(sil.data().data(), sil2.data().data(),
                    sil.size() * sizeof(double)) == 0);
  std::rotate(perm.begin(), perm.begin() + 7, perm.end());
  auto [img3, sil3] = soft_rasterize<double>(v, perm, c, cam, s);
  CHECK(std::memcmp(img.data().data(), img3.data().data(),
                    img.size() * sizeof(double)) == 0);
}

TEST_CASE("rasterizer gradients pass finite differences") {
  // Small, soft setup away from degenerate configurations.
  Camera cam;
  cam.width = cam.height = 20;
  cam.cx = cam.cy = 10;
  cam.sx = 6;
  cam.sy = -6;
  RasterSettings s;
  s.sigma = 0.5;
  s.gamma = 0.05;
  TexturedMesh mesh;
  mesh.vertices.resize(4, 3);
  mesh.vertices << -0.9, -0.7, 0.1, 0.8, -0.8, 0.3, 0.1, 0.9, 0.2, 0.9, 0.6, -0.2;
  mesh.colors.resize(4, 3);
  mesh.colors << 0.9, 0.2, 0.3, 0.2, 0.8, 0.4, 0.3, 0.3, 0.9, 0.7, 0.6, 0.1;
  mesh.faces = {{0, 1, 2}, {1, 3, 2}};
  auto [v0, c0] = mesh_tensors<double>(mesh);

  auto by_verts = [&](const TensorD& v) {
    auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c0, cam, s);
    return core::mean_all(img);
  };
  CHECK(core::finite_difference_check(by_verts, v0, 1e-5) < 1e-3);

  auto by_colors = [&](const TensorD& c) {
    auto [img, sil] = soft_rasterize<double>(v0, mesh.faces, c, cam, s);
    return core::mean_all(img);
  };
  CHECK(core::finite_difference_check(by_colors, c0, 1e-5) < 1e-3);

  auto sil_by_verts = [&](const TensorD& v) {
    auto [img, sil] = soft_rasterize<double>(v, mesh.faces, c0, cam, s);
    return core::mean_all(sil);
  };
  CHECK(core::finite_difference_check(sil_by_verts, v0, 1e-5) < 1e-3);
}

TEST_CASE("project_frame: identity pose and continuous yaw sweep") {
  const TexturedMesh mesh = colored_template();
  Camera cam;
  RasterSettings s;

  const geom::RigidTransform id;
  auto [img_direct, sil_direct] = project_frame<float>(mesh, id, id, cam, s);
  auto [vt, ct] = mesh_tensors<float>(mesh);
  auto [img_raw, sil_raw] = soft_rasterize<float>(vt, mesh.faces, ct, cam, s);
  CHECK(std::memcmp(img_direct.data().data(), img_raw.data().data(),
                    img_raw.size() * sizeof(float)) == 0);

  double prev_area = -1;
  for (int deg = 0; deg <= 10; ++deg) {
    auto [img, sil] = project_frame<float>(mesh, id, yaw_pose(deg * M_PI / 180.0),
                                           cam, s);
    double area = 0;
    for (float x : sil.data()) area += x;
    if (prev_area >= 0) {
      CHECK(std::abs(area - prev_area) / prev_area < 0.02);
    }
    prev_area = area;
  }
}

TEST_CASE("rigid_flow") {
  const TexturedMesh mesh = colored_template();
  Camera cam;

  SUBCASE("same pose: zero flow, visibility equals coverage") {
    const geom::RigidTransform id;
    const RigidFlowField f = rigid_flow(mesh, id, id, cam);
    CHECK_FALSE(f.empty_projection);
    const HardRaster hr = hard_rasterize(mesh, cam, RasterSettings{});
    const size_t plane = (size_t)cam.height * cam.width;
    for (size_t pi = 0; pi < plane; ++pi) {
      if (hr.mask[pi]) {
        CHECK(std::abs(f.flow[2 * pi + 0]) < 1e-9);
        CHECK(std::abs(f.flow[2 * pi + 1]) < 1e-9);
        CHECK(f.visibility[pi] == 1.0);
      } else {
        CHECK(f.flow[2 * pi + 0] == 0.0);
        CHECK(f.visibility[pi] == 0.0);
      }
    }
  }

  SUBCASE("pure translation: constant flow (-sx*tx, -sy*ty)") {
    geom::RigidTransform src;
    src.translation = {0.08, -0.05, 0.0};
    const geom::RigidTransform dst;
    const RigidFlowField f = rigid_flow(mesh, src, dst, cam);
    const TexturedMesh posed = pose_mesh(mesh, src, dst);
    const HardRaster hr = hard_rasterize(posed, cam, RasterSettings{});
    const size_t plane = (size_t)cam.height * cam.width;
    int checked = 0;
    for (size_t pi = 0; pi < plane; ++pi) {
      if (!hr.mask[pi]) continue;
      CHECK(f.flow[2 * pi + 0] == doctest::Approx(-cam.sx * 0.08).epsilon(1e-9));
      CHECK(f.flow[2 * pi + 1] == doctest::Approx(-cam.sy * -0.05).epsilon(1e-9));
      ++checked;
    }
    CHECK(checked > 100);
  }

  SUBCASE("30 degree yaw: warped source render matches target render") {
    const geom::RigidTransform src;
    const geom::RigidTransform dst = yaw_pose(30.0 * M_PI / 180.0);
    RasterSettings s;
    s.sigma = 0.05;
    s.gamma = 1e-3;
    auto [src_img, src_sil] = project_frame<float>(mesh, src, src, cam, s);
    auto [dst_img, dst_sil] = project_frame<float>(mesh, src, dst, cam, s);
    const RigidFlowField f = rigid_flow(mesh, src, dst, cam);
    std::vector<float> flow(f.flow.begin(), f.flow.end());
    const core::Tensor warped =
        core::bilinear_warp(src_img, std::span<const float>(flow));
    double l1 = 0;
    int n = 0;
    const size_t plane = (size_t)cam.height * cam.width;
    for (size_t pi = 0; pi < plane; ++pi) {
      if (f.visibility[pi] != 1.0) continue;
      for (int ch = 0; ch < 3; ++ch) {
        l1 += std::abs(warped.data()[ch * plane + pi] -
                       dst_img.data()[ch * plane + pi]);
      }
      ++n;
    }
    REQUIRE(n > 200);
    CHECK(l1 / (3.0 * n) < 0.05);
  }

  SUBCASE("empty projection warns") {
    geom::RigidTransform far_away;
    far_away.translation = {100.0, 0.0, 0.0};  // pushes the mesh off-frame
    const RigidFlowField f = rigid_flow(mesh, far_away, geom::RigidTransform{}, cam);
    CHECK(f.empty_projection);
    for (double x : f.flow) CHECK(x == 0.0);
  }
}

TEST_CASE("unproject") {
  const TexturedMesh tmpl = build_template_mesh();
  Camera cam;

  SUBCASE("own landmarks: zero deformation, sampled colors") {
    const TexturedMesh src = colored_template();
    RasterSettings s;
    s.sigma = 0.05;
    s.gamma = 1e-3;
    auto [img, sil] = project_frame<float>(src, {}, {}, cam, s);
    geom::LandmarkSet lmk;
    lmk.points = tmpl.vertices.topRows(68);
    const TexturedMesh rec = unproject(img.data(), cam.height, cam.width, lmk,
                                       tmpl, cam);
    CHECK((rec.vertices - tmpl.vertices).cwiseAbs().maxCoeff() < 1e-6);
    // a nose vertex (inside the hull) picked up the source color
    int nose = 30;
    CHECK(std::abs(rec.colors(nose, 0) - src.colors(nose, 0)) < 0.1);
    // outer-ring vertices (outside the landmark hull) stay template gray
    const int last = (int)rec.vertices.rows() - 1;
    bool found_gray = false;
    for (int i = 68; i <= last; ++i) {
      if (rec.colors(i, 0) == 0.5 && rec.colors(i, 1) == 0.5) {
        found_gray = true;
        break;
      }
    }
    CHECK(found_gray);
  }

  SUBCASE("uniform landmark translation: uniformly translated mesh") {
    const Eigen::RowVector3d shift(0.25, -0.2, 0.15);
    geom::LandmarkSet lmk;
    lmk.points = tmpl.vertices.topRows(68).rowwise() + shift;
    std::vector<float> img((size_t)3 * cam.height * cam.width, 0.0f);
    const TexturedMesh rec = unproject(std::span<const float>(img), cam.height,
                                       cam.width, lmk, tmpl, cam);
    const Eigen::MatrixX3d expect = tmpl.vertices.rowwise() + shift;
    CHECK((rec.vertices - expect).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("render(unproject(render)) round-trip on covered pixels") {
    TexturedMesh src = colored_template();
    // gray out everything the landmark hull cannot see so the round-trip is
    // comparable outside the face too
    geom::LandmarkSet lmk;
    lmk.points = src.vertices.topRows(68);
    RasterSettings s;
    s.sigma = 0.05;
    s.gamma = 1e-3;
    auto [img, sil] = project_frame<float>(src, {}, {}, cam, s);
    const TexturedMesh rec = unproject(img.data(), cam.height, cam.width, lmk,
                                       tmpl, cam);
    auto [img2, sil2] = project_frame<float>(rec, {}, {}, cam, s);

    // compare where the reconstruction sampled real colors: pixels covered by
    // hull-interior faces in both renders
    const HardRaster hr = hard_rasterize(src, cam, s);
    const size_t plane = (size_t)cam.height * cam.width;
    double l1 = 0;
    int n = 0;
    for (size_t pi = 0; pi < plane; ++pi) {
      if (!hr.mask[pi]) continue;
      const auto& f = src.faces[(size_t)hr.face[pi]];
      bool sampled = true;
      for (int k = 0; k < 3; ++k) {
        if (rec.colors(f[k], 0) == 0.5 && rec.colors(f[k], 1) == 0.5 &&
            rec.colors(f[k], 2) == 0.5) {
          sampled = false;  // touches a gray vertex
        }
      }
      if (!sampled) continue;
      for (int ch = 0; ch < 3; ++ch) {
        l1 += std::abs(img2.data()[ch * plane + pi] - img.data()[ch * plane + pi]);
      }
      ++n;
    }
    REQUIRE(n > 200);
    CHECK(l1 / (3.0 * n) < 0.05);
  }

  SUBCASE("landmarks far off-image throw") {
    geom::LandmarkSet lmk;
    lmk.points = tmpl.vertices.topRows(68);
    lmk.points.col(0).array() += 50.0;
    std::vector<float> img((size_t)3 * cam.height * cam.width, 0.0f);
    CHECK_THROWS_AS(unproject(std::span<const float>(img), cam.height, cam.width,
                              lmk, tmpl, cam),
                    std::runtime_error);
  }
}

TEST_CASE("png round-trip") {
  core::Rng rng(121);
  Image img;
  img.height = 40;
  img.width = 24;
  img.data.resize((size_t)3 * 40 * 24);
  for (auto& x : img.data) x = (float)rng.uniform(-1.0, 1.0);
  const std::string path = temp_path("rhm_png_test.png");
  save_png(path, img.data, img.height, img.width);
  const Image back = load_png(path);
  REQUIRE(back.height == img.height);
  REQUIRE(back.width == img.width);
  float maxdiff = 0;
  for (size_t i = 0; i < img.data.size(); ++i) {
    maxdiff = std::max(maxdiff, std::abs(back.data[i] - img.data[i]));
  }
  CHECK(maxdiff <= 1.0f / 127.5f + 1e-6f);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_png(temp_path("rhm_png_missing.png")), std::runtime_error);
}
