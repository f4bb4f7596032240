#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rhm/core/tensor.hpp"
#include "rhm/geom/geom.hpp"

namespace rhm::render {

/// Fixed-topology triangle mesh with per-vertex RGB in [0,1]. The first 68
/// vertices are the facial landmark sites; the rest form the surrounding
/// shell. Topology never changes between frames of one video.
struct TexturedMesh {
  Eigen::MatrixX3d vertices;
  std::vector<std::array<int, 3>> faces;
  Eigen::MatrixX3d colors;
};

/// Orthographic camera looking along -z (larger vertex z is closer).
/// Projection: u = cx + sx*X, v = cy + sy*Y in pixel units; sy < 0 puts +y up.
struct Camera {
  double sx = 20.0;
  double sy = -20.0;
  double cx = 32.0;
  double cy = 34.0;
  int width = 64;
  int height = 64;
};

struct RasterSettings {
  double sigma = 0.1;    // edge softness, pixel^2 units of squared distance
  double gamma = 0.05;   // depth softmax temperature, normalized depth units
  double background[3] = {0.0, 0.0, 0.0};  // [0,1] color space
  // Depth is normalized to [0,1] between these planes before the softmax;
  // the background logit sits at the far plane. Keep the scene inside the
  // range and (near - far) * gamma well above the z spread you want blended.
  double far_plane = -1.5;
  double near_plane = 1.5;
};

/// Differentiable renderer. vertices [N,3] and colors [N,3] ride the tape;
/// returns (image [3,H,W] in [-1,1], silhouette [H,W] in [0,1]). Per pixel,
/// each face contributes sigmoid(+-d^2/sigma) (signed squared distance to the
/// projected triangle) and colors aggregate by softmax over interpolated
/// depth with a background term. Contributions are sorted by value before
/// aggregation so the result is bit-identical under face permutations.
template <class T>
std::pair<core::TensorT<T>, core::TensorT<T>> soft_rasterize(
    const core::TensorT<T>& vertices, const std::vector<std::array<int, 3>>& faces,
    const core::TensorT<T>& colors, const Camera& camera,
    const RasterSettings& settings);

/// Classical z-buffer oracle for the sigma,gamma -> 0 limit. Output image in
/// [-1,1] with the same background convention as soft_rasterize.
struct HardRaster {
  int height = 0, width = 0;
  std::vector<double> image;    // [3,H,W], [-1,1]
  std::vector<uint8_t> mask;    // [H,W] coverage
  std::vector<double> depth;    // [H,W], far_plane where uncovered
  std::vector<int> face;        // [H,W], -1 where uncovered
  std::vector<double> bary;     // [H,W,3]
};
HardRaster hard_rasterize(const TexturedMesh& mesh, const Camera& camera,
                          const RasterSettings& settings);

/// Vertices moved by the rigid repose formula; faces and colors unchanged.
TexturedMesh pose_mesh(const TexturedMesh& mesh, const geom::RigidTransform& pose_src,
                       const geom::RigidTransform& pose_dst);

/// Pose then render: the projected reference mesh under the target pose.
template <class T>
std::pair<core::TensorT<T>, core::TensorT<T>> project_frame(
    const TexturedMesh& mesh, const geom::RigidTransform& pose_src,
    const geom::RigidTransform& pose_dst, const Camera& camera,
    const RasterSettings& settings);

/// Dense correspondence field between two rigid poses of one mesh. For each
/// pixel covered by the mesh at pose_dst, flow = projection of the same
/// surface point at pose_src minus the pixel position; visibility marks
/// source points unoccluded in the pose_src view.
struct RigidFlowField {
  int height = 0, width = 0;
  std::vector<double> flow;        // [H,W,2] (du,dv), zero where uncovered
  std::vector<double> visibility;  // [H,W] in {0,1}
  bool empty_projection = false;   // warning: mesh projected to no pixels
};
RigidFlowField rigid_flow(const TexturedMesh& mesh,
                          const geom::RigidTransform& pose_src,
                          const geom::RigidTransform& pose_dst,
                          const Camera& camera);

/// Analytic stand-in for a learned image-to-mesh network: deform the template
/// by the thin-plate-spline interpolant of the 68 landmark displacements,
/// then sample per-vertex colors from the image at the projected vertex
/// positions. Vertices projecting outside the landmark hull (or off-image)
/// keep template gray.
TexturedMesh unproject(std::span<const float> image, int height, int width,
                       const geom::LandmarkSet& landmarks,
                       const TexturedMesh& canonical_mesh, const Camera& camera);

/// Neutral-face template: the 68 canonical landmarks plus an interpolated
/// forehead/cheek dome, ~500 vertices / ~950 faces, uniform gray. Same
/// construction that produced the shipped OBJ.
TexturedMesh build_template_mesh();

/// Thin-plate interpolation with kernel phi(r) = r: fit maps sites -> values
/// exactly (reproduces affine maps), eval applies the fitted map.
struct ThinPlateMap {
  Eigen::MatrixXd sites;    // n x d
  Eigen::MatrixXd weights;  // (n + d + 1) x m, kernel then affine rows
};
ThinPlateMap tps_fit(const Eigen::MatrixXd& sites, const Eigen::MatrixXd& values);
Eigen::MatrixXd tps_eval(const ThinPlateMap& map, const Eigen::MatrixXd& points);

/// OBJ subset: "v x y z r g b" and 1-based "f i j k" lines.
void save_obj(const std::string& path, const TexturedMesh& mesh);
TexturedMesh load_obj(const std::string& path);

}  // namespace rhm::render
