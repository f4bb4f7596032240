#include <cmath>

#include "rhm/render/render.hpp"

namespace rhm::render {

RigidFlowField rigid_flow(const TexturedMesh& mesh,
                          const geom::RigidTransform& pose_src,
                          const geom::RigidTransform& pose_dst,
                          const Camera& cam) {
  RigidFlowField out;
  out.height = cam.height;
  out.width = cam.width;
  const size_t plane = (size_t)cam.height * cam.width;
  out.flow.assign(2 * plane, 0.0);
  out.visibility.assign(plane, 0.0);

  const RasterSettings settings;  // only depth bookkeeping is used
  const TexturedMesh posed = pose_mesh(mesh, pose_src, pose_dst);
  const HardRaster dst = hard_rasterize(posed, cam, settings);
  const HardRaster src = hard_rasterize(mesh, cam, settings);

  bool any = false;
  const double occlusion_tol = 0.03;  // mesh z units
  for (size_t pi = 0; pi < plane; ++pi) {
    if (!dst.mask[pi]) continue;
    any = true;
    const auto& f = mesh.faces[(size_t)dst.face[pi]];
    // Same surface point in the source pose: barycentric combination of the
    // original (pose_src) vertices.
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) {
      point += dst.bary[3 * pi + k] * mesh.vertices.row(f[k]).transpose();
    }
    const double u = cam.cx + cam.sx * point.x();
    const double v = cam.cy + cam.sy * point.y();
    const double px = (double)(pi % (size_t)cam.width) + 0.5;
    const double py = (double)(pi / (size_t)cam.width) + 0.5;
    out.flow[2 * pi + 0] = u - px;
    out.flow[2 * pi + 1] = v - py;

    const int sj = (int)std::floor(u - 0.5 + 0.5), si = (int)std::floor(v - 0.5 + 0.5);
    if (si >= 0 && si < cam.height && sj >= 0 && sj < cam.width) {
      const size_t spi = (size_t)si * cam.width + sj;
      if (src.mask[spi] && point.z() >= src.depth[spi] - occlusion_tol) {
        out.visibility[pi] = 1.0;
      }
    }
  }
  out.empty_projection = !any;
  return out;
}

}  // namespace rhm::render
