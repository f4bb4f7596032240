#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rhm/core/rng.hpp"

namespace rhm::geom {

inline constexpr int kNumLandmarks = 68;

/// 68 3D points in canonical units (canonical face: centroid at origin,
/// mean point radius 1). Row i = point i.
struct LandmarkSet {
  Eigen::Matrix<double, kNumLandmarks, 3> points =
      Eigen::Matrix<double, kNumLandmarks, 3>::Zero();
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct MotionSequence {
  double fps = 25.0;
  std::vector<RigidTransform> poses;
};

struct CanonicalFace {
  LandmarkSet landmarks;
  std::vector<int> rigid_indices;  // near-rigid points used for fitting
};

/// The 27 near-rigid iBUG-68 indices used by default: jaw contour minus the
/// chin tip {0-7, 9-16}, nose {27-35}, inner eye corners {39, 42}.
std::vector<int> default_rigid_indices();

/// Neutral symmetric 68-point face, centroid at origin, mean radius 1,
/// looking along +z. Same construction that produced the shipped data file.
CanonicalFace build_canonical_face();

// ---- rotations ----------------------------------------------------------

/// Canonical axis-angle vector r = angle * unit_axis, angle in [0, pi].
/// Deterministic sign at angle == pi (largest-|component| made positive).
Eigen::Vector3d axis_angle_from_matrix(const Eigen::Matrix3d& r);
Eigen::Matrix3d matrix_from_axis_angle(const Eigen::Vector3d& r);

/// Geodesic rotation angle between two rotations, radians in [0, pi].
double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

/// 6-D pose encoding [axis-angle; translation] and its inverse.
Eigen::Matrix<double, 6, 1> encode_pose(const RigidTransform& pose);
RigidTransform decode_pose(const Eigen::Matrix<double, 6, 1>& h);

// ---- fitting and disentanglement ----------------------------------------

/// Least-squares rigid transform (no scale) minimizing
/// sum_i || target_i - (R * source_i + T) ||^2 over the indexed points.
/// Kabsch: SVD of the cross-covariance with determinant sign correction.
/// Degenerate (coincident/collinear) configurations throw.
RigidTransform fit_rigid(const LandmarkSet& source, const LandmarkSet& target,
                         const std::vector<int>& indices);

struct Disentangled {
  MotionSequence motion;                // h_t per frame
  std::vector<LandmarkSet> aligned;     // R_t * l_t + T_t, pose removed
};

/// Split each frame into pose (rigid fit onto the canonical) and aligned,
/// expression-only landmarks.
Disentangled disentangle(const std::vector<LandmarkSet>& frames,
                         const CanonicalFace& canonical);

/// Move vertices posed by `pose_src` so they appear under `pose_dst`:
/// V_out = R_dst^-1 * (R_src * V + T_src - T_dst). Rows are points.
Eigen::MatrixX3d repose_vertices(const Eigen::MatrixX3d& vertices,
                                 const RigidTransform& pose_src,
                                 const RigidTransform& pose_dst);

/// Index of the most frontal frame (minimal rotation angle; ties -> smallest).
int select_reference_frame(const MotionSequence& motion);

struct MatchResult {
  int index = 0;
  double cost = 0.0;  // squared L2 in the 6-D encoding
};

/// Nearest reference pose to the query in 6-D encoding; ties -> smallest index.
MatchResult match_motion(const RigidTransform& query,
                         const std::vector<RigidTransform>& references);

/// Training-time robustness: with probability min(temperature, 1) pick a
/// uniformly random reference instead of the matched one.
int perturb_match(int index, double cost,
                  const std::vector<RigidTransform>& references,
                  double temperature, core::Rng& rng);

// ---- file formats -------------------------------------------------------

/// JSON {"fps": ..., "frames": [[[x,y,z] x 68], ...]}.
void save_landmarks(const std::string& path, double fps,
                    const std::vector<LandmarkSet>& frames);
struct LandmarkFile {
  double fps = 25.0;
  std::vector<LandmarkSet> frames;
};
LandmarkFile load_landmarks(const std::string& path);

/// CSV with header "rx,ry,rz,tx,ty,tz", one row per frame (axis-angle +
/// translation).
void save_motion_csv(const std::string& path, const MotionSequence& motion);
MotionSequence load_motion_csv(const std::string& path, double fps = 25.0);

}  // namespace rhm::geom
