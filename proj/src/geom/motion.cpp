#include <cmath>
#include <stdexcept>
#include <string>

#include "rhm/geom/geom.hpp"

namespace rhm::geom {

Disentangled disentangle(const std::vector<LandmarkSet>& frames,
                         const CanonicalFace& canonical) {
  if (frames.empty()) {
    throw std::invalid_argument("disentangle: empty frame sequence");
  }
  Disentangled out;
  out.motion.poses.reserve(frames.size());
  out.aligned.reserve(frames.size());
  for (size_t t = 0; t < frames.size(); ++t) {
    RigidTransform pose;
    try {
      pose = fit_rigid(frames[t], canonical.landmarks, canonical.rigid_indices);
    } catch (const std::exception& e) {
      throw std::runtime_error("disentangle: frame " + std::to_string(t) + ": " +
                               e.what());
    }
    LandmarkSet aligned;
    aligned.points = (frames[t].points * pose.rotation.transpose()).rowwise() +
                     pose.translation.transpose();
    out.motion.poses.push_back(pose);
    out.aligned.push_back(aligned);
  }
  return out;
}

Eigen::MatrixX3d repose_vertices(const Eigen::MatrixX3d& vertices,
                                 const RigidTransform& pose_src,
                                 const RigidTransform& pose_dst) {
  if (!vertices.allFinite()) {
    throw std::invalid_argument("repose_vertices: non-finite vertex input");
  }
  // V_out = R_dst^-1 * (R_src V + T_src - T_dst), applied row-wise.
  Eigen::MatrixX3d moved =
      (vertices * pose_src.rotation.transpose()).rowwise() +
      (pose_src.translation - pose_dst.translation).transpose();
  return moved * pose_dst.rotation;  // times R_dst^-1 = R_dst^T on the right
}

int select_reference_frame(const MotionSequence& motion) {
  if (motion.poses.empty()) {
    throw std::invalid_argument("select_reference_frame: empty motion");
  }
  const Eigen::Matrix3d eye = Eigen::Matrix3d::Identity();
  int best = 0;
  double best_angle = geodesic_angle(motion.poses[0].rotation, eye);
  for (size_t t = 1; t < motion.poses.size(); ++t) {
    const double a = geodesic_angle(motion.poses[t].rotation, eye);
    if (a < best_angle) {
      best_angle = a;
      best = static_cast<int>(t);
    }
  }
  return best;
}

MatchResult match_motion(const RigidTransform& query,
                         const std::vector<RigidTransform>& references) {
  if (references.empty()) {
    throw std::invalid_argument("match_motion: empty reference list");
  }
  const Eigen::Matrix<double, 6, 1> hq = encode_pose(query);
  MatchResult best{0, (hq - encode_pose(references[0])).squaredNorm()};
  for (size_t k = 1; k < references.size(); ++k) {
    const double c = (hq - encode_pose(references[k])).squaredNorm();
    if (c < best.cost) {
      best.cost = c;
      best.index = static_cast<int>(k);
    }
  }
  return best;
}

int perturb_match(int index, double /*cost*/,
                  const std::vector<RigidTransform>& references,
                  double temperature, core::Rng& rng) {
  if (temperature < 0.0) {
    throw std::invalid_argument("perturb_match: negative temperature");
  }
  const int k = static_cast<int>(references.size());
  if (k <= 1) return index;
  // With probability min(temperature, 1) resample uniformly over all
  // references; the optimal index then comes up with the leftover 1/K share.
  if (rng.uniform() < std::min(temperature, 1.0)) {
    return rng.uniform_int(k);
  }
  return index;
}

}  // namespace rhm::geom
