#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rhm/geom/geom.hpp"

namespace rhm::geom {

namespace {

Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

}  // namespace

Eigen::Vector3d axis_angle_from_matrix(const Eigen::Matrix3d& r) {
  // atan2 of (sin, cos) read off the matrix keeps full precision at both
  // ends of [0, pi], where acos of the trace alone degrades.
  const double angle =
      std::atan2(0.5 * vee(r).norm(), std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0));

  if (angle < 1e-7) {
    // sin(angle)*axis ~= angle*axis to O(angle^3)
    return 0.5 * vee(r);
  }

  if (angle > M_PI - 1e-5) {
    // Antipodal regime: the skew part vanishes, read the axis off R + I.
    // (R + I)/2 = aa^T at angle == pi.
    Eigen::Vector3d axis;
    for (int i = 0; i < 3; ++i) {
      axis[i] = std::sqrt(std::max(0.0, (r(i, i) + 1.0) * 0.5));
    }
    int k = 0;
    if (axis[1] > axis[k]) k = 1;
    if (axis[2] > axis[k]) k = 2;
    // Off-diagonal entries (R_ij + R_ji)/2 = a_i a_j fix the relative signs.
    for (int i = 0; i < 3; ++i) {
      if (i == k) continue;
      const double s = (r(i, k) + r(k, i)) * 0.5;
      if (s < 0.0) axis[i] = -axis[i];
    }
    axis.normalize();
    // The sin term still disambiguates slightly off pi; exactly at pi both
    // signs encode the same rotation, so pick the one agreeing with the skew
    // part when it is meaningful, else make the largest component positive.
    const Eigen::Vector3d skew = vee(r);
    if (skew.norm() > 1e-12) {
      if (skew.dot(axis) < 0.0) axis = -axis;
    } else {
      int m = 0;
      for (int i = 1; i < 3; ++i) {
        if (std::abs(axis[i]) > std::abs(axis[m])) m = i;
      }
      if (axis[m] < 0.0) axis = -axis;
    }
    return angle * axis;
  }

  return (angle / (2.0 * std::sin(angle))) * vee(r);
}

Eigen::Matrix3d matrix_from_axis_angle(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  Eigen::Matrix3d k = Eigen::Matrix3d::Zero();
  k(0, 1) = -r[2];
  k(0, 2) = r[1];
  k(1, 0) = r[2];
  k(1, 2) = -r[0];
  k(2, 0) = -r[1];
  k(2, 1) = r[0];
  // Rodrigues with series-safe coefficients: R = I + s*K + t*K^2 where
  // s = sin(a)/a, t = (1-cos(a))/a^2 (K holds the unnormalized vector).
  double s, t;
  if (angle < 1e-6) {
    const double a2 = angle * angle;
    s = 1.0 - a2 / 6.0;
    t = 0.5 - a2 / 24.0;
  } else {
    s = std::sin(angle) / angle;
    t = (1.0 - std::cos(angle)) / (angle * angle);
  }
  return Eigen::Matrix3d::Identity() + s * k + t * (k * k);
}

double geodesic_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d e = a.transpose() * b;
  return std::atan2(0.5 * vee(e).norm(),
                    std::clamp((e.trace() - 1.0) * 0.5, -1.0, 1.0));
}

Eigen::Matrix<double, 6, 1> encode_pose(const RigidTransform& pose) {
  Eigen::Matrix<double, 6, 1> h;
  h.head<3>() = axis_angle_from_matrix(pose.rotation);
  h.tail<3>() = pose.translation;
  return h;
}

RigidTransform decode_pose(const Eigen::Matrix<double, 6, 1>& h) {
  RigidTransform pose;
  pose.rotation = matrix_from_axis_angle(h.head<3>());
  pose.translation = h.tail<3>();
  return pose;
}

RigidTransform fit_rigid(const LandmarkSet& source, const LandmarkSet& target,
                         const std::vector<int>& indices) {
  if (indices.size() < 3) {
    throw std::invalid_argument("fit_rigid: need at least 3 indexed points, got " +
                                std::to_string(indices.size()));
  }
  const int n = static_cast<int>(indices.size());
  Eigen::MatrixX3d src(n, 3), dst(n, 3);
  for (int i = 0; i < n; ++i) {
    const int idx = indices[static_cast<size_t>(i)];
    if (idx < 0 || idx >= kNumLandmarks) {
      throw std::invalid_argument("fit_rigid: landmark index " + std::to_string(idx) +
                                  " out of range [0,68)");
    }
    src.row(i) = source.points.row(idx);
    dst.row(i) = target.points.row(idx);
  }

  const Eigen::RowVector3d cs = src.colwise().mean();
  const Eigen::RowVector3d cd = dst.colwise().mean();
  src.rowwise() -= cs;
  dst.rowwise() -= cd;

  // Cross-covariance H maps centered source directions to centered target
  // directions; the best rotation is its orthogonal polar factor.
  const Eigen::Matrix3d h = src.transpose() * dst;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  const double spread = src.rowwise().norm().maxCoeff();
  if (spread < 1e-12 || sv[1] <= 1e-12 * std::max(sv[0], 1e-300)) {
    throw std::invalid_argument(
        "fit_rigid: degenerate (coincident or collinear) point configuration");
  }

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  RigidTransform out;
  out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  out.translation = cd.transpose() - out.rotation * cs.transpose();
  return out;
}

}  // namespace rhm::geom
