#include "bpnp/geometry.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "bpnp/errors.h"
#include "bpnp/projection_kernel.h"

namespace bpnp {
namespace {

// Angle-pi branch switch for LogRotation.
constexpr double kNearPi = 1e-6;
constexpr double kRotationCheckTol = 1e-8;

using PointInputs = Eigen::Matrix<double, kPointInputDim, 1>;

PointInputs PackInputs(const Eigen::Vector3d& point, const Pose& pose,
                       const Intrinsics& intrinsics) {
  PointInputs w;
  w << pose.rot, pose.trans, point, intrinsics.AsVector();
  return w;
}

template <typename T>
double EvalKernel(const T* w, T* uv) {
  return kernel::ProjectPoint(w, w + kPoseDim, w + kPoseDim + 3, uv);
}

void CheckDepth(double depth, int index) {
  if (!(depth > kDepthEpsilon)) {
    throw PointBehindCamera(index, depth);
  }
}

}  // namespace

Pose Pose::FromVector(const Vector6d& y) {
  Pose pose;
  pose.rot = y.head<3>();
  pose.trans = y.tail<3>();
  return pose;
}

Vector6d Pose::AsVector() const {
  Vector6d y;
  y << rot, trans;
  return y;
}

Eigen::Matrix3d Pose::Rotation() const { return Rodrigues(rot); }

Pose Pose::Canonical() const {
  Pose out = *this;
  if (rot.norm() > std::numbers::pi) {
    out.rot = LogRotation(Rodrigues(rot));
  }
  return out;
}

Intrinsics Intrinsics::FromVector(const Eigen::Vector4d& k) {
  return {k[0], k[1], k[2], k[3]};
}

Eigen::Vector4d Intrinsics::AsVector() const { return {fx, fy, cx, cy}; }

Eigen::Matrix3d Intrinsics::Matrix() const {
  Eigen::Matrix3d K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

void Intrinsics::Validate() const {
  if (!AsVector().allFinite()) {
    throw InvalidInput("intrinsics must be finite");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw InvalidInput("focal lengths must be positive");
  }
}

Correspondences Correspondences::Subset(std::span<const int> indices) const {
  Correspondences out;
  out.x2d.resize(2 * static_cast<Eigen::Index>(indices.size()));
  out.pts3d.resize(3 * static_cast<Eigen::Index>(indices.size()));
  for (size_t k = 0; k < indices.size(); ++k) {
    const int i = indices[k];
    out.x2d.segment<2>(2 * k) = x2d.segment<2>(2 * i);
    out.pts3d.segment<3>(3 * k) = pts3d.segment<3>(3 * i);
  }
  return out;
}

void Correspondences::Validate(int min_points) const {
  if (pts3d.size() % 3 != 0) {
    throw InvalidInput("pts3d length must be a multiple of 3");
  }
  if (x2d.size() != 2 * (pts3d.size() / 3)) {
    throw InvalidInput("x2d must hold 2 coordinates per 3D point");
  }
  if (size() < min_points) {
    throw InvalidInput("need at least " + std::to_string(min_points) +
                       " correspondences, got " + std::to_string(size()));
  }
  if (!x2d.allFinite() || !pts3d.allFinite()) {
    throw InvalidInput("correspondences contain non-finite coordinates");
  }
}

Eigen::MatrixXd ProjectionJet::DensePoints() const {
  const Eigen::Index n = static_cast<Eigen::Index>(d_points.size());
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(2 * n, 3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dense.block<2, 3>(2 * i, 3 * i) = d_points[i];
  }
  return dense;
}

Eigen::Matrix3d Rodrigues(const Eigen::Vector3d& rot) {
  Eigen::Matrix3d R;
  for (int c = 0; c < 3; ++c) {
    const Eigen::Vector3d e = Eigen::Vector3d::Unit(c);
    Eigen::Vector3d col;
    kernel::RotatePoint(rot.data(), e.data(), col.data());
    R.col(c) = col;
  }
  return R;
}

Eigen::Vector3d LogRotation(const Eigen::Matrix3d& R) {
  if (!R.allFinite() ||
      (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
          kRotationCheckTol ||
      std::abs(R.determinant() - 1.0) > kRotationCheckTol) {
    throw NotARotation("matrix is not in SO(3)");
  }
  // 2 sin(theta) * axis
  const Eigen::Vector3d skew(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0),
                             R(1, 0) - R(0, 1));
  const double sin_theta = 0.5 * skew.norm();
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (std::numbers::pi - theta < kNearPi) {
    // (R + R^T) / 2 = cos(theta) I + (1 - cos(theta)) k k^T
    const Eigen::Matrix3d kkT =
        (0.5 * (R + R.transpose()) - cos_theta * Eigen::Matrix3d::Identity()) /
        (1.0 - cos_theta);
    Eigen::Index col = 0;
    kkT.diagonal().maxCoeff(&col);
    Eigen::Vector3d axis = kkT.col(col) / std::sqrt(kkT(col, col));
    axis.normalize();
    const double orient = axis.dot(skew);
    if (std::abs(orient) > 1e-14) {
      if (orient < 0.0) axis = -axis;
    } else {
      for (int k = 0; k < 3; ++k) {
        if (std::abs(axis[k]) > 1e-12) {
          if (axis[k] < 0.0) axis = -axis;
          break;
        }
      }
    }
    return theta * axis;
  }
  if (theta < 1e-8) {
    // theta / sin(theta) -> 1
    return 0.5 * skew;
  }
  return (theta / (2.0 * sin_theta)) * skew;
}

Eigen::VectorXd Project(const Eigen::VectorXd& pts3d, const Pose& pose,
                        const Intrinsics& intrinsics) {
  const Eigen::Index n = pts3d.size() / 3;
  Eigen::VectorXd pi(2 * n);
  const Vector6d y = pose.AsVector();
  const Eigen::Vector4d k = intrinsics.AsVector();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double depth = kernel::ProjectPoint(y.data(), pts3d.data() + 3 * i,
                                              k.data(), pi.data() + 2 * i);
    CheckDepth(depth, static_cast<int>(i));
  }
  return pi;
}

ProjectionJet ProjectWithJets(const Eigen::VectorXd& pts3d, const Pose& pose,
                              const Intrinsics& intrinsics) {
  using Jet = ceres::Jet<double, kPointInputDim>;
  const Eigen::Index n = pts3d.size() / 3;
  ProjectionJet out;
  out.pi.resize(2 * n);
  out.d_pose.resize(2 * n, kPoseDim);
  out.d_intrinsics.resize(2 * n, kIntrinsicsDim);
  out.d_points.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const PointInputs w =
        PackInputs(pts3d.segment<3>(3 * i), pose, intrinsics);
    Jet wj[kPointInputDim];
    for (int k = 0; k < kPointInputDim; ++k) wj[k] = Jet(w[k], k);
    Jet uv[2];
    CheckDepth(EvalKernel(wj, uv), static_cast<int>(i));
    for (int c = 0; c < 2; ++c) {
      const Eigen::Index row = 2 * i + c;
      out.pi[row] = uv[c].a;
      out.d_pose.row(row) = uv[c].v.head<kPoseDim>().transpose();
      out.d_points[i].row(c) = uv[c].v.segment<3>(kPoseDim).transpose();
      out.d_intrinsics.row(row) = uv[c].v.tail<kIntrinsicsDim>().transpose();
    }
  }
  return out;
}

PointSecondOrder ProjectPointSecondOrder(const Eigen::Vector3d& point,
                                         const Pose& pose,
                                         const Intrinsics& intrinsics) {
  using Inner = ceres::Jet<double, kPointInputDim>;
  using Outer = ceres::Jet<Inner, kPoseDim>;
  const PointInputs w = PackInputs(point, pose, intrinsics);
  Outer wj[kPointInputDim];
  for (int k = 0; k < kPointInputDim; ++k) {
    wj[k].a = Inner(w[k], k);
    if (k < kPoseDim) wj[k].v[k] = Inner(1.0);
  }
  Outer uv[2];
  CheckDepth(EvalKernel(wj, uv), 0);

  PointSecondOrder out;
  for (int c = 0; c < 2; ++c) {
    out.pi[c] = uv[c].a.a;
    out.jacobian.row(c) = uv[c].a.v.transpose();
    for (int j = 0; j < kPoseDim; ++j) {
      out.pose_rows[c].row(j) = uv[c].v[j].v.transpose();
    }
  }
  return out;
}

Eigen::Vector2d ProjectPointSecondDirectional(const Eigen::Vector3d& point,
                                              const Pose& pose,
                                              const Intrinsics& intrinsics,
                                              const PointInputs& u,
                                              const PointInputs& v) {
  using Inner = ceres::Jet<double, 1>;
  using Outer = ceres::Jet<Inner, 1>;
  const PointInputs w = PackInputs(point, pose, intrinsics);
  Outer wj[kPointInputDim];
  for (int k = 0; k < kPointInputDim; ++k) {
    wj[k].a = Inner(w[k]);
    wj[k].a.v[0] = u[k];
    wj[k].v[0] = Inner(v[k]);
  }
  Outer uv[2];
  CheckDepth(EvalKernel(wj, uv), 0);
  return {uv[0].v[0].v[0], uv[1].v[0].v[0]};
}

Eigen::VectorXd Residuals(const Correspondences& corrs, const Pose& pose,
                          const Intrinsics& intrinsics) {
  return corrs.x2d - Project(corrs.pts3d, pose, intrinsics);
}

double Objective(const Correspondences& corrs, const Pose& pose,
                 const Intrinsics& intrinsics) {
  return Residuals(corrs, pose, intrinsics).squaredNorm();
}

bool AllInFront(const Eigen::VectorXd& pts3d, const Pose& pose) {
  const Eigen::Matrix3d R = pose.Rotation();
  for (Eigen::Index i = 0; i < pts3d.size() / 3; ++i) {
    const double depth = R.row(2).dot(pts3d.segment<3>(3 * i)) + pose.trans[2];
    if (!(depth > kDepthEpsilon)) return false;
  }
  return true;
}

}  // namespace bpnp
