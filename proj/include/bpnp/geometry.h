#ifndef BPNP_GEOMETRY_H_
#define BPNP_GEOMETRY_H_

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace bpnp {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using MatrixX6d = Eigen::Matrix<double, Eigen::Dynamic, 6>;
using MatrixX4d = Eigen::Matrix<double, Eigen::Dynamic, 4>;
using Matrix23d = Eigen::Matrix<double, 2, 3>;

// Number of pose parameters (axis-angle rotation + translation).
inline constexpr int kPoseDim = 6;
inline constexpr int kIntrinsicsDim = 4;
// Variables a single projection depends on: pose, one 3D point, intrinsics.
inline constexpr int kPointInputDim = kPoseDim + 3 + kIntrinsicsDim;

// Camera-frame depth at or below which a projection is rejected.
inline constexpr double kDepthEpsilon = 1e-8;

// World-to-camera transform X_cam = R(rot) * X_world + trans.
struct Pose {
  Eigen::Vector3d rot = Eigen::Vector3d::Zero();
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();

  static Pose Identity() { return {}; }
  static Pose FromVector(const Vector6d& y);

  Vector6d AsVector() const;
  Eigen::Matrix3d Rotation() const;

  // Same rotation with angle folded into [0, pi]. Only applied at API
  // boundaries; the solver iterates on the raw vector.
  Pose Canonical() const;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  static Intrinsics FromVector(const Eigen::Vector4d& k);

  Eigen::Vector4d AsVector() const;
  // Upper-triangular calibration matrix [fx 0 cx; 0 fy cy; 0 0 1].
  Eigen::Matrix3d Matrix() const;
  // Throws InvalidInput unless fx, fy > 0 and all entries are finite.
  void Validate() const;
};

// n paired observations: x2d = [u1 v1 u2 v2 ...], pts3d = [X1 Y1 Z1 ...].
struct Correspondences {
  Eigen::VectorXd x2d;
  Eigen::VectorXd pts3d;

  Correspondences() = default;
  Correspondences(Eigen::VectorXd x, Eigen::VectorXd z)
      : x2d(std::move(x)), pts3d(std::move(z)) {}

  int size() const { return static_cast<int>(pts3d.size() / 3); }

  Eigen::Vector2d ImagePoint(int i) const { return x2d.segment<2>(2 * i); }
  Eigen::Vector3d Point(int i) const { return pts3d.segment<3>(3 * i); }

  Correspondences Subset(std::span<const int> indices) const;

  // Checks the length invariants, finiteness and n >= min_points.
  void Validate(int min_points = 4) const;
};

// Projections and their exact first derivatives for a set of points.
struct ProjectionJet {
  Eigen::VectorXd pi;        // 2n
  MatrixX6d d_pose;          // 2n x 6
  std::vector<Matrix23d> d_points;  // block i is d(pi_i)/d(z_i)
  MatrixX4d d_intrinsics;    // 2n x 4, columns (fx, fy, cx, cy)

  // Expands d_points into the full block-diagonal 2n x 3n matrix.
  Eigen::MatrixXd DensePoints() const;
};

// First and second derivatives of a single projection pi_i with respect to
// its 13 inputs ordered [pose(6), point(3), intrinsics(4)].
struct PointSecondOrder {
  Eigen::Vector2d pi;
  Eigen::Matrix<double, 2, kPointInputDim> jacobian;
  // pose_rows[c](j, k) = d^2 pi_c / (d y_j d w_k).
  std::array<Eigen::Matrix<double, kPoseDim, kPointInputDim>, 2> pose_rows;
};

Eigen::Matrix3d Rodrigues(const Eigen::Vector3d& rot);

// Inverse of Rodrigues with angle in [0, pi]. At an angle of exactly pi the
// axis is chosen with its first nonzero component positive.
Eigen::Vector3d LogRotation(const Eigen::Matrix3d& R);

// Pinhole projection of every point. Throws PointBehindCamera.
Eigen::VectorXd Project(const Eigen::VectorXd& pts3d, const Pose& pose,
                        const Intrinsics& intrinsics);

ProjectionJet ProjectWithJets(const Eigen::VectorXd& pts3d, const Pose& pose,
                              const Intrinsics& intrinsics);

PointSecondOrder ProjectPointSecondOrder(const Eigen::Vector3d& point,
                                         const Pose& pose,
                                         const Intrinsics& intrinsics);

// d^2 pi / (du dv) for arbitrary directions u, v over the 13 point inputs.
Eigen::Vector2d ProjectPointSecondDirectional(
    const Eigen::Vector3d& point, const Pose& pose,
    const Intrinsics& intrinsics,
    const Eigen::Matrix<double, kPointInputDim, 1>& u,
    const Eigen::Matrix<double, kPointInputDim, 1>& v);

// r = x - pi.
Eigen::VectorXd Residuals(const Correspondences& corrs, const Pose& pose,
                          const Intrinsics& intrinsics);

// o = sum_i |x_i - pi_i|^2.
double Objective(const Correspondences& corrs, const Pose& pose,
                 const Intrinsics& intrinsics);

// True when every point lies strictly in front of the camera.
bool AllInFront(const Eigen::VectorXd& pts3d, const Pose& pose);

}  // namespace bpnp

#endif  // BPNP_GEOMETRY_H_
