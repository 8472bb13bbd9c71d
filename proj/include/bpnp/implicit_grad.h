#ifndef BPNP_IMPLICIT_GRAD_H_
#define BPNP_IMPLICIT_GRAD_H_

#include <Eigen/Core>

#include "bpnp/geometry.h"
#include "bpnp/pnp_solver.h"

namespace bpnp {

using Matrix6Xd = Eigen::Matrix<double, kPoseDim, Eigen::Dynamic>;
using Matrix64d = Eigen::Matrix<double, kPoseDim, kIntrinsicsDim>;

// Above this condition number of df/dy the implicit Jacobians are refused.
inline constexpr double kMaxStationaryCondition = 1e12;

// Jacobians of the stationarity residual f = d o / d y.
struct ConstraintJacobians {
  Matrix6d df_dy;    // Hessian of o w.r.t. the pose
  Matrix6Xd df_dx;   // 6 x 2n
  Matrix6Xd df_dz;   // 6 x 3n
  Matrix64d df_dK;   // 6 x 4, columns (fx, fy, cx, cy)
};

// Jacobians of the solver output y = g(x, z, K).
struct ImplicitJacobians {
  Matrix6Xd dg_dx;
  Matrix6Xd dg_dz;
  Matrix64d dg_dK;
  double conditioning = 0.0;
};

struct GradientBundle {
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_z;
  Eigen::Vector4d grad_K = Eigen::Vector4d::Zero();
  double conditioning = 0.0;
};

// f_j = sum_i <r_i, c_ij> with c_ij = -2 d pi_i / d y_j.
Vector6d ConstraintF(const Correspondences& corrs, const Pose& pose,
                     const Intrinsics& intrinsics);

ConstraintJacobians ComputeConstraintJacobians(const Correspondences& corrs,
                                               const Pose& pose,
                                               const Intrinsics& intrinsics);

// 2-norm condition number of the (symmetrized) df/dy.
double StationaryCondition(const Matrix6d& df_dy);

// Solves df_dy * dg = -df_d* for every input. Throws
// SingularStationaryHessian when the condition number exceeds cond_max.
ImplicitJacobians SolveImplicitJacobians(
    const ConstraintJacobians& jac, double cond_max = kMaxStationaryCondition);

// Implicit Jacobians at a converged solution. Refuses solutions that are not
// converged (InvalidInput) and configurations with fewer than four points
// (SingularStationaryHessian).
ImplicitJacobians PnPJacobians(const Correspondences& corrs,
                               const Intrinsics& intrinsics,
                               const PnPSolution& solution,
                               double cond_max = kMaxStationaryCondition);

// Vector-Jacobian products grad_in = (dg/d in)^T grad_y.
GradientBundle Backward(const ImplicitJacobians& jac, const Vector6d& grad_y);

enum class SolverInput { kImagePoints, kScenePoints, kIntrinsics };

struct FiniteDifferenceResult {
  Eigen::MatrixXd jacobian;  // 6 x dim
  int solver_calls = 0;
};

// Central-difference Jacobian of the solver output w.r.t. one input. Every
// perturbed solve is warm-started from the base pose so it tracks the same
// local minimum. Costs exactly 2 * dim solves.
FiniteDifferenceResult FiniteDifferenceJacobian(const Correspondences& corrs,
                                                const Intrinsics& intrinsics,
                                                const PnPSolution& base,
                                                SolverInput which, double step,
                                                const SolverConfig& cfg = {});

// max |A - B| / max |B|, the normwise error used by every gradient check.
double RelativeError(const Eigen::MatrixXd& actual,
                     const Eigen::MatrixXd& expected);

}  // namespace bpnp

#endif  // BPNP_IMPLICIT_GRAD_H_
