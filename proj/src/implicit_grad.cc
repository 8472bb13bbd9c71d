#include "bpnp/implicit_grad.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace bpnp {

Vector6d ConstraintF(const Correspondences& corrs, const Pose& pose,
                     const Intrinsics& intrinsics) {
  corrs.Validate(1);
  const ProjectionJet jet = ProjectWithJets(corrs.pts3d, pose, intrinsics);
  return -2.0 * jet.d_pose.transpose() * (corrs.x2d - jet.pi);
}

ConstraintJacobians ComputeConstraintJacobians(const Correspondences& corrs,
                                               const Pose& pose,
                                               const Intrinsics& intrinsics) {
  corrs.Validate(1);
  const int n = corrs.size();
  ConstraintJacobians jac;
  jac.df_dy.setZero();
  jac.df_dx.setZero(kPoseDim, 2 * n);
  jac.df_dz.setZero(kPoseDim, 3 * n);
  jac.df_dK.setZero();

  for (int i = 0; i < n; ++i) {
    PointSecondOrder so;
    try {
      so = ProjectPointSecondOrder(corrs.Point(i), pose, intrinsics);
    } catch (const PointBehindCamera& e) {
      throw PointBehindCamera(i, e.depth());
    }
    const Eigen::Vector2d r = corrs.ImagePoint(i) - so.pi;
    const auto Jy = so.jacobian.leftCols<kPoseDim>();
    const auto Jz = so.jacobian.middleCols<3>(kPoseDim);
    const auto JK = so.jacobian.rightCols<kIntrinsicsDim>();
    // sum_c r_c * d^2 pi_c / (dy dw)
    const Eigen::Matrix<double, kPoseDim, kPointInputDim> curvature =
        r[0] * so.pose_rows[0] + r[1] * so.pose_rows[1];

    jac.df_dy += 2.0 * Jy.transpose() * Jy -
                 2.0 * curvature.leftCols<kPoseDim>();
    jac.df_dx.middleCols<2>(2 * i) = -2.0 * Jy.transpose();
    jac.df_dz.middleCols<3>(3 * i) =
        2.0 * Jy.transpose() * Jz - 2.0 * curvature.middleCols<3>(kPoseDim);
    jac.df_dK += 2.0 * Jy.transpose() * JK -
                 2.0 * curvature.rightCols<kIntrinsicsDim>();
  }
  return jac;
}

double StationaryCondition(const Matrix6d& df_dy) {
  if (!df_dy.allFinite()) return std::numeric_limits<double>::infinity();
  const Matrix6d sym = 0.5 * (df_dy + df_dy.transpose());
  const Vector6d ev =
      Eigen::SelfAdjointEigenSolver<Matrix6d>(sym, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .cwiseAbs();
  const double smallest = ev.minCoeff();
  if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / smallest;
}

ImplicitJacobians SolveImplicitJacobians(const ConstraintJacobians& jac,
                                         double cond_max) {
  const double cond = StationaryCondition(jac.df_dy);
  if (!(cond <= cond_max)) {
    throw SingularStationaryHessian(
        cond, "stationary Hessian is singular or ill-conditioned (cond " +
                  std::to_string(cond) + ")");
  }
  const Eigen::ColPivHouseholderQR<Matrix6d> qr(jac.df_dy);
  ImplicitJacobians out;
  out.dg_dx = -qr.solve(jac.df_dx);
  out.dg_dz = -qr.solve(jac.df_dz);
  out.dg_dK = -qr.solve(jac.df_dK);
  out.conditioning = cond;
  return out;
}

ImplicitJacobians PnPJacobians(const Correspondences& corrs,
                               const Intrinsics& intrinsics,
                               const PnPSolution& solution, double cond_max) {
  if (!solution.converged) {
    throw InvalidInput(
        "backward pass requires a converged forward solution");
  }
  if (corrs.size() < 4) {
    throw SingularStationaryHessian(
        std::numeric_limits<double>::infinity(),
        "fewer than 4 correspondences do not isolate the pose");
  }
  return SolveImplicitJacobians(
      ComputeConstraintJacobians(corrs, solution.pose, intrinsics), cond_max);
}

GradientBundle Backward(const ImplicitJacobians& jac, const Vector6d& grad_y) {
  GradientBundle g;
  g.grad_x = jac.dg_dx.transpose() * grad_y;
  g.grad_z = jac.dg_dz.transpose() * grad_y;
  g.grad_K = jac.dg_dK.transpose() * grad_y;
  g.conditioning = jac.conditioning;
  return g;
}

FiniteDifferenceResult FiniteDifferenceJacobian(const Correspondences& corrs,
                                                const Intrinsics& intrinsics,
                                                const PnPSolution& base,
                                                SolverInput which, double step,
                                                const SolverConfig& cfg) {
  if (!base.converged) {
    throw InvalidInput("finite differences need a converged base solution");
  }
  if (!(step > 0.0)) throw InvalidInput("step must be positive");

  const Eigen::Index dim = which == SolverInput::kImagePoints  ? corrs.x2d.size()
                           : which == SolverInput::kScenePoints ? corrs.pts3d.size()
                                                                : kIntrinsicsDim;
  FiniteDifferenceResult out;
  out.jacobian.resize(kPoseDim, dim);

  auto solve_perturbed = [&](Eigen::Index k, double delta) {
    Correspondences c = corrs;
    Intrinsics K = intrinsics;
    switch (which) {
      case SolverInput::kImagePoints:
        c.x2d[k] += delta;
        break;
      case SolverInput::kScenePoints:
        c.pts3d[k] += delta;
        break;
      case SolverInput::kIntrinsics: {
        Eigen::Vector4d kv = K.AsVector();
        kv[k] += delta;
        K = Intrinsics::FromVector(kv);
        break;
      }
    }
    ++out.solver_calls;
    return SolvePnP(c, K, base.pose, cfg).pose.AsVector();
  };

  for (Eigen::Index k = 0; k < dim; ++k) {
    const Vector6d plus = solve_perturbed(k, step);
    const Vector6d minus = solve_perturbed(k, -step);
    out.jacobian.col(k) = (plus - minus) / (2.0 * step);
  }
  return out;
}

double RelativeError(const Eigen::MatrixXd& actual,
                     const Eigen::MatrixXd& expected) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    throw InvalidInput("RelativeError: shape mismatch");
  }
  const double scale = expected.cwiseAbs().maxCoeff();
  const double diff = (actual - expected).cwiseAbs().maxCoeff();
  if (scale == 0.0) return diff;
  return diff / scale;
}

}  // namespace bpnp
