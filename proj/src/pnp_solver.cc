#include "bpnp/pnp_solver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Cholesky>

#include "bpnp/rng.h"

namespace bpnp {
namespace {

constexpr double kMaxLambda = 1e16;
constexpr int kHypothesisRefineIters = 5;

struct Linearization {
  Eigen::VectorXd residuals;  // x - pi
  MatrixX6d d_pose;           // d pi / d y
  double objective = 0.0;
  // Rounding bound on the computed objective: each residual carries an
  // absolute error of about eps * |x|.
  double resolution = 0.0;
  Vector6d gradient;          // d o / d y = -2 d_pose^T r
};

Linearization Linearize(const Correspondences& corrs, const Pose& pose,
                        const Intrinsics& intrinsics) {
  ProjectionJet jet = ProjectWithJets(corrs.pts3d, pose, intrinsics);
  Linearization lin;
  lin.residuals = corrs.x2d - jet.pi;
  lin.d_pose = std::move(jet.d_pose);
  lin.objective = lin.residuals.squaredNorm();
  lin.resolution = kObjectiveRoundoff *
                   (lin.residuals.cwiseAbs().dot(corrs.x2d.cwiseAbs()) +
                    lin.objective);
  lin.gradient = -2.0 * lin.d_pose.transpose() * lin.residuals;
  return lin;
}

// Half the exact Hessian of the objective w.r.t. the pose:
// J^T J - sum_c r_c d^2 pi_c / dy^2.
Matrix6d ExactHalfHessian(const Correspondences& corrs, const Pose& pose,
                          const Intrinsics& intrinsics) {
  Matrix6d H = Matrix6d::Zero();
  for (int i = 0; i < corrs.size(); ++i) {
    const PointSecondOrder so =
        ProjectPointSecondOrder(corrs.Point(i), pose, intrinsics);
    const Eigen::Vector2d r = corrs.ImagePoint(i) - so.pi;
    const auto Jy = so.jacobian.leftCols<kPoseDim>();
    H += Jy.transpose() * Jy - r[0] * so.pose_rows[0].leftCols<kPoseDim>() -
         r[1] * so.pose_rows[1].leftCols<kPoseDim>();
  }
  return 0.5 * (H + H.transpose());
}

bool PositiveDefinite(const Eigen::LDLT<Matrix6d>& ldlt) {
  return ldlt.info() == Eigen::Success && ldlt.isPositive() &&
         (ldlt.vectorD().array() > 0.0).all();
}

}  // namespace

void SolverConfig::Validate() const {
  if (max_iters < 1) throw InvalidInput("max_iters must be >= 1");
  if (!(grad_tol > 0.0) || !(step_tol > 0.0) || !(lambda_init > 0.0)) {
    throw InvalidInput("solver tolerances must be positive");
  }
  if (!(lambda_up > 1.0) || !(lambda_down > 0.0) || !(lambda_down < 1.0)) {
    throw InvalidInput("need lambda_up > 1 > lambda_down > 0");
  }
}

void RansacConfig::Validate() const {
  if (sample_size < 4) throw InvalidInput("RANSAC sample_size must be >= 4");
  if (iterations < 1) throw InvalidInput("RANSAC iterations must be >= 1");
  if (!(inlier_threshold > 0.0)) {
    throw InvalidInput("RANSAC inlier_threshold must be positive");
  }
}

PnPSolution SolvePnPNoThrow(const Correspondences& corrs,
                            const Intrinsics& intrinsics, const Pose& init,
                            const SolverConfig& cfg) {
  cfg.Validate();
  corrs.Validate(4);
  intrinsics.Validate();
  if (!init.AsVector().allFinite()) {
    throw InvalidInput("initial pose is not finite");
  }
  if (!AllInFront(corrs.pts3d, init)) {
    throw InvalidInput("initial pose places points behind the camera");
  }

  Pose pose = init;
  Linearization lin = Linearize(corrs, pose, intrinsics);
  PnPSolution sol;
  sol.objective_trace.push_back(lin.objective);

  double lambda = cfg.lambda_init;
  int iter = 0;
  bool stalled = false;
  // Exact Hessian model (when positive definite) after the first level step.
  bool exact_hessian = false;
  while (iter < cfg.max_iters &&
         lin.gradient.lpNorm<Eigen::Infinity>() > cfg.grad_tol && !stalled) {
    ++iter;
    const Matrix6d JtJ = lin.d_pose.transpose() * lin.d_pose;
    // Solving for the step along +y: r(y + d) ~ r - J d.
    const Vector6d Jtr = lin.d_pose.transpose() * lin.residuals;
    if (!JtJ.allFinite() || !Jtr.allFinite()) {
      throw NumericalFailure("non-finite normal equations");
    }
    const Vector6d diag =
        JtJ.diagonal().cwiseMax(1e-12 * std::max(JtJ.diagonal().maxCoeff(),
                                                 1e-300));
    Matrix6d model = JtJ;
    if (exact_hessian) {
      const Matrix6d H = ExactHalfHessian(corrs, pose, intrinsics);
      if (H.allFinite() && PositiveDefinite(Eigen::LDLT<Matrix6d>(H))) {
        model = H;
      }
    }

    bool accepted = false;
    while (!accepted) {
      Matrix6d A = model;
      A.diagonal() += lambda * diag;
      const Eigen::LDLT<Matrix6d> ldlt(A);
      const Vector6d step = ldlt.solve(Jtr);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        lambda *= cfg.lambda_up;
      } else {
        const Pose trial = Pose::FromVector(pose.AsVector() + step);
        // Steps that push a point behind the camera count as failures.
        if (AllInFront(corrs.pts3d, trial)) {
          Linearization next = Linearize(corrs, trial, intrinsics);
          const double predicted =
              2.0 * step.dot(Jtr) - step.dot(model * step);
          const double actual = lin.objective - next.objective;
          const bool decreased = actual > 0.0 && predicted > 0.0;
          // Level within rounding and a smaller gradient also counts.
          const double resolution = std::max(lin.resolution, next.resolution);
          const bool level = std::abs(actual) <= resolution;
          exact_hessian = exact_hessian || level;
          const bool level_but_closer =
              level && next.gradient.lpNorm<Eigen::Infinity>() <
                           lin.gradient.lpNorm<Eigen::Infinity>();
          if (decreased || level_but_closer) {
            const double rho = level ? 1.0 : actual / predicted;
            if (actual < 0.0) {
              sol.objective_resolution =
                  std::max(sol.objective_resolution, resolution);
            }
            pose = trial;
            lin = std::move(next);
            sol.objective_trace.push_back(lin.objective);
            lambda *= rho > 0.75 ? cfg.lambda_down
                                 : (rho < 0.25 ? cfg.lambda_up : 1.0);
            lambda = std::max(lambda, 1e-15);
            accepted = true;
            continue;
          }
          if (step.norm() < cfg.step_tol) {
            // No representable improvement remains.
            stalled = true;
            break;
          }
        }
        lambda *= cfg.lambda_up;
      }
      if (lambda > kMaxLambda) {
        stalled = true;
        break;
      }
    }
  }
  if (!std::isfinite(lin.objective)) {
    throw NumericalFailure("objective became non-finite");
  }

  sol.pose = pose.Canonical();
  sol.objective = lin.objective;
  sol.stationarity_norm = lin.gradient.lpNorm<Eigen::Infinity>();
  sol.iterations = iter;
  sol.converged = sol.stationarity_norm <= cfg.grad_tol;
  return sol;
}

PnPSolution SolvePnP(const Correspondences& corrs, const Intrinsics& intrinsics,
                     const Pose& init, const SolverConfig& cfg) {
  PnPSolution sol = SolvePnPNoThrow(corrs, intrinsics, init, cfg);
  if (!sol.converged) throw DidNotConverge(std::move(sol));
  return sol;
}

std::vector<int> InlierIndices(const Correspondences& corrs,
                               const Intrinsics& intrinsics, const Pose& pose,
                               double threshold) {
  std::vector<int> inliers;
  const Eigen::Matrix3d R = pose.Rotation();
  const double thr2 = threshold * threshold;
  for (int i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d cam = R * corrs.Point(i) + pose.trans;
    if (!(cam.z() > kDepthEpsilon)) continue;
    const Eigen::Vector2d uv(intrinsics.fx * cam.x() / cam.z() + intrinsics.cx,
                             intrinsics.fy * cam.y() / cam.z() + intrinsics.cy);
    if ((uv - corrs.ImagePoint(i)).squaredNorm() < thr2) inliers.push_back(i);
  }
  return inliers;
}

RansacResult Ransac(const Correspondences& corrs, const Intrinsics& intrinsics,
                    const RansacConfig& cfg) {
  cfg.Validate();
  corrs.Validate(cfg.sample_size);
  intrinsics.Validate();

  const int n = corrs.size();
  SolverConfig refine_cfg;
  refine_cfg.max_iters = kHypothesisRefineIters;

  bool found = false;
  RansacResult best;
  double best_error = std::numeric_limits<double>::infinity();
  auto score = [&](const Pose& pose) {
    std::vector<int> inliers =
        InlierIndices(corrs, intrinsics, pose, cfg.inlier_threshold);
    double err = 0.0;
    for (const int i : inliers) {
      const Eigen::Vector3d cam = pose.Rotation() * corrs.Point(i) + pose.trans;
      const Eigen::Vector2d uv(
          intrinsics.fx * cam.x() / cam.z() + intrinsics.cx,
          intrinsics.fy * cam.y() / cam.z() + intrinsics.cy);
      err += (uv - corrs.ImagePoint(i)).squaredNorm();
    }
    const bool better =
        !found || inliers.size() > best.inliers.size() ||
        (inliers.size() == best.inliers.size() && err < best_error);
    if (better) {
      found = true;
      best.pose = pose;
      best.inliers = std::move(inliers);
      best_error = err;
    }
  };

  std::vector<int> indices(n);
  for (int it = 0; it < cfg.iterations; ++it) {
    // One stream per iteration.
    std::mt19937_64 rng(StreamSeed(cfg.seed, static_cast<uint64_t>(it)));
    std::iota(indices.begin(), indices.end(), 0);
    for (int k = 0; k < cfg.sample_size; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(indices[k], indices[pick(rng)]);
    }
    const Correspondences sample = corrs.Subset(
        std::span<const int>(indices.data(), cfg.sample_size));

    std::vector<Pose> hypotheses;
    try {
      hypotheses = MinimalSolve(sample, intrinsics);
    } catch (const Error&) {
      continue;
    }
    for (const Pose& h : hypotheses) {
      Pose refined = h;
      try {
        refined = SolvePnPNoThrow(sample, intrinsics, h, refine_cfg).pose;
      } catch (const Error&) {
      }
      score(refined);
    }
    if (found && static_cast<int>(best.inliers.size()) == n) break;
  }
  if (!found || best.inliers.size() < 4) {
    throw NoHypothesisFound("no RANSAC sample produced a usable pose");
  }

  // Least-squares polish on the consensus set.
  try {
    const Correspondences inlier_set = corrs.Subset(best.inliers);
    const PnPSolution polished =
        SolvePnPNoThrow(inlier_set, intrinsics, best.pose);
    std::vector<int> inliers =
        InlierIndices(corrs, intrinsics, polished.pose, cfg.inlier_threshold);
    if (inliers.size() >= best.inliers.size()) {
      best.pose = polished.pose;
      best.inliers = std::move(inliers);
    }
  } catch (const Error&) {
  }
  return best;
}

}  // namespace bpnp
