#ifndef BPNP_PNP_SOLVER_H_
#define BPNP_PNP_SOLVER_H_

#include <cstdint>
#include <limits>
#include <vector>

#include "bpnp/errors.h"
#include "bpnp/geometry.h"

namespace bpnp {

// Scale of the rounding bound on the computed objective (see
// PnPSolution::objective_resolution).
inline constexpr double kObjectiveRoundoff =
    4.0 * std::numeric_limits<double>::epsilon();

struct SolverConfig {
  int max_iters = 100;
  // Convergence when |d o / d y|_inf <= grad_tol.
  double grad_tol = 1e-8;
  double step_tol = 1e-10;
  double lambda_init = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;

  void Validate() const;
};

struct PnPSolution {
  Pose pose;
  double objective = 0.0;
  double stationarity_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  // Objective at the initial pose followed by the value after every
  // accepted step. Non-increasing: consecutive entries never rise by more
  // than objective_resolution.
  std::vector<double> objective_trace;
  // Once the remaining decrease is below the rounding of the objective,
  // steps that shrink the gradient are accepted when the computed objective
  // stays within its rounding bound. This is the largest bound used by a
  // step whose computed objective went up (0 if none did).
  double objective_resolution = 0.0;
};

// Thrown when LM exhausts its budget; carries the best pose found.
class DidNotConverge : public Error {
 public:
  explicit DidNotConverge(PnPSolution best)
      : Error("Levenberg-Marquardt did not reach the stationarity tolerance"),
        best_(std::move(best)) {}

  const PnPSolution& best() const { return best_; }

 private:
  PnPSolution best_;
};

struct RansacConfig {
  int iterations = 200;
  double inlier_threshold = 4.0;  // pixels
  int sample_size = 6;
  uint64_t seed = 0;

  void Validate() const;
};

// Minimizes sum_i |x_i - pi(z_i | y, K)|^2 over y by Levenberg-Marquardt
// starting at init. Every point must be in front of the camera at init.
// Throws InvalidInput, NumericalFailure or DidNotConverge.
PnPSolution SolvePnP(const Correspondences& corrs, const Intrinsics& intrinsics,
                     const Pose& init, const SolverConfig& cfg = {});

// As SolvePnP but returns the best-so-far solution with converged = false
// instead of throwing DidNotConverge.
PnPSolution SolvePnPNoThrow(const Correspondences& corrs,
                            const Intrinsics& intrinsics, const Pose& init,
                            const SolverConfig& cfg = {});

// EPnP on the sample (n >= 4, non-planar). Returns up to three candidate
// poses, one per null-space dimension approximation, with positive depth.
// Throws Degenerate for collinear 3D points or coincident 2D points.
std::vector<Pose> MinimalSolve(const Correspondences& sample,
                               const Intrinsics& intrinsics);

struct RansacResult {
  Pose pose;
  std::vector<int> inliers;
};

// Hypothesize-and-verify initial pose. Iteration k always draws the same
// sample for a fixed seed. Throws NoHypothesisFound.
RansacResult Ransac(const Correspondences& corrs, const Intrinsics& intrinsics,
                    const RansacConfig& cfg = {});

inline Pose RansacInit(const Correspondences& corrs,
                       const Intrinsics& intrinsics,
                       const RansacConfig& cfg = {}) {
  return Ransac(corrs, intrinsics, cfg).pose;
}

// Indices whose reprojection distance is below threshold. Points behind the
// camera are outliers.
std::vector<int> InlierIndices(const Correspondences& corrs,
                               const Intrinsics& intrinsics, const Pose& pose,
                               double threshold);

}  // namespace bpnp

#endif  // BPNP_PNP_SOLVER_H_
