#ifndef BPNP_GRADCHECK_H_
#define BPNP_GRADCHECK_H_

#include <array>
#include <cstdint>

#include "bpnp/geometry.h"
#include "bpnp/implicit_grad.h"
#include "bpnp/pnp_solver.h"

namespace bpnp {

// Central-difference steps per input.
struct GradcheckSteps {
  double image_points = 1e-4;  // pixels
  double scene_points = 1e-6;  // scene units
  double intrinsics = 1e-3;    // pixels
};

struct InputCheck {
  SolverInput input = SolverInput::kImagePoints;
  int dim = 0;
  // Per-column errors max_j |A_j - B_j|_inf / max |B|.
  double max_rel_error = 0.0;
  double median_rel_error = 0.0;
  double fd_seconds = 0.0;
  int fd_solver_calls = 0;
};

struct GradcheckResult {
  int num_points = 0;
  double noise = 0.0;
  uint64_t seed = 0;
  double objective = 0.0;
  double conditioning = 0.0;
  // Time for all three implicit Jacobians at the converged solution.
  double implicit_seconds = 0.0;
  std::array<InputCheck, 3> inputs;

  double MaxRelError() const;
  bool Passed(double threshold) const { return MaxRelError() <= threshold; }
};

const char* SolverInputName(SolverInput input);

// Implicit vs central-difference Jacobians at a solved instance. Throws what
// the solver or the implicit step throws (e.g. SingularStationaryHessian).
GradcheckResult CheckGradients(const Correspondences& corrs,
                               const Intrinsics& intrinsics,
                               const PnPSolution& solution,
                               const GradcheckSteps& steps = {});

// Generated single-view instance, RANSAC-initialized and solved, then checked.
GradcheckResult CheckGeneratedInstance(int num_points, double noise,
                                       uint64_t seed,
                                       const GradcheckSteps& steps = {});

}  // namespace bpnp

#endif  // BPNP_GRADCHECK_H_
