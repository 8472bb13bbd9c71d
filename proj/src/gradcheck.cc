#include "bpnp/gradcheck.h"

#include <algorithm>
#include <chrono>
#include <vector>

#include "bpnp/synthetic.h"

namespace bpnp {
namespace {

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

void CompareColumns(const Eigen::MatrixXd& actual,
                    const Eigen::MatrixXd& expected, InputCheck& out) {
  const double scale = std::max(expected.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<double> errs(actual.cols());
  for (Eigen::Index j = 0; j < actual.cols(); ++j) {
    errs[j] = (actual.col(j) - expected.col(j)).cwiseAbs().maxCoeff() / scale;
  }
  out.dim = static_cast<int>(actual.cols());
  out.max_rel_error = *std::max_element(errs.begin(), errs.end());
  std::sort(errs.begin(), errs.end());
  const size_t m = errs.size() / 2;
  out.median_rel_error =
      errs.size() % 2 ? errs[m] : 0.5 * (errs[m - 1] + errs[m]);
}

}  // namespace

double GradcheckResult::MaxRelError() const {
  double m = 0.0;
  for (const InputCheck& c : inputs) m = std::max(m, c.max_rel_error);
  return m;
}

const char* SolverInputName(SolverInput input) {
  switch (input) {
    case SolverInput::kImagePoints:
      return "x";
    case SolverInput::kScenePoints:
      return "z";
    case SolverInput::kIntrinsics:
      return "K";
  }
  return "?";
}

GradcheckResult CheckGradients(const Correspondences& corrs,
                               const Intrinsics& intrinsics,
                               const PnPSolution& solution,
                               const GradcheckSteps& steps) {
  GradcheckResult out;
  out.num_points = corrs.size();
  out.objective = solution.objective;

  const auto t0 = Clock::now();
  const ImplicitJacobians jac = PnPJacobians(corrs, intrinsics, solution);
  out.implicit_seconds = Seconds(t0, Clock::now());
  out.conditioning = jac.conditioning;

  const SolverInput which[3] = {SolverInput::kImagePoints,
                                SolverInput::kScenePoints,
                                SolverInput::kIntrinsics};
  const double step[3] = {steps.image_points, steps.scene_points,
                          steps.intrinsics};
  const Eigen::MatrixXd implicit[3] = {jac.dg_dx, jac.dg_dz, jac.dg_dK};
  for (int k = 0; k < 3; ++k) {
    InputCheck& c = out.inputs[k];
    c.input = which[k];
    const auto t1 = Clock::now();
    const FiniteDifferenceResult fd =
        FiniteDifferenceJacobian(corrs, intrinsics, solution, which[k], step[k]);
    c.fd_seconds = Seconds(t1, Clock::now());
    c.fd_solver_calls = fd.solver_calls;
    CompareColumns(implicit[k], fd.jacobian, c);
  }
  return out;
}

GradcheckResult CheckGeneratedInstance(int num_points, double noise,
                                       uint64_t seed,
                                       const GradcheckSteps& steps) {
  SceneSpec spec;
  spec.num_points = num_points;
  spec.noise_sigma = noise;
  spec.seed = seed;
  const SyntheticScene scene = GenerateSynthetic(spec);
  const Correspondences corrs = scene.FrameCorrespondences(0);
  RansacConfig rc;
  rc.seed = seed;
  rc.sample_size = std::min(rc.sample_size, corrs.size());
  const Pose init = RansacInit(corrs, scene.intrinsics, rc);
  const PnPSolution sol = SolvePnP(corrs, scene.intrinsics, init);
  GradcheckResult out = CheckGradients(corrs, scene.intrinsics, sol, steps);
  out.noise = noise;
  out.seed = seed;
  return out;
}

}  // namespace bpnp
