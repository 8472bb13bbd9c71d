#include "bpnp/pnp_solver.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bpnp/implicit_grad.h"
#include "bpnp/io.h"
#include "test_util.h"

namespace bpnp {
namespace {

using testing::SingleView;

double RotationErrorDeg(const Pose& a, const Pose& b) {
  const Eigen::Matrix3d d = a.Rotation().transpose() * b.Rotation();
  return LogRotation(d).norm() * 180.0 / std::numbers::pi;
}

void ExpectMonotone(const PnPSolution& sol) {
  EXPECT_LE(sol.objective_resolution,
            1e-12 * std::max(1.0, sol.objective_trace.front()));
  for (size_t k = 1; k < sol.objective_trace.size(); ++k) {
    EXPECT_LE(sol.objective_trace[k],
              sol.objective_trace[k - 1] + sol.objective_resolution);
  }
}

TEST(SolvePnP, RecoversPoseFromPerturbedInit) {
  const SyntheticScene s = SingleView(8, 1);
  const Correspondences c = s.FrameCorrespondences(0);
  Vector6d init = s.poses[0].AsVector();
  init.array() += 0.05;
  const PnPSolution sol =
      SolvePnP(c, s.intrinsics, Pose::FromVector(init));
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.objective, 1e-10);
  EXPECT_LT((sol.pose.AsVector() - s.poses[0].AsVector()).norm(), 1e-6);
  ExpectMonotone(sol);
  EXPECT_NEAR(sol.objective, Objective(c, sol.pose, s.intrinsics), 1e-12);
}

TEST(SolvePnP, FixedPointAtMinimum) {
  const SyntheticScene s = SingleView(8, 2, 0.5);
  const Correspondences c = s.FrameCorrespondences(0);
  const PnPSolution first = SolvePnP(c, s.intrinsics, s.poses[0]);
  const SolverConfig cfg;
  const PnPSolution again = SolvePnP(c, s.intrinsics, first.pose, cfg);
  EXPECT_TRUE(again.converged);
  EXPECT_LE(again.iterations, 2);
  EXPECT_LT((again.pose.AsVector() - first.pose.AsVector()).norm(),
            cfg.step_tol);
}

TEST(SolvePnP, RejectsTooFewPoints) {
  const SyntheticScene s = SingleView(8, 3);
  const std::vector<int> three = {0, 1, 2};
  const Correspondences c = s.FrameCorrespondences(0).Subset(three);
  EXPECT_THROW(SolvePnP(c, s.intrinsics, s.poses[0]), InvalidInput);
}

TEST(SolvePnP, RejectsInitBehindCamera) {
  const SyntheticScene s = SingleView(8, 4);
  EXPECT_THROW(
      SolvePnP(s.FrameCorrespondences(0), s.intrinsics, Pose::Identity()),
      InvalidInput);
}

TEST(SolvePnP, BudgetExhaustionCarriesBestSolution) {
  const SyntheticScene s = SingleView(8, 5, 1.0);
  Vector6d init = s.poses[0].AsVector();
  init.head<3>().array() += 0.2;
  SolverConfig cfg;
  cfg.max_iters = 1;
  try {
    SolvePnP(s.FrameCorrespondences(0), s.intrinsics, Pose::FromVector(init),
             cfg);
    FAIL() << "expected DidNotConverge";
  } catch (const DidNotConverge& e) {
    EXPECT_FALSE(e.best().converged);
    EXPECT_EQ(e.best().iterations, 1);
    EXPECT_LT(e.best().objective, e.best().objective_trace.front());
  }
}

TEST(SolverConfig, Validation) {
  SolverConfig cfg;
  cfg.max_iters = 0;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = {};
  cfg.lambda_down = 1.5;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  cfg = {};
  cfg.grad_tol = 0.0;
  EXPECT_THROW(cfg.Validate(), InvalidInput);
  RansacConfig rc;
  rc.sample_size = 3;
  EXPECT_THROW(rc.Validate(), InvalidInput);
}

TEST(SolvePnP, StationarityHoldsAtNoisySolutions) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticScene s = SingleView(12, 100 + seed, 2.0);
    const Correspondences c = s.FrameCorrespondences(0);
    const PnPSolution sol = SolvePnP(c, s.intrinsics, s.poses[0]);
    ExpectMonotone(sol);
    EXPECT_LE(sol.stationarity_norm, 1e-8);
    EXPECT_LE(ConstraintF(c, sol.pose, s.intrinsics).lpNorm<Eigen::Infinity>(),
              1e-8);
  }
}

TEST(SolvePnP, ReachesStationarityWithLargeResiduals) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const SyntheticScene s = SingleView(30, 1200 + seed, 80.0);
    const Correspondences c = s.FrameCorrespondences(0);
    const PnPSolution sol = SolvePnP(c, s.intrinsics, s.poses[0]);
    ExpectMonotone(sol);
    EXPECT_GT(sol.objective, 1e4);
    EXPECT_LE(sol.stationarity_norm, 1e-8) << seed;
  }
}

// A frame met while learning structure: large residuals, where objective
// changes sink below rounding long before the gradient is small.
TEST(SolvePnP, ReachesStationarityOnRecordedLargeResidualFrame) {
  const Json j = ReadJson(BPNP_TEST_DATA "/large_residual_frame.json");
  const CorrespondenceFile f = CorrespondencesFromJson(
      Json{{"x2d", j["x2d"]}, {"z3d", j["z3d"]}, {"K", j["K"]}});
  Vector6d init;
  for (int k = 0; k < 6; ++k) init[k] = j["init_pose"][k].get<double>();
  const PnPSolution sol =
      SolvePnP(f.corrs, *f.intrinsics, Pose::FromVector(init));
  ExpectMonotone(sol);
  EXPECT_LE(sol.stationarity_norm, 1e-8);
}

TEST(SolvePnP, ExactDataRecoveryFromRansac) {
  const int sizes[] = {4, 8, 20, 100};
  for (int k = 0; k < 100; ++k) {
    const int n = sizes[k % 4];
    const SyntheticScene s = SingleView(n, 500 + k);
    const Correspondences c = s.FrameCorrespondences(0);
    RansacConfig rc;
    rc.sample_size = std::min(6, n);
    rc.seed = k;
    const Pose init = RansacInit(c, s.intrinsics, rc);
    const PnPSolution sol = SolvePnP(c, s.intrinsics, init);
    ExpectMonotone(sol);
    EXPECT_LE(sol.objective, 1e-8) << "instance " << k << " n=" << n;
  }
}

TEST(SolvePnP, NoiseRobustness) {
  std::vector<double> rot_err;
  std::vector<double> trans_err;
  for (int k = 0; k < 50; ++k) {
    const SyntheticScene s = SingleView(20, 900 + k, 1.0);
    const Correspondences c = s.FrameCorrespondences(0);
    RansacConfig rc;
    rc.seed = k;
    const PnPSolution sol =
        SolvePnP(c, s.intrinsics, RansacInit(c, s.intrinsics, rc));
    rot_err.push_back(RotationErrorDeg(sol.pose, s.poses[0]));
    // Camera-to-scene distance is |t| because the cloud is at the origin.
    trans_err.push_back((sol.pose.trans - s.poses[0].trans).norm() /
                        s.poses[0].trans.norm());
  }
  std::nth_element(rot_err.begin(), rot_err.begin() + 25, rot_err.end());
  std::nth_element(trans_err.begin(), trans_err.begin() + 25, trans_err.end());
  EXPECT_LT(rot_err[25], 2.0);
  EXPECT_LT(trans_err[25], 0.02);
}

TEST(MinimalSolve, RecoversKnownPose) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const SyntheticScene s = SingleView(6, 40 + seed);
    const std::vector<Pose> hyps =
        MinimalSolve(s.FrameCorrespondences(0), s.intrinsics);
    ASSERT_FALSE(hyps.empty());
    double best = 1e300;
    for (const Pose& h : hyps) {
      best = std::min(best, (h.AsVector() - s.poses[0].AsVector()).norm());
    }
    EXPECT_LT(best, 1e-6) << seed;
  }
}

TEST(MinimalSolve, FourPointSamplesAlwaysContainTruePose) {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    const SyntheticScene s = SingleView(4, 5000 + seed);
    const std::vector<Pose> hyps =
        MinimalSolve(s.FrameCorrespondences(0), s.intrinsics);
    ASSERT_FALSE(hyps.empty());
    EXPECT_LT(Objective(s.FrameCorrespondences(0), hyps[0], s.intrinsics),
              1e-6)
        << seed;
  }
}

TEST(MinimalSolve, CollinearPointsAreDegenerate) {
  Correspondences c;
  c.pts3d.resize(12);
  c.x2d.resize(8);
  for (int i = 0; i < 4; ++i) {
    c.pts3d.segment<3>(3 * i) = Eigen::Vector3d(0.1 * i, 0.2 * i, 5.0 + i);
    c.x2d.segment<2>(2 * i) = Eigen::Vector2d(10.0 * i, 3.0 * i * i);
  }
  EXPECT_THROW(MinimalSolve(c, {800, 700, 400, 300}), Degenerate);
}

TEST(MinimalSolve, DuplicateImagePointsAreDegenerate) {
  const SyntheticScene s = SingleView(6, 8);
  Correspondences c = s.FrameCorrespondences(0);
  c.x2d.segment<2>(2) = c.x2d.segment<2>(0);
  EXPECT_THROW(MinimalSolve(c, s.intrinsics), Degenerate);
}

TEST(Ransac, NoiseFreeAllInliers) {
  const SyntheticScene s = SingleView(30, 9);
  const Correspondences c = s.FrameCorrespondences(0);
  const RansacResult res = Ransac(c, s.intrinsics);
  EXPECT_EQ(static_cast<int>(res.inliers.size()), 30);
}

TEST(Ransac, SeparatesSyntheticOutliers) {
  for (int trial = 0; trial < 20; ++trial) {
    const SyntheticScene s = SingleView(40, 300 + trial);
    Correspondences c = s.FrameCorrespondences(0);
    std::mt19937_64 rng(trial);
    std::vector<int> order(40);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_real_distribution<double> u(0.0, 800.0);
    std::uniform_real_distribution<double> v(0.0, 600.0);
    std::vector<int> clean(order.begin() + 10, order.end());
    std::sort(clean.begin(), clean.end());
    for (int k = 0; k < 10; ++k) {
      c.x2d[2 * order[k]] = u(rng);
      c.x2d[2 * order[k] + 1] = v(rng);
    }
    RansacConfig rc;
    rc.inlier_threshold = 2.0;
    rc.seed = trial;
    const RansacResult res = Ransac(c, s.intrinsics, rc);
    EXPECT_EQ(res.inliers, clean) << "trial " << trial;
  }
}

TEST(Ransac, DeterministicForFixedSeed) {
  const SyntheticScene s = SingleView(25, 10, 1.0);
  RansacConfig rc;
  rc.seed = 1234;
  const Pose a = RansacInit(s.FrameCorrespondences(0), s.intrinsics, rc);
  const Pose b = RansacInit(s.FrameCorrespondences(0), s.intrinsics, rc);
  EXPECT_EQ(a.AsVector(), b.AsVector());
}

TEST(Ransac, NoHypothesisForDegenerateScene) {
  Correspondences c;
  c.pts3d.resize(30);
  c.x2d.resize(20);
  for (int i = 0; i < 10; ++i) {
    c.pts3d.segment<3>(3 * i) = Eigen::Vector3d(0.1 * i, 0.0, 5.0);
    c.x2d.segment<2>(2 * i) = Eigen::Vector2d(400.0 + 16.0 * i, 300.0);
  }
  EXPECT_THROW(Ransac(c, {800, 700, 400, 300}), NoHypothesisFound);
}

TEST(InlierIndices, BehindCameraIsOutlier) {
  Correspondences c(Eigen::Vector4d(400, 300, 400, 300),
                    (Eigen::VectorXd(6) << 0, 0, 2, 0, 0, -2).finished());
  EXPECT_EQ(InlierIndices(c, {800, 700, 400, 300}, Pose::Identity(), 1.0),
            std::vector<int>{0});
}

}  // namespace
}  // namespace bpnp
