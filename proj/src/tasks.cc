#include "bpnp/tasks.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "bpnp/implicit_grad.h"
#include "bpnp/rng.h"
#include "bpnp/synthetic.h"
#include "parallel.h"

namespace bpnp {
namespace {

// Shared epoch loop bookkeeping.
bool ShouldStop(const std::vector<double>& losses, const TrainConfig& cfg,
                StopReason& reason) {
  const double last = losses.back();
  if (last <= cfg.loss_tol) {
    reason = StopReason::kLossTolerance;
    return true;
  }
  const size_t w = static_cast<size_t>(cfg.stall_window);
  if (losses.size() > w) {
    const double before = losses[losses.size() - 1 - w];
    if (std::abs(before - last) <= cfg.stall_tol * std::max(before, 1e-300)) {
      reason = StopReason::kStalled;
      return true;
    }
  }
  return false;
}

std::string EpochFailure(int epoch, const std::exception& e) {
  return "epoch " + std::to_string(epoch) + ": " + e.what();
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(step_size > 0.0)) throw InvalidInput("step_size must be positive");
  if (!(lambda_reg >= 0.0)) throw InvalidInput("lambda must be >= 0");
  if (max_epochs < 1) throw InvalidInput("max_epochs must be >= 1");
  if (!(loss_tol >= 0.0) || !(stall_tol >= 0.0)) {
    throw InvalidInput("loss tolerances must be >= 0");
  }
  if (stall_window < 1) throw InvalidInput("stall_window must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw InvalidInput("invalid Adam parameters");
  }
  if (snapshot_stride < 0) throw InvalidInput("snapshot_stride must be >= 0");
  solver.Validate();
  ransac.Validate();
}

const char* StopReasonName(StopReason reason) {
  switch (reason) {
    case StopReason::kLossTolerance:
      return "loss_tolerance";
    case StopReason::kStalled:
      return "stalled";
    case StopReason::kMaxEpochs:
      return "max_epochs";
    case StopReason::kFailure:
      return "failure";
  }
  return "unknown";
}

void Optimizer::Step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (cfg_.optimizer == OptimizerKind::kGradientDescent) {
    theta -= cfg_.step_size * grad;
    return;
  }
  if (m_.size() != theta.size()) {
    m_.setZero(theta.size());
    v_.setZero(theta.size());
    t_ = 0;
  }
  ++t_;
  m_ = cfg_.adam_beta1 * m_ + (1.0 - cfg_.adam_beta1) * grad;
  v_ = cfg_.adam_beta2 * v_ +
       (1.0 - cfg_.adam_beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
  theta.array() -= cfg_.step_size * (m_.array() / c1) /
                   ((v_.array() / c2).sqrt() + cfg_.adam_eps);
}

Pose InitialPose(const Correspondences& corrs, const Intrinsics& intrinsics,
                 const Pose& warm, const RansacConfig& ransac) {
  if (AllInFront(corrs.pts3d, warm)) return warm;
  RansacConfig rc = ransac;
  rc.sample_size = std::min(rc.sample_size, corrs.size());
  try {
    const Pose pose = RansacInit(corrs, intrinsics, rc);
    if (AllInFront(corrs.pts3d, pose)) return pose;
  } catch (const Error&) {
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (int i = 0; i < corrs.size(); ++i) centroid += corrs.Point(i);
  centroid /= std::max(corrs.size(), 1);
  double radius = 0.0;
  for (int i = 0; i < corrs.size(); ++i) {
    radius = std::max(radius, (corrs.Point(i) - centroid).norm());
  }
  Pose pose;
  pose.trans = Eigen::Vector3d(0.0, 0.0, std::max(3.0 * radius, 1.0)) -
               centroid;
  return pose;
}

// ---------------------------------------------------------------------------

PoseLoss ComputePoseLoss(const Eigen::VectorXd& x2d, const Pose& pose,
                         const Eigen::VectorXd& pts3d,
                         const Intrinsics& intrinsics, const Pose& target_pose,
                         double lambda_reg) {
  if (x2d.size() * 3 != pts3d.size() * 2) {
    throw InvalidInput("x2d and pts3d sizes disagree");
  }
  const ProjectionJet pj = ProjectWithJets(pts3d, pose, intrinsics);
  const Eigen::VectorXd d = pj.pi - Project(pts3d, target_pose, intrinsics);
  const Eigen::VectorXd r = x2d - pj.pi;
  PoseLoss out;
  out.pose_term = d.squaredNorm();
  out.reg_term = r.squaredNorm();
  out.loss = out.pose_term + lambda_reg * out.reg_term;
  out.grad_y = 2.0 * pj.d_pose.transpose() * (d - lambda_reg * r);
  out.grad_x = 2.0 * lambda_reg * r;
  return out;
}

Eigen::VectorXd PoseTask::TargetKeypoints() const {
  return Project(pts3d, target_pose, intrinsics);
}

PoseEvaluation EvaluatePoseTask(const PoseTask& task,
                                const Eigen::VectorXd& x2d, const Pose& warm,
                                const TrainConfig& cfg) {
  const Correspondences corrs(x2d, task.pts3d);
  const Pose init = InitialPose(corrs, task.intrinsics, warm, cfg.ransac);
  const PnPSolution sol = SolvePnP(corrs, task.intrinsics, init, cfg.solver);
  PoseEvaluation out;
  out.loss = ComputePoseLoss(x2d, sol.pose, task.pts3d, task.intrinsics,
                             task.target_pose, cfg.lambda_reg);
  const ImplicitJacobians jac = PnPJacobians(corrs, task.intrinsics, sol);
  out.grad_output = out.loss.grad_x + jac.dg_dx.transpose() * out.loss.grad_y;
  out.pose = sol.pose;
  out.x2d = x2d;
  out.conditioning = jac.conditioning;
  return out;
}

PoseRun RunPoseEstimation(ParamProvider& provider, const PoseTask& task,
                          const TrainConfig& cfg) {
  cfg.Validate();
  if (provider.output_dim() != 2 * task.num_points()) {
    throw InvalidInput("provider output must have 2n entries");
  }
  PoseRun run;
  Optimizer opt(cfg);
  Pose warm = Pose::Identity();
  std::vector<double> losses;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    PoseEvaluation eval;
    try {
      eval = EvaluatePoseTask(task, provider.Forward(), warm, cfg);
    } catch (const Error& e) {
      run.stop = StopReason::kFailure;
      run.failure = EpochFailure(epoch, e);
      return run;
    }
    run.trace.push_back({epoch, eval.loss.loss, eval.loss.pose_term,
                         eval.loss.reg_term, eval.pose, eval.x2d});
    losses.push_back(eval.loss.loss);
    if (ShouldStop(losses, cfg, run.stop)) return run;
    Eigen::VectorXd theta = provider.theta();
    opt.Step(theta, provider.Backward(eval.grad_output));
    provider.set_theta(theta);
    warm = eval.pose;
  }
  run.stop = StopReason::kMaxEpochs;
  return run;
}

double KeypointRms(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() % 2 != 0 || a.size() == 0) {
    throw InvalidInput("keypoint vectors must have equal even length");
  }
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size() / 2));
}

// ---------------------------------------------------------------------------

std::vector<int> SfmProblem::Validate(int min_points) const {
  if (num_points < 1) throw InvalidInput("SfM problem has no points");
  if (visible.empty()) throw InvalidInput("SfM problem has no frames");
  if (observations.size() != visible.size()) {
    throw InvalidInput("one observation list per frame is required");
  }
  intrinsics.Validate();
  std::vector<int> seen(num_points, 0);
  for (int j = 0; j < num_frames(); ++j) {
    const auto& vis = visible[j];
    if (static_cast<int>(vis.size()) < min_points) {
      throw InvalidInput("frame " + std::to_string(j) + " sees fewer than " +
                         std::to_string(min_points) + " points");
    }
    if (observations[j].size() != 2 * static_cast<Eigen::Index>(vis.size()) ||
        !observations[j].allFinite()) {
      throw InvalidInput("frame " + std::to_string(j) +
                         " observations do not match its index map");
    }
    std::vector<char> used(num_points, 0);
    for (const int i : vis) {
      if (i < 0 || i >= num_points) {
        throw InvalidInput("frame " + std::to_string(j) +
                           " references a point out of range");
      }
      if (used[i]) {
        throw InvalidInput("frame " + std::to_string(j) +
                           " index map is not injective");
      }
      used[i] = 1;
      ++seen[i];
    }
  }
  std::vector<int> under;
  for (int i = 0; i < num_points; ++i) {
    if (seen[i] < 2) under.push_back(i);
  }
  return under;
}

Correspondences SfmProblem::Frame(int frame,
                                  const Eigen::VectorXd& pts3d) const {
  const auto& vis = visible.at(frame);
  Correspondences c;
  c.x2d = observations.at(frame);
  c.pts3d.resize(3 * static_cast<Eigen::Index>(vis.size()));
  for (size_t k = 0; k < vis.size(); ++k) {
    c.pts3d.segment<3>(3 * k) = pts3d.segment<3>(3 * vis[k]);
  }
  return c;
}

SfmLoss ComputeSfmLoss(const SfmProblem& problem, const Eigen::VectorXd& pts3d,
                       const std::vector<Pose>& poses) {
  if (pts3d.size() != 3 * problem.num_points) {
    throw InvalidInput("structure must have 3n entries");
  }
  if (static_cast<int>(poses.size()) != problem.num_frames()) {
    throw InvalidInput("one pose per frame is required");
  }
  SfmLoss out;
  for (int j = 0; j < problem.num_frames(); ++j) {
    const Correspondences c = problem.Frame(j, pts3d);
    ProjectionJet pj;
    try {
      pj = ProjectWithJets(c.pts3d, poses[j], problem.intrinsics);
    } catch (const Error& e) {
      throw FrameError(j, e.what());
    }
    const Eigen::VectorXd r = c.x2d - pj.pi;
    out.loss += r.squaredNorm();
    Eigen::VectorXd gz(c.pts3d.size());
    for (int i = 0; i < c.size(); ++i) {
      gz.segment<3>(3 * i) =
          -2.0 * pj.d_points[i].transpose() * r.segment<2>(2 * i);
    }
    out.grad_z.push_back(std::move(gz));
    out.grad_y.push_back(-2.0 * pj.d_pose.transpose() * r);
  }
  return out;
}

SfmEvaluation EvaluateSfmTask(const SfmProblem& problem,
                              const Eigen::VectorXd& pts3d,
                              const std::vector<Pose>& warm,
                              const TrainConfig& cfg) {
  const int frames = problem.num_frames();
  if (static_cast<int>(warm.size()) != frames) {
    throw InvalidInput("one warm-start pose per frame is required");
  }
  std::vector<Pose> poses(frames);
  std::vector<ImplicitJacobians> jacs(frames);
  internal::ParallelFor(frames, [&](int j) {
    try {
      const Correspondences c = problem.Frame(j, pts3d);
      RansacConfig rc = cfg.ransac;
      rc.seed = StreamSeed(cfg.ransac.seed, static_cast<uint64_t>(j));
      const Pose init = InitialPose(c, problem.intrinsics, warm[j], rc);
      const PnPSolution sol = SolvePnP(c, problem.intrinsics, init, cfg.solver);
      poses[j] = sol.pose;
      jacs[j] = PnPJacobians(c, problem.intrinsics, sol);
    } catch (const FrameError&) {
      throw;
    } catch (const Error& e) {
      throw FrameError(j, e.what());
    }
  });

  const SfmLoss loss = ComputeSfmLoss(problem, pts3d, poses);
  SfmEvaluation out;
  out.loss = loss.loss;
  out.poses = std::move(poses);
  out.grad_output.setZero(pts3d.size());
  for (int j = 0; j < frames; ++j) {
    const Eigen::VectorXd g =
        loss.grad_z[j] + jacs[j].dg_dz.transpose() * loss.grad_y[j];
    const auto& vis = problem.visible[j];
    for (size_t k = 0; k < vis.size(); ++k) {
      out.grad_output.segment<3>(3 * vis[k]) += g.segment<3>(3 * k);
    }
  }
  return out;
}

SfmRun RunSfm(ParamProvider& provider, const SfmProblem& problem,
              const TrainConfig& cfg) {
  cfg.Validate();
  SfmRun run;
  run.underobserved = problem.Validate();
  if (provider.output_dim() != 3 * problem.num_points) {
    throw InvalidInput("provider output must have 3n entries");
  }
  Optimizer opt(cfg);
  std::vector<Pose> warm(problem.num_frames(), Pose::Identity());
  std::vector<double> losses;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const Eigen::VectorXd z = provider.Forward();
    run.structure = z;
    if (cfg.snapshot_stride > 0 && epoch % cfg.snapshot_stride == 0) {
      run.snapshots.emplace_back(epoch, z);
    }
    SfmEvaluation eval;
    try {
      eval = EvaluateSfmTask(problem, z, warm, cfg);
    } catch (const Error& e) {
      run.stop = StopReason::kFailure;
      run.failure = EpochFailure(epoch, e);
      return run;
    }
    run.trace.push_back({epoch, eval.loss, eval.poses});
    losses.push_back(eval.loss);
    if (ShouldStop(losses, cfg, run.stop)) return run;
    Eigen::VectorXd theta = provider.theta();
    opt.Step(theta, provider.Backward(eval.grad_output));
    provider.set_theta(theta);
    warm = std::move(eval.poses);
  }
  run.stop = StopReason::kMaxEpochs;
  return run;
}

double AlignedRelativeRmse(const SfmProblem& problem,
                           const Eigen::VectorXd& estimate,
                           const Eigen::VectorXd& truth) {
  const std::vector<int> under = problem.Validate(1);
  std::vector<int> mask;
  for (int i = 0, u = 0; i < problem.num_points; ++i) {
    if (u < static_cast<int>(under.size()) && under[u] == i) {
      ++u;
      continue;
    }
    mask.push_back(i);
  }
  if (mask.empty()) throw InvalidInput("no point is seen by two frames");
  const double diameter = Diameter(truth);
  if (!(diameter > 0.0)) throw InvalidInput("ground truth has zero extent");
  return AlignSimilarity(estimate, truth, mask).rmse / diameter;
}

// ---------------------------------------------------------------------------

CalibLoss ComputeCalibLoss(const Correspondences& corrs, const Pose& pose,
                           const Intrinsics& intrinsics) {
  corrs.Validate(1);
  const ProjectionJet pj = ProjectWithJets(corrs.pts3d, pose, intrinsics);
  const Eigen::VectorXd r = corrs.x2d - pj.pi;
  CalibLoss out;
  out.loss = r.squaredNorm();
  out.grad_K = -2.0 * pj.d_intrinsics.transpose() * r;
  out.grad_y = -2.0 * pj.d_pose.transpose() * r;
  return out;
}

CalibEvaluation EvaluateCalibTask(const Correspondences& corrs,
                                  const Intrinsics& intrinsics,
                                  const Pose& warm, const TrainConfig& cfg) {
  const Pose init = InitialPose(corrs, intrinsics, warm, cfg.ransac);
  const PnPSolution sol = SolvePnP(corrs, intrinsics, init, cfg.solver);
  const CalibLoss loss = ComputeCalibLoss(corrs, sol.pose, intrinsics);
  const ImplicitJacobians jac = PnPJacobians(corrs, intrinsics, sol);
  CalibEvaluation out;
  out.loss = loss.loss;
  out.pose = sol.pose;
  out.grad_output = loss.grad_K + jac.dg_dK.transpose() * loss.grad_y;
  return out;
}

CalibRun RunCalibration(ParamProvider& provider, const Correspondences& corrs,
                        const TrainConfig& cfg) {
  cfg.Validate();
  corrs.Validate(4);
  if (provider.output_dim() != kIntrinsicsDim) {
    throw InvalidInput("provider output must have 4 entries");
  }
  CalibRun run;
  Optimizer opt(cfg);
  Pose warm = Pose::Identity();
  std::vector<double> losses;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    CalibEvaluation eval;
    Intrinsics K;
    try {
      K = Intrinsics::FromVector(provider.Forward());
      K.Validate();
      eval = EvaluateCalibTask(corrs, K, warm, cfg);
    } catch (const Error& e) {
      run.stop = StopReason::kFailure;
      run.failure = EpochFailure(epoch, e);
      return run;
    }
    run.trace.push_back({epoch, eval.loss, K});
    run.pose = eval.pose;
    losses.push_back(eval.loss);
    if (ShouldStop(losses, cfg, run.stop)) return run;
    Eigen::VectorXd theta = provider.theta();
    opt.Step(theta, provider.Backward(eval.grad_output));
    provider.set_theta(theta);
    warm = eval.pose;
  }
  run.stop = StopReason::kMaxEpochs;
  return run;
}

// ---------------------------------------------------------------------------

PoseTask MakePoseTask(int num_points, uint64_t seed) {
  SceneSpec spec;
  spec.num_points = num_points;
  spec.seed = seed;
  const SyntheticScene scene = GenerateSynthetic(spec);
  return {scene.points, scene.intrinsics, scene.poses[0]};
}

Eigen::VectorXd PerturbedKeypoints(const PoseTask& task, double amplitude,
                                   uint64_t seed) {
  std::mt19937_64 rng = MakeRng(seed, "init");
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Eigen::VectorXd x = task.TargetKeypoints();
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] += u(rng);
  return x;
}

SfmScene MakeSfmScene(int num_points, int num_frames, double visibility,
                      double noise_sigma, uint64_t seed) {
  SceneSpec spec;
  spec.num_points = num_points;
  spec.num_frames = num_frames;
  spec.visibility = visibility;
  spec.noise_sigma = noise_sigma;
  spec.seed = seed;
  return MakeSfmScene(spec);
}

SfmScene MakeSfmScene(const SceneSpec& spec) {
  const SyntheticScene s = GenerateSynthetic(spec);
  SfmScene out;
  out.problem.num_points = s.num_points();
  out.problem.intrinsics = s.intrinsics;
  out.problem.observations = s.observations;
  out.problem.visible = s.visible;
  out.truth = s.points;
  out.true_poses = s.poses;
  return out;
}

Eigen::VectorXd RandomStructure(int num_points, uint64_t seed) {
  if (num_points < 1) throw InvalidInput("structure needs at least one point");
  std::mt19937_64 rng = MakeRng(seed, "init");
  // Per-axis spread of points uniform in a unit-diameter ball.
  std::normal_distribution<double> normal(0.0, 0.5 / std::sqrt(5.0));
  Eigen::VectorXd z(3 * num_points);
  for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
  return z;
}

Eigen::VectorXd RandomCalibrationTheta(uint64_t seed) {
  std::mt19937_64 rng = MakeRng(seed, "init");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd theta(kIntrinsicsDim);
  for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = normal(rng);
  return theta;
}

}  // namespace bpnp
