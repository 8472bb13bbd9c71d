#ifndef BPNP_TASKS_H_
#define BPNP_TASKS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bpnp/errors.h"
#include "bpnp/geometry.h"
#include "bpnp/pnp_solver.h"
#include "bpnp/synthetic.h"

namespace bpnp {

// ---------------------------------------------------------------------------
// Parameter providers h(theta).

enum class ProviderKind { kDirect, kMlp, kScaledSigmoid };

struct MlpSpec {
  std::vector<int> hidden = {16, 16};
  // Output = offset + output_scale * (last affine layer).
  double output_scale = 1.0;
  // Standard deviation of the initial last-layer weights, relative to the
  // Xavier scale. Small values start the output close to offset.
  double last_layer_gain = 0.1;
};

class ParamProvider {
 public:
  // h(theta) = theta.
  static ParamProvider Direct(Eigen::VectorXd theta);
  // Tanh MLP applied to the constant input 1.
  static ParamProvider Mlp(Eigen::VectorXd offset, const MlpSpec& spec,
                           uint64_t seed);
  // h(theta) = scale * sigmoid(theta), elementwise.
  static ParamProvider ScaledSigmoid(Eigen::VectorXd theta,
                                     double scale = 1000.0);

  ProviderKind kind() const { return kind_; }
  int output_dim() const { return output_dim_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  void set_theta(const Eigen::VectorXd& theta);

  Eigen::VectorXd Forward() const;
  // (d h / d theta)^T grad_out.
  Eigen::VectorXd Backward(const Eigen::VectorXd& grad_out) const;

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    Eigen::Index offset = 0;  // first weight in theta (row-major W, then b)
  };

  ParamProvider() = default;

  ProviderKind kind_ = ProviderKind::kDirect;
  int output_dim_ = 0;
  Eigen::VectorXd theta_;
  double scale_ = 1.0;
  Eigen::VectorXd offset_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Training configuration.

enum class OptimizerKind { kGradientDescent, kAdam };

struct TrainConfig {
  double step_size = 1e-3;   // alpha
  double lambda_reg = 1.0;   // lambda, pose estimation only
  int max_epochs = 2000;
  // Stop once the loss is at or below this value.
  double loss_tol = 1e-10;
  // Or once the relative loss change over stall_window epochs is below
  // stall_tol.
  double stall_tol = 1e-9;
  int stall_window = 10;
  uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kGradientDescent;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // SfM structure snapshot stride in epochs; 0 keeps only the final one.
  int snapshot_stride = 0;
  // Training drives PnP into large-residual regimes (e.g. lambda = 0) where
  // LM converges linearly, so the per-solve budget is larger than the
  // solver default.
  SolverConfig solver{.max_iters = 1000};
  RansacConfig ransac;

  void Validate() const;
};

enum class StopReason { kLossTolerance, kStalled, kMaxEpochs, kFailure };

const char* StopReasonName(StopReason reason);

// Applies theta <- theta - step(grad) with persistent optimizer state.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  void Step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

 private:
  TrainConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

// Warm-start pose when it keeps every point in front of the camera,
// otherwise a RANSAC pose, otherwise a fronto-parallel pose in front of the
// points.
Pose InitialPose(const Correspondences& corrs, const Intrinsics& intrinsics,
                 const Pose& warm, const RansacConfig& ransac);

// ---------------------------------------------------------------------------
// Pose estimation.

struct PoseLoss {
  double loss = 0.0;
  double pose_term = 0.0;  // |pi(z|y) - pi(z|y*)|^2
  double reg_term = 0.0;   // R(x, y) = |x - pi(z|y)|^2
  Eigen::VectorXd grad_x;  // d l / d x (direct path)
  Vector6d grad_y = Vector6d::Zero();
};

PoseLoss ComputePoseLoss(const Eigen::VectorXd& x2d, const Pose& pose,
                         const Eigen::VectorXd& pts3d,
                         const Intrinsics& intrinsics, const Pose& target_pose,
                         double lambda_reg);

struct PoseTask {
  Eigen::VectorXd pts3d;
  Intrinsics intrinsics;
  Pose target_pose;

  int num_points() const { return static_cast<int>(pts3d.size() / 3); }
  Eigen::VectorXd TargetKeypoints() const;
};

struct PoseEvaluation {
  PoseLoss loss;
  Pose pose;
  Eigen::VectorXd x2d;
  // d loss / d x through both chain paths.
  Eigen::VectorXd grad_output;
  double conditioning = 0.0;
};

// One epoch of the pose task at keypoints x2d: PnP warm-started from warm,
// loss and its gradient w.r.t. x2d.
PoseEvaluation EvaluatePoseTask(const PoseTask& task,
                                const Eigen::VectorXd& x2d, const Pose& warm,
                                const TrainConfig& cfg);

struct PoseEpoch {
  int epoch = 0;
  double loss = 0.0;
  double pose_term = 0.0;
  double reg_term = 0.0;
  Pose pose;
  Eigen::VectorXd x2d;
};

struct PoseRun {
  std::vector<PoseEpoch> trace;
  StopReason stop = StopReason::kMaxEpochs;
  std::optional<std::string> failure;
};

PoseRun RunPoseEstimation(ParamProvider& provider, const PoseTask& task,
                          const TrainConfig& cfg);

// Keypoint RMS distance per coordinate pair: sqrt(|a - b|^2 / n).
double KeypointRms(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// ---------------------------------------------------------------------------
// Calibrated SfM.

struct SfmProblem {
  int num_points = 0;
  Intrinsics intrinsics;
  // observations[j] holds the pixels of the points visible[j], in order.
  std::vector<Eigen::VectorXd> observations;
  std::vector<std::vector<int>> visible;

  int num_frames() const { return static_cast<int>(visible.size()); }
  // Throws InvalidInput on malformed maps or frames with fewer than
  // min_points observations. Returns the points seen by fewer than two
  // frames (their depth is unconstrained).
  std::vector<int> Validate(int min_points = 6) const;
  Correspondences Frame(int frame, const Eigen::VectorXd& pts3d) const;
};

// Failure attributed to one SfM frame.
class FrameError : public Error {
 public:
  FrameError(int frame, const std::string& what)
      : Error("frame " + std::to_string(frame) + ": " + what), frame_(frame) {}
  int frame() const { return frame_; }

 private:
  int frame_;
};

struct SfmLoss {
  double loss = 0.0;
  std::vector<Eigen::VectorXd> grad_z;  // per frame, 3 * |visible[j]|
  std::vector<Vector6d> grad_y;
};

SfmLoss ComputeSfmLoss(const SfmProblem& problem, const Eigen::VectorXd& pts3d,
                       const std::vector<Pose>& poses);

struct SfmEvaluation {
  double loss = 0.0;
  std::vector<Pose> poses;
  Eigen::VectorXd grad_output;  // d loss / d z, 3n
};

SfmEvaluation EvaluateSfmTask(const SfmProblem& problem,
                              const Eigen::VectorXd& pts3d,
                              const std::vector<Pose>& warm,
                              const TrainConfig& cfg);

struct SfmEpoch {
  int epoch = 0;
  double loss = 0.0;
  std::vector<Pose> poses;
};

struct SfmRun {
  std::vector<SfmEpoch> trace;
  std::vector<std::pair<int, Eigen::VectorXd>> snapshots;
  Eigen::VectorXd structure;
  StopReason stop = StopReason::kMaxEpochs;
  std::optional<std::string> failure;
  std::vector<int> underobserved;
};

SfmRun RunSfm(ParamProvider& provider, const SfmProblem& problem,
              const TrainConfig& cfg);

// Structure RMSE after similarity alignment, relative to the diameter of
// the ground truth, over points seen by at least two frames.
double AlignedRelativeRmse(const SfmProblem& problem,
                           const Eigen::VectorXd& estimate,
                           const Eigen::VectorXd& truth);

// ---------------------------------------------------------------------------
// Calibration.

struct CalibLoss {
  double loss = 0.0;
  Eigen::Vector4d grad_K = Eigen::Vector4d::Zero();
  Vector6d grad_y = Vector6d::Zero();
};

CalibLoss ComputeCalibLoss(const Correspondences& corrs, const Pose& pose,
                           const Intrinsics& intrinsics);

struct CalibEvaluation {
  double loss = 0.0;
  Pose pose;
  Eigen::Vector4d grad_output = Eigen::Vector4d::Zero();  // d loss / d K
};

CalibEvaluation EvaluateCalibTask(const Correspondences& corrs,
                                  const Intrinsics& intrinsics,
                                  const Pose& warm, const TrainConfig& cfg);

struct CalibEpoch {
  int epoch = 0;
  double loss = 0.0;
  Intrinsics intrinsics;
};

struct CalibRun {
  std::vector<CalibEpoch> trace;
  Pose pose;
  StopReason stop = StopReason::kMaxEpochs;
  std::optional<std::string> failure;
};

CalibRun RunCalibration(ParamProvider& provider, const Correspondences& corrs,
                        const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Reference scenes.

// The single-view scene behind the pose and calibration experiments:
// n points, K = (800, 700, 400, 300), noise free.
PoseTask MakePoseTask(int num_points, uint64_t seed);

// Direct-provider start: target keypoints plus uniform noise in
// [-amplitude, amplitude] pixels.
Eigen::VectorXd PerturbedKeypoints(const PoseTask& task, double amplitude,
                                   uint64_t seed);

struct SfmScene {
  SfmProblem problem;
  Eigen::VectorXd truth;
  std::vector<Pose> true_poses;
};

SfmScene MakeSfmScene(const SceneSpec& spec);
SfmScene MakeSfmScene(int num_points, int num_frames, double visibility,
                      double noise_sigma, uint64_t seed);

// Random Gaussian cloud at the scale of the unit-diameter scene.
Eigen::VectorXd RandomStructure(int num_points, uint64_t seed);

// theta with every component drawn from N(0, 1).
Eigen::VectorXd RandomCalibrationTheta(uint64_t seed);

}  // namespace bpnp

#endif  // BPNP_TASKS_H_
