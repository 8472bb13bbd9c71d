#ifndef BPNP_SYNTHETIC_H_
#define BPNP_SYNTHETIC_H_

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bpnp/geometry.h"

namespace bpnp {

struct SceneSpec {
  int num_points = 8;
  int num_frames = 1;
  double noise_sigma = 0.0;    // pixels
  double visibility = 1.0;     // fraction of points observed per frame
  // Camera distance from the cloud center, in cloud diameters.
  double min_depth = 2.0;
  double max_depth = 10.0;
  double max_roll = 0.3;       // radians about the viewing axis
  Intrinsics intrinsics{800.0, 700.0, 400.0, 300.0};
  uint64_t seed = 0;
  int max_retries = 100;
  // Optional loaded cloud (3n). Replaces the random ball; it is centered at
  // the origin and scaled to unit diameter, and num_points is ignored.
  Eigen::VectorXd points;

  void Validate() const;
};

struct SyntheticScene {
  Eigen::VectorXd points;   // 3n, centered at the origin, diameter <= 1
  Intrinsics intrinsics;
  std::vector<Pose> poses;  // world-to-camera, one per frame
  std::vector<std::vector<int>> visible;
  // Observed pixels of the visible points, in visible order (noise applied).
  std::vector<Eigen::VectorXd> observations;

  int num_points() const { return static_cast<int>(points.size() / 3); }
  int num_frames() const { return static_cast<int>(poses.size()); }

  // 2D-3D pairs seen by one frame.
  Correspondences FrameCorrespondences(int frame) const;
};

// Deterministic in spec.seed. Throws GenerationFailed when the retry budget
// is exhausted (poses keeping every point in front of the camera, or
// visibility masks covering every point at least twice).
SyntheticScene GenerateSynthetic(const SceneSpec& spec);

// Largest pairwise distance.
double Diameter(const Eigen::VectorXd& pts3d);

struct SimilarityAlignment {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double rmse = 0.0;  // after alignment, in ground-truth units
};

// Umeyama similarity mapping estimate onto truth using the selected points
// (all points when mask is empty).
SimilarityAlignment AlignSimilarity(const Eigen::VectorXd& estimate,
                                    const Eigen::VectorXd& truth,
                                    const std::vector<int>& mask = {});

}  // namespace bpnp

#endif  // BPNP_SYNTHETIC_H_
