#ifndef BPNP_SRC_P3P_H_
#define BPNP_SRC_P3P_H_

#include <array>
#include <vector>

#include <Eigen/Core>

#include "bpnp/geometry.h"

namespace bpnp::internal {

// Grunert's three-point pose. bearings are unit rays in the camera frame.
// Returns up to four poses mapping world points onto the rays.
std::vector<Pose> P3P(const std::array<Eigen::Vector3d, 3>& world,
                      const std::array<Eigen::Vector3d, 3>& bearings);

}  // namespace bpnp::internal

#endif  // BPNP_SRC_P3P_H_
