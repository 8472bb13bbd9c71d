#ifndef BPNP_PROJECTION_KERNEL_H_
#define BPNP_PROJECTION_KERNEL_H_

// Scalar-generic pinhole projection. Instantiated with double for plain
// evaluation and with (nested) ceres::Jet for exact first and second
// derivatives.

#include <cmath>

#include <ceres/jet.h>

namespace bpnp {
namespace kernel {

inline double ScalarPart(double x) { return x; }

template <typename T, int N>
double ScalarPart(const ceres::Jet<T, N>& x) {
  return ScalarPart(x.a);
}

// Lifts a constant into T, including nested jets.
template <typename T>
struct Lift {
  static T Of(double c) { return T(c); }
};

template <typename T, int N>
struct Lift<ceres::Jet<T, N>> {
  static ceres::Jet<T, N> Of(double c) {
    return ceres::Jet<T, N>(Lift<T>::Of(c));
  }
};

template <typename T>
T Const(double c) {
  return Lift<T>::Of(c);
}

// Below this squared angle the Rodrigues coefficients are evaluated by their
// Taylor series, which keeps every derivative order exact at zero rotation.
inline constexpr double kSeriesThreshold = 1e-4;

// out = R(rot) * p with R = I + a [w]x + b [w]x^2,
// a = sin(theta) / theta, b = (1 - cos(theta)) / theta^2.
template <typename T>
void RotatePoint(const T* rot, const T* p, T* out) {
  using std::sin;
  using std::sqrt;
  const T s = rot[0] * rot[0] + rot[1] * rot[1] + rot[2] * rot[2];
  T a;
  T b;
  if (ScalarPart(s) < kSeriesThreshold) {
    const T s2 = s * s;
    const T s3 = s2 * s;
    a = Const<T>(1.0) - s * Const<T>(1.0 / 6.0) +
        s2 * Const<T>(1.0 / 120.0) - s3 * Const<T>(1.0 / 5040.0);
    b = Const<T>(0.5) - s * Const<T>(1.0 / 24.0) +
        s2 * Const<T>(1.0 / 720.0) - s3 * Const<T>(1.0 / 40320.0);
  } else {
    const T theta = sqrt(s);
    const T half_sin = sin(theta * Const<T>(0.5));
    a = sin(theta) / theta;
    b = Const<T>(2.0) * half_sin * half_sin / s;
  }
  const T wxp[3] = {rot[1] * p[2] - rot[2] * p[1],
                    rot[2] * p[0] - rot[0] * p[2],
                    rot[0] * p[1] - rot[1] * p[0]};
  const T wxwxp[3] = {rot[1] * wxp[2] - rot[2] * wxp[1],
                      rot[2] * wxp[0] - rot[0] * wxp[2],
                      rot[0] * wxp[1] - rot[1] * wxp[0]};
  for (int k = 0; k < 3; ++k) {
    out[k] = p[k] + a * wxp[k] + b * wxwxp[k];
  }
}

// pose = [rot(3), trans(3)], intrinsics = [fx, fy, cx, cy].
// Writes the pixel coordinates to uv and returns the camera-frame depth.
template <typename T>
double ProjectPoint(const T* pose, const T* point, const T* intrinsics,
                    T* uv) {
  T cam[3];
  RotatePoint(pose, point, cam);
  cam[0] += pose[3];
  cam[1] += pose[4];
  cam[2] += pose[5];
  const T inv_z = Const<T>(1.0) / cam[2];
  uv[0] = intrinsics[0] * cam[0] * inv_z + intrinsics[2];
  uv[1] = intrinsics[1] * cam[1] * inv_z + intrinsics[3];
  return ScalarPart(cam[2]);
}

}  // namespace kernel
}  // namespace bpnp

#endif  // BPNP_PROJECTION_KERNEL_H_
