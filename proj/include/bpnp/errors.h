#ifndef BPNP_ERRORS_H_
#define BPNP_ERRORS_H_

#include <stdexcept>
#include <string>

namespace bpnp {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: wrong sizes, non-finite values, violated preconditions.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class NotARotation : public Error {
 public:
  using Error::Error;
};

class PointBehindCamera : public Error {
 public:
  PointBehindCamera(int index, double depth)
      : Error("point " + std::to_string(index) +
              " is behind the camera (depth " + std::to_string(depth) + ")"),
        index_(index),
        depth_(depth) {}

  int index() const { return index_; }
  double depth() const { return depth_; }

 private:
  int index_;
  double depth_;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class Degenerate : public Error {
 public:
  using Error::Error;
};

class NoHypothesisFound : public Error {
 public:
  using Error::Error;
};

// The Hessian of the objective w.r.t. the pose is too ill-conditioned for the
// implicit Jacobians to be trusted.
class SingularStationaryHessian : public Error {
 public:
  SingularStationaryHessian(double condition, const std::string& what)
      : Error(what), condition_(condition) {}

  double condition() const { return condition_; }

 private:
  double condition_;
};

class GenerationFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace bpnp

#endif  // BPNP_ERRORS_H_
