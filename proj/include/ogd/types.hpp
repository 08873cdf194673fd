#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ogd {

/// N x 3 atom coordinates, one row per atom.
using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
/// N x d per-atom feature block (d may be zero).
using Features = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rotation = Eigen::Matrix3d;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class StepOutOfRange : public Error {
 public:
  StepOutOfRange(int t, int lo, int hi)
      : Error("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
              std::to_string(hi) + "]") {}
};

class NonFiniteInput : public Error {
 public:
  using Error::Error;
};

}  // namespace ogd
