#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mrfm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;

// Failure category. The CLI maps these onto exit codes 1 and 2.
enum class ErrorKind { validation, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) {
  return Error(ErrorKind::validation, what);
}

inline Error numerical_error(const std::string& what) {
  return Error(ErrorKind::numerical, what);
}

}  // namespace mrfm
