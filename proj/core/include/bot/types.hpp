#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bot {

// Row-major so that a token, a query or a key is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Every contract violation in the library surfaces as bot::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A kernel met an inf or NaN input.
class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

}  // namespace bot
