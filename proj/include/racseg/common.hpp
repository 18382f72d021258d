#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace racseg {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IndexMat = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;
using Mask = std::vector<std::uint8_t>;

/// Base class for all recoverable failures raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid arguments, shapes, thresholds, or configuration values.
struct ArgumentError : Error {
    using Error::Error;
};

/// Malformed input text or binary stream; message carries location context.
struct ParseError : Error {
    using Error::Error;
};

/// Filesystem failures; message carries the offending path.
struct IoError : Error {
    using Error::Error;
};

/// Non-finite losses or gradients during optimization.
struct TrainingError : Error {
    using Error::Error;
};

/// Weak-annotation sampling failures (e.g. instance too small to click).
struct AnnotationError : Error {
    using Error::Error;
};

}  // namespace racseg
