#pragma once

#include <stdexcept>
#include <string>

namespace pvmle {

// Malformed or inconsistent input data (CSV contents, column specs,
// structural violations such as validated > reported).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Threshold calibration cannot reach the requested error rates.
struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure that cannot be expressed as a flagged result.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pvmle
