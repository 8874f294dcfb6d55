#pragma once

#include <stdexcept>
#include <string>

namespace cspdc {

// Base class for all library errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (unknown keys, out-of-range values, missing files).
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data (truncated streams, unsorted tags,
// empty count tables, missing settings).
struct DataError : Error {
    using Error::Error;
};

// Mismatched operand dimensions in matrix/state arithmetic.
struct DimensionError : Error {
    using Error::Error;
};

// A density matrix failed a physicality check.  `magnitude` quantifies the
// violation (hermiticity defect, most negative eigenvalue, |trace-1|).
struct PhysicalityError : Error {
    enum class Kind { not_hermitian, negative_eigenvalue, trace_not_one };

    PhysicalityError(Kind k, double magnitude, const std::string& what)
        : Error(what), kind(k), magnitude(magnitude) {}

    Kind kind;
    double magnitude;
};

// Noise calibration targets not representable by the model family.
struct UnreachableTargetError : Error {
    using Error::Error;
};

}  // namespace cspdc
