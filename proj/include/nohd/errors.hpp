#pragma once

#include <stdexcept>
#include <string>

namespace nohd {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or size mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid scalar argument (e.g. non-positive PT-inverse floor).
struct ParameterError : Error {
    using Error::Error;
};

/// Iterative routine failed to converge or produced non-finite values.
struct NumericalError : Error {
    using Error::Error;
};

/// Evaluation left the domain of a primitive or a parametrization
/// (log of a non-positive value, linear policy outside the open simplex).
struct DomainError : Error {
    DomainError(const std::string& what, std::size_t step = 0)
        : Error(what), step_index(step) {}
    std::size_t step_index;
};

/// Malformed configuration or game definition file.
struct ConfigError : Error {
    using Error::Error;
};

/// Requested a quantity the library does not define (e.g. the Nash
/// reference of an unknown game).
struct UnsupportedError : Error {
    using Error::Error;
};

}  // namespace nohd
