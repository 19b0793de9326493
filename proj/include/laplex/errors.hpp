#pragma once

#include <stdexcept>
#include <string>

namespace laplex {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EmptyInput : Error {
    using Error::Error;
};
struct NonFinite : Error {
    using Error::Error;
};
struct DimensionMismatch : Error {
    using Error::Error;
};
struct PhasePresent : Error {
    using Error::Error;
};
struct PhaseAbsent : Error {
    using Error::Error;
};
struct AsymmetricCotangent : Error {
    using Error::Error;
};
struct SizeCapExceeded : Error {
    using Error::Error;
};
struct NonPowerOfTwo : Error {
    using Error::Error;
};
struct NumericalBreakdown : Error {
    using Error::Error;
};
struct DivergenceDetected : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct InvalidSize : Error {
    using Error::Error;
};
struct InvalidFlag : Error {
    using Error::Error;
};

}  // namespace laplex
