#pragma once

#include <stdexcept>
#include <string>

namespace stgcn {

// Base class for all library failures. Subtypes distinguish contract
// violations from data/environment problems so callers can report them
// precisely.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct ValueError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IOError : Error {
    using Error::Error;
};

}  // namespace stgcn
