#pragma once

#include <stdexcept>
#include <string>

namespace flimsod {

/// Raised on invalid input, malformed files, and violated preconditions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an operation has no meaningful answer for its input (e.g. Otsu on a constant set).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

}  // namespace flimsod
