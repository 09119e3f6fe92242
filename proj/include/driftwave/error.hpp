#pragma once

#include <stdexcept>
#include <string>

namespace driftwave {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid parameters or preconditions.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// A position or interval outside the realized drift window.
class OutOfWindow : public Error {
public:
    using Error::Error;
};

// Non-finite propagation, truncation that never settles, or a boundary value
// problem past its spectral threshold.
class Divergence : public Error {
public:
    Divergence(const std::string& what, double where)
        : Error(what), position_(where) {}
    double position() const noexcept { return position_; }

private:
    double position_;
};

}  // namespace driftwave
