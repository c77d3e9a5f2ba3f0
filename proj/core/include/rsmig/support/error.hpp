#pragma once

#include <stdexcept>
#include <string>

namespace rsmig {

/// Base class for every domain error raised by the toolkit. The CLI maps these
/// to exit code 1; anything else escaping a command is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An external tool (preprocessor, cargo, git) could not be run at all.
class InfrastructureError : public Error {
public:
    using Error::Error;
};

}  // namespace rsmig
