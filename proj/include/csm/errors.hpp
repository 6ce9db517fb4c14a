#pragma once

#include <stdexcept>
#include <string>

namespace csm {

// Base for all pipeline errors. Subclasses map to CLI exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad config, bad input files, contract violations. Exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

// Transport/model failures, malformed model output. Exit code 3.
struct BackendError : Error {
    using Error::Error;
};

// Stage ordering or staleness problems. Exit code 4.
struct DependencyError : Error {
    using Error::Error;
};

}  // namespace csm
