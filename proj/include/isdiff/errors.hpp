#pragma once

#include <stdexcept>
#include <string>

namespace isdiff {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments to a library call (empty sample sets, non-positive dt, ...).
struct ArgumentError : Error {
    using Error::Error;
};

// A user-supplied map (drift, diffusion, control, subsolution) produced
// something unusable at a queried point.
struct EvalError : Error {
    using Error::Error;
};

// Unknown problem name or bad parameter key in the built-in catalog.
struct CatalogError : Error {
    using Error::Error;
};

// Batches with incompatible provenance cannot be pooled.
struct MergeError : Error {
    using Error::Error;
};

// Config file rejected (schema, types, unknown keys).
struct ConfigError : Error {
    using Error::Error;
};

// PDE solver failure (CFL cap exceeded, underflow guard, blow-up).
struct PdeError : Error {
    using Error::Error;
};

// Variational solver failure (stencil non-convergence, blow-up).
struct SolveError : Error {
    using Error::Error;
};

}  // namespace isdiff
