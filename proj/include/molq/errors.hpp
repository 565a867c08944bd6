#pragma once

#include <stdexcept>
#include <string>

namespace molq {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform for the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

/// backward() was called on a tensor that is not 1x1.
struct NotScalarError : Error {
    using Error::Error;
};

/// backward() was called on a tensor not produced through the tape.
struct DetachedError : Error {
    using Error::Error;
};

/// Malformed SMILES input (unbalanced brackets, unknown symbol, bad ring closure).
struct SyntaxError : Error {
    using Error::Error;
};

/// Bond-order sum at some atom exceeds the element's maximum valence.
struct ValenceError : Error {
    using Error::Error;
};

/// Molecule exceeds the supported atom count.
struct SizeError : Error {
    using Error::Error;
};

/// Checkpoint/operation task kind does not match the request.
struct TaskMismatchError : Error {
    using Error::Error;
};

/// Monte-Carlo estimators need at least two samples.
struct TooFewSamplesError : Error {
    using Error::Error;
};

/// Dataset too small to split.
struct TooSmallError : Error {
    using Error::Error;
};

/// Training produced a non-finite loss; carries the offending batch index.
struct NonFiniteLossError : Error {
    NonFiniteLossError(const std::string& msg, int batch) : Error(msg), batch_index(batch) {}
    int batch_index;
};

/// File could not be read or written.
struct IoError : Error {
    using Error::Error;
};

}  // namespace molq
