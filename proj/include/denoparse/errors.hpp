#pragma once

#include <stdexcept>
#include <string>

namespace denoparse {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: malformed files, out-of-range config values.
struct ValidationError : Error {
    using Error::Error;
};

// Filesystem-level failures (missing files, short reads).
struct IoError : Error {
    using Error::Error;
};

// A division node whose right subtree evaluates to zero.
struct DivisionByZeroError : Error {
    using Error::Error;
};

// Rational arithmetic left the 64-bit range.  Never happens for the
// bounded expression space this project generates; kept as a hard error
// so silent wraparound is impossible.
struct OverflowError : Error {
    using Error::Error;
};

// Candidate lookup for an operand count the index file does not cover.
struct IndexMissingError : Error {
    using Error::Error;
};

// Attention over an empty annotation sequence (all-PAD source).
struct AllMaskedError : Error {
    using Error::Error;
};

// Candidate scoring with nothing to score.
struct EmptyCandidatesError : Error {
    using Error::Error;
};

}  // namespace denoparse
