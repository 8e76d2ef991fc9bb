#pragma once

#include <stdexcept>
#include <string>

namespace setmix {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A coordinate, key, or matrix entry is NaN or infinite.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// A sample/neighbour count is outside [1, N].
class BadCountError : public Error {
public:
    using Error::Error;
};

// PCS reference vector projects to (near-)zero on the sorting plane.
class DegenerateRefError : public Error {
public:
    using Error::Error;
};

class ShapeMismatchError : public Error {
public:
    using Error::Error;
};

class GraphCycleError : public Error {
public:
    using Error::Error;
};

// Cloud handed to a corruption generator exceeds the unit sphere.
class NotNormalizedError : public Error {
public:
    using Error::Error;
};

// Clean/corrupted clouds disagree on point count where equality is required.
class CountMismatchError : public Error {
public:
    using Error::Error;
};

// Checkpoint config hash does not match the requested configuration.
class ChecksumMismatchError : public Error {
public:
    using Error::Error;
};

// RmCE baseline has bm_noise == bm_clean.
class DegenerateBaselineError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace setmix
