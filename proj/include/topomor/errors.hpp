#pragma once

#include <stdexcept>
#include <string>

namespace topomor {

/// Invalid or inconsistent user-supplied setup (grid, patches, config file).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an API precondition (index out of range, size mismatch).
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Operator is singular or not positive definite where it must be.
class SingularOperatorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Conjugate gradient encountered a non-positive curvature direction.
class NumericalBreakdown : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace topomor
