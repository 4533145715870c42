#pragma once

#include <stdexcept>
#include <string>

namespace mcrl {

/// Input that violates a documented contract (bad node id, duplicate click, malformed file).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input that is well-formed but missing pieces (e.g. a fit manifest without every model).
class IncompleteInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure that cannot produce a meaningful answer (separation, rank deficiency).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ValidationError(message);
}

}  // namespace mcrl
