#pragma once

#include <stdexcept>
#include <string>

namespace loopperf {

// Caller broke a precondition (shape mismatch, wrong variant, bad config).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A named entity (statement, parameter, program) does not exist.
class LookupError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// A loop level or index outside the valid range.
class BoundsError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Input cannot be represented as features (non-affine index, etc).
class FeaturizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A statement exceeds the fixed capacity of the feature layout.
class CapacityError : public FeaturizationError {
public:
    using FeaturizationError::FeaturizationError;
};

// Malformed or incompatible file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace loopperf
