#pragma once

#include <stdexcept>
#include <string>

namespace kpda {

/// Bad invocation: unknown config key, malformed flag, invalid argument combination.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Anything wrong with input data on disk: missing files, malformed records,
/// checkpoint/config mismatches.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or parameter.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A training operation tried to read target-domain ground truth.
class SupervisionLeakError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace kpda
