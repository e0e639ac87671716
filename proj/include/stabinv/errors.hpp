#pragma once

#include <stdexcept>
#include <string>

namespace stabinv {

// Bad argument to a public operation (size mismatch, out-of-range count, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Kernel evaluated where the observation point coincides with the source.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical precondition (spectral gap, satisfiable constraints) is violated.
class PreconditionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SampleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ReportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stabinv
