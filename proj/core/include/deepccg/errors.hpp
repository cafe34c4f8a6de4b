#pragma once

#include <stdexcept>
#include <string>

namespace deepccg {

/// Invalid experiment or dataset configuration (bad sizes, indivisible
/// class counts, insufficient examples). Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input text (CSV rows, JSON configs). Maps to CLI exit code 1.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/vector dimension mismatch between co-operating values.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Non-finite values where finite arithmetic is required; the offending
/// update is refused rather than propagated.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A documented precondition was violated by the caller.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace deepccg
