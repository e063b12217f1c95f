#pragma once

#include <stdexcept>
#include <string>

namespace saccade {

// Precondition failures: wrong shapes, out-of-range indices, non-finite input.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Weight/sidecar container could not be read or failed validation.
class LoadError : public std::runtime_error {
public:
    explicit LoadError(const std::string& what) : std::runtime_error(what) {}
};

// Image file could not be decoded.
class IngestionError : public std::runtime_error {
public:
    explicit IngestionError(const std::string& what) : std::runtime_error(what) {}
};

// Every cell of the working saliency grid has been suppressed.
class ExhaustionError : public std::runtime_error {
public:
    explicit ExhaustionError(const std::string& what) : std::runtime_error(what) {}
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

namespace detail {

inline void require(bool cond, const char* msg) {
    if (!cond) throw ContractViolation(msg);
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

} // namespace detail
} // namespace saccade
