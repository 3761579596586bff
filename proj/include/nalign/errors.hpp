#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nalign {

// Process exit codes used by the CLI. Each error class maps to one of them.
enum class ExitCode : int { ok = 0, validation = 1, integrity = 2, numeric = 3 };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual ExitCode exit_code() const noexcept { return ExitCode::validation; }
};

// Bad arguments, bad config fields, unknown layer names.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Dimension mismatch inside the network engine.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Codebook construction could not meet its distance target.
class CapacityError : public Error {
public:
    using Error::Error;
};

// Malformed binary artifact; carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }
    ExitCode exit_code() const noexcept override { return ExitCode::integrity; }

private:
    std::size_t offset_;
};

// Artifacts missing or not matching their recorded hashes.
class IntegrityError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::integrity; }
};

// The suspect model's layer shape does not match what the evidence was built for.
class TamperError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::integrity; }
};

class NumericError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::numeric; }
};

// Non-finite training loss.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int epoch)
        : NumericError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

// Non-finite loss during input optimization.
class OptimizationError : public NumericError {
public:
    OptimizationError(const std::string& what, int step)
        : NumericError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

}  // namespace nalign
