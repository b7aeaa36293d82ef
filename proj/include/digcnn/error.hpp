#pragma once

#include <stdexcept>
#include <string>

namespace digcnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape mismatch, misaligned inputs, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Malformed or out-of-range input data. Carries an optional file/line position.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
    DataError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string file_;
    std::size_t line_ = 0;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Every entry of a categorical was masked out.
class InvalidDistribution : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    enum class Kind { NotACheckpoint, UnsupportedVersion, Truncated, ShapeMismatch, Io };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace digcnn
