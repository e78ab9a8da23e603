#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace cbnn {

// Precondition failures use std::invalid_argument directly. The types below
// carry failures that callers are expected to distinguish.

/// Malformed input data. `row` is 1-based when known, 0 otherwise.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t row = 0)
        : std::runtime_error(row ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Raised when a gradient step produces a non-finite loss or gradient.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& reason, std::size_t step)
        : std::runtime_error(reason + " at step " + std::to_string(step)), reason_(reason), step_(step) {}
    const std::string& reason() const noexcept { return reason_; }
    std::size_t step() const noexcept { return step_; }

private:
    std::string reason_;
    std::size_t step_;
};

class UndefinedCorrelation : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class DegenerateBasis : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class StorageError : public std::runtime_error {
public:
    StorageError(const std::string& what, std::filesystem::path path)
        : std::runtime_error(what + ": " + path.string()), path_(std::move(path)) {}
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

class ChecksumError : public StorageError {
public:
    using StorageError::StorageError;
};

class UnsupportedVersion : public StorageError {
public:
    using StorageError::StorageError;
};

class ShapeMismatch : public StorageError {
public:
    using StorageError::StorageError;
};

class DanglingReference : public StorageError {
public:
    using StorageError::StorageError;
};

}  // namespace cbnn
