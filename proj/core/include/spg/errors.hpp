#pragma once

#include <stdexcept>
#include <string>

namespace spg {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind { validation = 2, numeric = 3, io = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& message)
        : Error(ErrorKind::validation, message) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& message)
        : Error(ErrorKind::numeric, message) {}
};

struct IoError : Error {
    explicit IoError(const std::string& message)
        : Error(ErrorKind::io, message) {}
};

// Raised when a slot's increments have zero variance in every coordinate;
// such a Dirac target cannot be trained as a denoiser.
struct DegenerateDataError : ValidationError {
    explicit DegenerateDataError(const std::string& message)
        : ValidationError(message) {}
};

}  // namespace spg
