#pragma once

#include <stdexcept>
#include <string>

namespace scalefit {

/// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind {
    usage = 2,       // bad arguments or preconditions violated by the caller
    input = 3,       // malformed or inconsistent input data
    numerical = 4,   // optimizer or linear algebra failure
    degenerate = 5,  // fit exists but cannot support the requested derivation
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace scalefit
