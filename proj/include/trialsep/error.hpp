#pragma once

#include <stdexcept>
#include <string>

namespace trialsep {

/// Failure category; the CLI maps these onto exit codes.
enum class ErrorKind {
    Config,     ///< invalid parameters or options
    Data,       ///< malformed or inconsistent input data
    Numerical,  ///< a numerical routine hit a singular / degenerate case
    Io,         ///< filesystem failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what)
        , kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what)
{
    throw Error(kind, what);
}

} // namespace trialsep
