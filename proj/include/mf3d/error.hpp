#pragma once

// Exception hierarchy. Each family maps onto one CLI exit code:
//   InputError     -> 2 (usage / missing input)
//   FormatError    -> 3 (malformed or inconsistent data)
//   InvariantError -> 4 (internal invariant violated)

#include <stdexcept>
#include <string>

namespace mf3d {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class FormatError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

// A FormatError carrying the 1-based line where parsing stopped.
class ParseError : public FormatError {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : FormatError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class InvariantError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace mf3d
