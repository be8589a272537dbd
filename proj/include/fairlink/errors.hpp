#pragma once

#include <stdexcept>
#include <string>

namespace fairlink {

enum class ErrorKind { parse, validation, runtime };

// Base for every error the library raises. The kind drives the CLI exit code
// and the E_PARSE / E_VALIDATE / E_RUNTIME prefix.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class RuntimeFailure : public Error {
public:
    explicit RuntimeFailure(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

}  // namespace fairlink
