#ifndef MOTORID_ERROR_HPP
#define MOTORID_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace motorid {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; carries the 1-based line number (0 when unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Invalid configuration values or ranges.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An evaluation protocol's preconditions do not hold for the given corpus.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace motorid

#endif
