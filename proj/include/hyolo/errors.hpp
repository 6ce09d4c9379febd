#ifndef HYOLO_ERRORS_HPP
#define HYOLO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hyolo {

/// Root of the project's exception hierarchy. The three branches map
/// to CLI exit codes: ConfigError -> 2, DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

/// Contract violations (bad shapes, out-of-range indices). These indicate
/// caller bugs rather than bad user input and map to exit code 1.
class LogicError : public Error {
public:
    using Error::Error;
};

} // namespace hyolo

#endif
