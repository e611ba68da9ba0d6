#pragma once

#include <stdexcept>
#include <string>

namespace minegan {

// Root of every error the library raises. `kind()` is a stable short tag used
// in structured CLI error records.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

class DimensionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "dimension"; }
};

class NumericError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "numeric"; }
};

class GraphReuseError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "graph_reuse"; }
};

class UsageError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "usage"; }
};

class FormatError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "format"; }
};

class IntegrityError : public FormatError {
public:
    using FormatError::FormatError;
    const char* kind() const noexcept override { return "integrity"; }
};

class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }
    const char* kind() const noexcept override { return "config"; }

private:
    std::string key_;
};

} // namespace minegan
