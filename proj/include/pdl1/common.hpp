#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pdl1 {

enum class Label : std::uint8_t { negative = 0, positive = 1 };

enum class DatasetId : std::uint8_t { internal = 0, external = 1 };

std::string_view to_string(Label label);
std::string_view to_string(DatasetId id);
Label parse_label(std::string_view text);
DatasetId parse_dataset_id(std::string_view text);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value outside the domain an operation accepts (bad channel, threshold, shape).
class InputDomainError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed or truncated file content. `line` is 0 when not line-oriented.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what, std::size_t line = 0);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class EmptyRoiError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace pdl1
