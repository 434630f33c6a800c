#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hybridlm {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// A softmax row with every entry masked out.
class DegenerateRowError : public Error {
public:
    DegenerateRowError(std::size_t row, const std::string& msg)
        : Error(msg), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

/// Malformed compression-schedule string.
class ScheduleError : public Error {
public:
    enum class Kind { UnknownMode, RateRange, LayerOrder, Malformed };

    ScheduleError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Bad model configuration (file or programmatic).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace hybridlm
