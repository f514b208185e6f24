#ifndef STABSEL_ERRORS_HPP
#define STABSEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace stabsel {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("ShapeError: " + msg) {}
};

struct ArgumentError : std::runtime_error {
    explicit ArgumentError(const std::string& msg) : std::runtime_error("ArgumentError: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("FormatError: " + msg) {}
};

struct EmptyMaskError : std::runtime_error {
    explicit EmptyMaskError(const std::string& msg) : std::runtime_error("EmptyMask: " + msg) {}
};

struct DegenerateLabels : std::runtime_error {
    explicit DegenerateLabels(const std::string& msg) : std::runtime_error("DegenerateLabels: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("NumericError: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

} // namespace stabsel

#endif
